"""AoD-based localisation, reliable-anchor selection, MT array-direction
estimation, position-aided refinement and blockage decisions.

Angles are handled in each anchor's own array frame. For an IRS link the
estimator returns the equivalent AoD ``phi_RM (-) theta_BR``; the anchor-frame
AoD is recovered as ``phi_hat (+) theta_BR``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Anchor
from .estimator import PathEstimate, estimate_delta
from .geometry import GeometryError, clamp_cos, cos_add, cos_sub, cosine_of_direction, unit
from .sounding import SoundingSession


class PositioningError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionPolicy:
    """``xi_th`` bounds the per-anchor Taylor cost; ``pl_th_db`` the pathloss gap."""

    xi_th: float = 0.005**2
    pl_th_db: float = 6.0

    def __post_init__(self):
        if self.xi_th <= 0 or self.pl_th_db <= 0:
            raise ValueError("selection thresholds must be positive")


@dataclass(frozen=True, eq=False)
class AnchorObservation:
    """ML output of one link together with the anchor it was measured from.

    ``theta_br`` is the known BS-to-IRS incidence cosine (``nan`` for the BS).
    """

    anchor: Anchor
    estimate: PathEstimate
    session: SoundingSession | None = None
    theta_br: float = float("nan")

    @property
    def eta(self) -> int:
        return self.anchor.eta

    @property
    def aod(self) -> float:
        """Estimated AoD in the anchor's own array frame."""
        if self.anchor.eta == 1:
            return self.estimate.phi
        return cos_add(self.estimate.phi, self.theta_br)


@dataclass(frozen=True)
class TaylorResult:
    position: np.ndarray
    cost: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ReliableSet:
    etas: tuple
    position: np.ndarray
    cost: float
    low_confidence: bool
    # (k, cost / k) for every k tried; nan where the geometry was degenerate
    trace: tuple = ()


@dataclass(frozen=True)
class DirectionResult:
    direction: np.ndarray
    cost: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class PositionFix:
    """Result of one localisation; per-anchor arrays are indexed by ``eta - 1``."""

    position: np.ndarray
    mt_direction: np.ndarray
    reliable: tuple
    cost: float
    low_confidence: bool
    theta_star: np.ndarray
    phi_star: np.ndarray
    delta_star: np.ndarray
    zeta_star: np.ndarray
    taylor_iterations: int = 0
    direction_cost: float = float("nan")
    trace: tuple = field(default=())

    def as_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "mt_direction": [float(v) for v in self.mt_direction],
            "reliable": [int(e) for e in self.reliable],
            "cost": float(self.cost),
            "low_confidence": bool(self.low_confidence),
            "theta_star": [float(v) for v in self.theta_star],
            "phi_star": [float(v) for v in self.phi_star],
            "delta_star_abs": [float(abs(v)) for v in self.delta_star],
            "zeta_star": [int(v) for v in self.zeta_star],
            "taylor_iterations": int(self.taylor_iterations),
            "direction_cost": float(self.direction_cost),
        }


def aod_of_position(p, anchor: Anchor) -> float:
    return cosine_of_direction(p, anchor.position, anchor.direction)


def aod_jacobian(p, anchor: Anchor) -> np.ndarray:
    """Gradient of ``aod_of_position`` with respect to ``p``."""
    r = np.asarray(p, dtype=float) - anchor.position
    n = np.linalg.norm(r)
    if n == 0.0:
        raise GeometryError("degenerate geometry: coincident points")
    e = anchor.direction
    return (n * e - (r @ e) * r / n) / n**2


def _anchor_arrays(anchors) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([a.position for a in anchors], dtype=float).reshape(-1, 3)
    dirs = np.array([a.direction for a in anchors], dtype=float).reshape(-1, 3)
    return pos, dirs


def _predicted_aods(p, pos, dirs) -> np.ndarray:
    r = p - pos
    n = np.sqrt(np.einsum("ij,ij->i", r, r))
    if not n.all():
        raise GeometryError("degenerate geometry: coincident points")
    return clamp_cos(np.einsum("ij,ij->i", r, dirs) / n)


def _jacobians(p, pos, dirs) -> np.ndarray:
    """Rows are ``d phi_eta / d p``; shape ``(k, 3)``."""
    r = p - pos
    n = np.sqrt(np.einsum("ij,ij->i", r, r))[:, None]
    c = np.einsum("ij,ij->i", r, dirs)[:, None]
    return (n * dirs - c * r / n) / n**2


def bearing_cost(phi_hat, anchors, p) -> float:
    """Least-squares misfit ``sum (phi_hat (-) phi(p))^2``."""
    pos, dirs = _anchor_arrays(anchors)
    r = cos_sub(np.asarray(phi_hat, float), _predicted_aods(np.asarray(p, float), pos, dirs))
    return float(np.sum(np.square(r)))


def taylor_position(
    phi_hat,
    anchors,
    p0,
    eps: float = 1e-6,
    max_iterations: int = 100,
    bounds=None,
    max_halvings: int = 30,
) -> TaylorResult:
    """Linearised least-squares position update ``(A A^T)^{-1} A d_phi``.

    A step that raises the cost is halved up to ``max_halvings`` times, and
    iterates are clipped to ``bounds = (lo, hi)`` when given.
    """
    anchors = list(anchors)
    phi_hat = np.asarray(phi_hat, dtype=float)
    if len(anchors) < 3 or len(phi_hat) != len(anchors):
        raise PositioningError("insufficient anchors: need at least 3 bearings")
    pos, dirs = _anchor_arrays(anchors)
    lo, hi = (None, None) if bounds is None else (np.asarray(bounds[0]), np.asarray(bounds[1]))
    p = np.asarray(p0, dtype=float).copy()
    r = np.atleast_1d(cos_sub(phi_hat, _predicted_aods(p, pos, dirs)))
    cost = float(r @ r)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        A = _jacobians(p, pos, dirs).T  # 3 x k
        AAt = A @ A.T
        ev = np.linalg.eigvalsh(AAt)
        if not ev[0] > 1e-12 * ev[-1]:
            raise PositioningError("ill-conditioned geometry")
        step = np.linalg.solve(AAt, A @ r)
        for _ in range(max_halvings):
            q = p + step
            if lo is not None:
                q = np.clip(q, lo, hi)
            r_new = np.atleast_1d(cos_sub(phi_hat, _predicted_aods(q, pos, dirs)))
            c_new = float(r_new @ r_new)
            if c_new <= cost:
                break
            step = 0.5 * step
        else:
            converged = True
            break
        moved = np.linalg.norm(q - p)
        p, r, cost = q, r_new, c_new
        if moved < eps:
            converged = True
            break
    return TaylorResult(p, cost, it, converged)


def _grid_starts(phi_hat, anchors, bounds, count: int, shape=(11, 11, 3)) -> list:
    """The ``count`` lowest-cost points of a coarse lattice over ``bounds``."""
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(n) + 0.5) / n for i, n in enumerate(shape)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    cost = np.zeros(len(pts))
    for f, a in zip(phi_hat, anchors):
        d = pts - a.position
        pred = (d @ a.direction) / np.linalg.norm(d, axis=1)
        cost += cos_sub(f, pred) ** 2
    return [pts[i] for i in np.argsort(cost, kind="stable")[:count]]


def multistart_position(phi_hat, anchors, p0, bounds=None, starts: int = 4, **kw) -> TaylorResult:
    """Taylor iteration from ``p0`` and from the best coarse-lattice points.

    The lowest final cost wins (earlier starts win ties). Without ``bounds``
    this reduces to a single run from ``p0``.
    """
    cands = [np.asarray(p0, float)]
    if bounds is not None and starts > 0:
        cands += _grid_starts(phi_hat, anchors, bounds, starts)
    best = None
    err = None
    for c in cands:
        try:
            res = taylor_position(phi_hat, anchors, c, bounds=bounds, **kw)
        except PositioningError as exc:
            err = exc
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise err
    return best


def build_reliable_set(
    observations,
    policy: SelectionPolicy = SelectionPolicy(),
    p0=None,
    bounds=None,
    starts: int = 4,
    eps: float = 1e-6,
) -> ReliableSet:
    """Grow the anchor set in order of increasing residual ratio.

    For ``k = 3 .. K`` the ``k`` most reliable anchors are localised; the
    largest ``k`` with ``cost / k <= xi_th`` wins. If no ``k`` qualifies the
    ``k = 3`` fix is returned with ``low_confidence`` set.
    """
    obs = list(observations)
    if len(obs) < 3:
        raise PositioningError("insufficient anchors: need at least 3 observations")
    order = sorted(range(len(obs)), key=lambda i: (obs[i].estimate.residual, obs[i].eta))
    if p0 is None:
        p0 = default_initial_guess(bounds)
    fits = {}
    trace = []
    for k in range(3, len(obs) + 1):
        chosen = [obs[i] for i in order[:k]]
        anchors = [o.anchor for o in chosen]
        aods = [o.aod for o in chosen]
        try:
            res = multistart_position(aods, anchors, p0, bounds=bounds, starts=starts, eps=eps)
        except PositioningError:
            trace.append((k, float("nan")))
            continue
        fits[k] = (tuple(o.eta for o in chosen), res)
        trace.append((k, res.cost / k))
    good = [k for k, (_, res) in fits.items() if res.cost / k <= policy.xi_th]
    if good:
        k, low = max(good), False
    elif fits:
        k, low = min(fits), True
    else:
        raise PositioningError("ill-conditioned geometry for every candidate set")
    etas, res = fits[k]
    return ReliableSet(etas, res.position, res.cost, low, tuple(trace))


def default_initial_guess(bounds=None, altitude: float = 1.3) -> np.ndarray:
    """Hall centroid in the horizontal plane at a typical MT altitude."""
    if bounds is None:
        return np.array([0.0, 0.0, altitude])
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    c = 0.5 * (lo + hi)
    c[2] = altitude
    return c


def _direction_cost(e, P, theta_hat) -> tuple[float, np.ndarray]:
    r = np.atleast_1d(cos_sub(P.T @ e, theta_hat))
    return float(r @ r), r


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` nearly uniform unit vectors, shape ``(n, 3)``."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z**2)
    ang = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(ang), rho * np.sin(ang), z], axis=1)


def _descend_direction(e, P, theta_hat, lam, iterations, tol):
    cost, r = _direction_cost(e, P, theta_hat)
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        grad = P @ r
        for _ in range(40):
            e_new = e - lam * grad
            nrm = np.linalg.norm(e_new)
            if nrm > 0:
                e_new = e_new / nrm
                c_new, r_new = _direction_cost(e_new, P, theta_hat)
                if c_new <= cost:
                    break
            lam *= 0.5
        else:
            converged = True
            break
        moved = float(np.sum((e_new - e) ** 2))
        e, cost, r = e_new, c_new, r_new
        lam *= 1.5
        if moved <= tol:
            converged = True
            break
    return DirectionResult(e, cost, it, converged)


def estimate_mt_direction(
    p,
    theta_hat,
    anchors,
    step: float | None = None,
    iterations: int = 200,
    e0=None,
    tol: float = 1e-14,
    lattice: int = 400,
) -> DirectionResult:
    """Unit vector ``e`` minimising ``sum (P^T e (-) theta_hat)^2``.

    Column ``eta`` of ``P`` is the unit bearing from anchor ``eta`` to ``p``.
    Projected gradient descent: step along ``-P (P^T e (-) theta_hat)``, then
    renormalise, halving the step whenever the cost would increase.

    Without ``e0`` two starts are descended and the lower cost is kept: the
    normalised unconstrained least-squares solution, and the best point of a
    ``lattice``-point sphere covering (which survives bearings that wrap
    around +-1).
    """
    p = np.asarray(p, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    anchors = list(anchors)
    if len(anchors) < 3:
        raise PositioningError("insufficient anchors: need at least 3 bearings")
    P = np.stack([unit(p - a.position) for a in anchors], axis=1)
    lam = step if step is not None else 0.5 / np.linalg.norm(P, 2) ** 2
    if e0 is not None:
        starts = [unit(e0)]
    else:
        sol = np.linalg.lstsq(P.T, theta_hat, rcond=None)[0]
        starts = [unit(sol) if np.linalg.norm(sol) > 0 else unit(P[:, 0])]
        if lattice > 0:
            pts = fibonacci_sphere(lattice)
            r = cos_sub(pts @ P, theta_hat[None, :])
            starts.append(pts[int(np.argmin(np.sum(r**2, axis=1)))])
    best = None
    for e in starts:
        res = _descend_direction(e, P, theta_hat, lam, iterations, tol)
        if best is None or res.cost < best.cost:
            best = res
    return best


def refine_angles(p, e_mt, anchor: Anchor) -> tuple[float, float]:
    """``(theta*, phi*)`` from geometry; ``phi*`` is in the anchor frame."""
    theta = cosine_of_direction(p, anchor.position, e_mt)
    phi = aod_of_position(p, anchor)
    return theta, phi


def refined_delta(theta: float, phi: float, session: SoundingSession) -> complex:
    """Closed-form gain at estimator-domain angles, power scaling removed."""
    return estimate_delta(theta, phi, session.sensing, session.y) / session.gain_scale


def pathloss_from_position(
    p,
    anchor: Anchor,
    wavelength: float,
    reflection_loss: float,
    tx_power: float,
    n_bs: int,
    bs_position=None,
) -> float:
    """Free-space amplitude ``|delta_eta(p)|`` including the transmit power.

    BS link: ``sqrt(P) lam / (4 pi d_BM)``. IRS link:
    ``sqrt(xi P N_B) lam / (4 pi (d_BR + d_RM))`` with ``d_BR`` measured from
    ``bs_position``.
    """
    p = np.asarray(p, dtype=float)
    d = float(np.linalg.norm(p - anchor.position))
    if anchor.eta == 1:
        if d == 0.0:
            raise GeometryError("degenerate geometry: coincident points")
        return float(np.sqrt(tx_power) * wavelength / (4 * np.pi * d))
    if bs_position is None:
        raise ValueError("bs_position is required for IRS links")
    d_br = float(np.linalg.norm(anchor.position - np.asarray(bs_position, float)))
    if d_br + d == 0.0:
        raise GeometryError("degenerate geometry: coincident points")
    amp = np.sqrt(reflection_loss * tx_power * n_bs)
    return float(amp * wavelength / (4 * np.pi * (d_br + d)))


def decide_blockage(delta_star, reference: float, pl_th_db: float = 6.0) -> int:
    """1 iff the measured and predicted pathlosses differ by at most ``pl_th_db``."""
    if reference <= 0:
        raise ValueError("reference amplitude must be positive")
    a = abs(delta_star)
    if a == 0.0:
        return 0
    gap = abs(20.0 * np.log10(reference / a))
    return int(gap <= pl_th_db)


def locate(
    observations,
    *,
    wavelength: float,
    reflection_loss: float,
    tx_power: float,
    policy: SelectionPolicy = SelectionPolicy(),
    bounds=None,
    p0=None,
    eps: float = 1e-6,
) -> PositionFix:
    """Position, MT direction, refined angles/gains and blockage for every anchor.

    ``observations`` must hold one entry per anchor, BS first, each with its
    sounding session attached.
    """
    obs = sorted(observations, key=lambda o: o.eta)
    if not obs or obs[0].eta != 1:
        raise PositioningError("observations must include the BS link")
    rel = build_reliable_set(obs, policy, p0=p0, bounds=bounds, eps=eps)
    p = rel.position
    by_eta = {o.eta: o for o in obs}
    chosen = [by_eta[e] for e in rel.etas]
    direction = estimate_mt_direction(
        p, [o.estimate.theta for o in chosen], [o.anchor for o in chosen]
    )
    bs = obs[0].anchor
    n_b = bs.array.size
    thetas, phis, deltas, zetas = [], [], [], []
    for o in obs:
        th, ph = refine_angles(p, direction.direction, o.anchor)
        # estimator-domain AoD for IRS links is the equivalent angle
        ph_eq = ph if o.eta == 1 else cos_sub(ph, o.theta_br)
        d = refined_delta(th, ph_eq, o.session)
        ref = pathloss_from_position(
            p, o.anchor, wavelength, reflection_loss, tx_power, n_b, bs.position
        )
        z = decide_blockage(d * o.session.gain_scale, ref, policy.pl_th_db)
        thetas.append(th)
        phis.append(ph)
        deltas.append(d)
        zetas.append(z)
    return PositionFix(
        position=p,
        mt_direction=direction.direction,
        reliable=rel.etas,
        cost=rel.cost,
        low_confidence=rel.low_confidence,
        theta_star=np.array(thetas),
        phi_star=np.array(phis),
        delta_star=np.array(deltas),
        zeta_star=np.array(zetas, dtype=int),
        direction_cost=direction.cost,
        trace=rel.trace,
    )
