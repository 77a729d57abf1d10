"""Maximum-likelihood estimation of (delta, theta, phi) from one sounding session.

The concentrated likelihood is ``g(theta, phi) = |b^H D^H y|^2 / ||D b||^2``.
It is maximised by a cyclic grid search followed by wrapped gradient ascent;
the gain then has the closed form ``b^H D^H y / ||D b||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import cos_add, cos_sub, steering_vector
from .sounding import SensingMatrix, SoundingSession


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    z_theta: int = 64
    z_phi: int = 64
    n_peaks: int = 5

    def __post_init__(self):
        if self.z_theta < 4 or self.z_phi < 4 or self.n_peaks < 1:
            raise ValueError("need z_theta, z_phi >= 4 and n_peaks >= 1")

    @classmethod
    def for_arrays(cls, n_rx: int, n_tx: int, n_peaks: int = 5) -> "GridSpec":
        z = max(4 * max(n_rx, n_tx), 4)
        return cls(z, z, n_peaks)


@dataclass(frozen=True)
class FineSearchConfig:
    """Wrapped gradient ascent on the normalised objective ``g / ||y||^2``.

    ``step`` is the initial step length. Later lengths follow the
    Barzilai-Borwein rule and are halved (up to ``max_halvings`` times)
    whenever a move would decrease ``g``.
    """

    step: float = 1e-3
    eps: float = 1e-16
    max_iterations: int = 50
    max_halvings: int = 40

    def __post_init__(self):
        if self.step <= 0 or self.eps <= 0 or self.max_iterations < 1:
            raise ValueError("fine-search parameters must be positive")


@dataclass(frozen=True)
class FineResult:
    theta: float
    phi: float
    value: float
    iterations: int
    converged: bool
    history: tuple = ()


@dataclass(frozen=True)
class PathEstimate:
    delta: complex
    theta: float
    phi: float
    residual: float
    objective: float
    iterations: int = 0
    converged: bool = True
    candidates: int = 0

    def as_dict(self) -> dict:
        return {
            "delta_re": self.delta.real,
            "delta_im": self.delta.imag,
            "theta": self.theta,
            "phi": self.phi,
            "residual": self.residual,
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _ramp(n: int) -> np.ndarray:
    return 1j * np.pi * np.arange(n)


def objective_g(theta, phi, sensing: SensingMatrix, y) -> float:
    """``|b^H D^H y|^2 / ||D b||^2`` at one angle pair."""
    u = sensing.steer(theta, phi)
    s = np.vdot(u, u).real
    if s <= 0:
        raise EstimationError("projected steering vector has zero norm")
    return abs(np.vdot(u, y)) ** 2 / s


def _value_and_grad(theta, phi, sensing: SensingMatrix, y):
    a_r = steering_vector(sensing.n_rx, theta)
    a_t = steering_vector(sensing.n_tx, phi)
    u = sensing.project(a_r, a_t)
    u_th = sensing.project(a_r * _ramp(sensing.n_rx), a_t)
    # d/dphi of conj(a_t) is conj(a_t * ramp)
    u_ph = sensing.project(a_r, a_t * _ramp(sensing.n_tx))
    s = np.vdot(u, u).real
    if s <= 0:
        raise EstimationError("projected steering vector has zero norm")
    c = np.vdot(u, y)
    g = abs(c) ** 2 / s
    grads = []
    for du in (u_th, u_ph):
        grads.append(2 * (c * np.vdot(y, du) / s - g / s * np.vdot(u, du)).real)
    return g, grads[0], grads[1]


def gradient_g(theta, phi, sensing: SensingMatrix, y):
    """Analytic ``(dg/dtheta, dg/dphi)``."""
    _, gt, gp = _value_and_grad(theta, phi, sensing, y)
    return gt, gp


def grid_angles(z: int) -> np.ndarray:
    """Cell centres ``-1 + (2i - 1)/z``, ``i = 1..z``."""
    return -1.0 + (2.0 * np.arange(1, z + 1) - 1.0) / z


def objective_grid(sensing: SensingMatrix, y, grid: GridSpec) -> np.ndarray:
    """``g`` on the full coarse grid, shape ``(z_theta, z_phi)``."""
    th = grid_angles(grid.z_theta)
    ph = grid_angles(grid.z_phi)
    A_r = steering_vector(sensing.n_rx, th)
    A_t = steering_vector(sensing.n_tx, ph)
    if sensing.factored:
        # (D b)_n = (m_n^H a_rx(theta)) (f_n^T conj(a_tx(phi)))
        R = sensing.rx.conj() @ A_r
        T = sensing.tx @ A_t.conj()
        num = np.abs((R.conj() * y[:, None]).T @ T.conj()) ** 2
        den = (np.abs(R) ** 2).T @ (np.abs(T) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, num / den, 0.0)
    # U[n, i, k] = (D b(theta_i, phi_k))_n
    U = np.einsum("ntr,tk,ri->nik", sensing.cube, A_t.conj(), A_r, optimize=True)
    num = np.abs(np.einsum("nik,n->ik", U.conj(), y)) ** 2
    den = np.einsum("nik,nik->ik", U.conj(), U).real
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(den > 0, num / den, 0.0)
    return G


def coarse_search(sensing: SensingMatrix, y, grid: GridSpec) -> list:
    """Up to ``n_peaks`` strict 4-neighbour maxima of ``g`` (cyclic grid).

    Sorted by ``g`` descending, ties broken by lowest (theta, phi). When the
    grid has no strict maximum the global argmax is returned.
    """
    G = objective_grid(sensing, y, grid)
    th = grid_angles(grid.z_theta)
    ph = grid_angles(grid.z_phi)
    peak = (
        (G > np.roll(G, 1, axis=0))
        & (G > np.roll(G, -1, axis=0))
        & (G > np.roll(G, 1, axis=1))
        & (G > np.roll(G, -1, axis=1))
    )
    ii, kk = np.nonzero(peak)
    if len(ii) == 0:
        i, k = np.unravel_index(np.argmax(G), G.shape)
        return [(float(th[i]), float(ph[k]))]
    # nonzero is already lexicographic; stable sort keeps that for ties
    order = np.argsort(-G[ii, kk], kind="stable")[: grid.n_peaks]
    return [(float(th[ii[j]]), float(ph[kk[j]])) for j in order]


def fine_search(start, sensing: SensingMatrix, y, cfg: FineSearchConfig = FineSearchConfig(),
                record: bool = False) -> FineResult:
    """Wrapped gradient ascent from ``start`` with backtracking.

    Stops when the squared wrapped step is at most ``cfg.eps`` or after
    ``cfg.max_iterations``. The returned value never falls below ``g(start)``.
    """
    theta, phi = float(start[0]), float(start[1])
    scale = float(np.vdot(y, y).real)
    if scale == 0.0:
        return FineResult(theta, phi, 0.0, 0, True)
    g, gt, gp = _value_and_grad(theta, phi, sensing, y)
    g, gt, gp = g / scale, gt / scale, gp / scale
    lam = cfg.step
    history = [g] if record else None
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        moved = False
        for _ in range(cfg.max_halvings):
            t_new = cos_add(theta, lam * gt)
            p_new = cos_add(phi, lam * gp)
            g_new, gt_new, gp_new = _value_and_grad(t_new, p_new, sensing, y)
            g_new, gt_new, gp_new = g_new / scale, gt_new / scale, gp_new / scale
            if g_new >= g:
                moved = True
                break
            lam *= 0.5
        if not moved:
            converged = True
            break
        s_t, s_p = cos_sub(t_new, theta), cos_sub(p_new, phi)
        step2 = s_t**2 + s_p**2
        # Barzilai-Borwein length for the next step (ascent: curvature < 0)
        curv = s_t * (gt_new - gt) + s_p * (gp_new - gp)
        lam = step2 / -curv if curv < 0 else 2.0 * lam
        theta, phi, g, gt, gp = t_new, p_new, g_new, gt_new, gp_new
        if record:
            history.append(g)
        if step2 <= cfg.eps:
            converged = True
            break
    return FineResult(theta, phi, g * scale, it, converged, tuple(history or ()))


def estimate_delta(theta, phi, sensing: SensingMatrix, y) -> complex:
    """Least-squares gain ``b^H D^H y / ||D b||^2``."""
    u = sensing.steer(theta, phi)
    s = np.vdot(u, u).real
    if s <= 0:
        raise EstimationError("projected steering vector has zero norm")
    return complex(np.vdot(u, y) / s)


def residual_ratio(y, delta, theta, phi, sensing: SensingMatrix) -> float:
    """Fraction of ``||y||^2`` left after removing ``delta D b(theta, phi)``."""
    e = float(np.vdot(y, y).real)
    if e == 0.0:
        raise EstimationError("residual ratio undefined for y = 0")
    r = y - delta * sensing.steer(theta, phi)
    return float(min(max(np.vdot(r, r).real / e, 0.0), 1.0))


def estimate_path(
    session: SoundingSession,
    grid: GridSpec | None = None,
    cfg: FineSearchConfig = FineSearchConfig(),
) -> PathEstimate:
    """Coarse grid, fine ascent from each peak, keep the best, then the gain.

    The returned gain is divided by ``session.gain_scale`` so it estimates the
    power-free path gain.
    """
    sensing, y = session.sensing, session.y
    if grid is None:
        grid = GridSpec.for_arrays(sensing.n_rx, sensing.n_tx)
    best = None
    cands = coarse_search(sensing, y, grid)
    for c in cands:
        r = fine_search(c, sensing, y, cfg)
        # strict > keeps the earlier (higher coarse peak) candidate on ties
        if best is None or r.value > best.value:
            best = r
    delta = estimate_delta(best.theta, best.phi, sensing, y)
    if np.vdot(y, y).real > 0:
        varpi = residual_ratio(y, delta, best.theta, best.phi, sensing)
    else:
        varpi = 1.0
    return PathEstimate(
        delta=delta / session.gain_scale,
        theta=best.theta,
        phi=best.phi,
        residual=varpi,
        objective=best.value,
        iterations=best.iterations,
        converged=best.converged,
        candidates=len(cands),
    )
