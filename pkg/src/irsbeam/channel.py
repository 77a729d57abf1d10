"""Scenario sampling, blockage evaluation and LoS / NLoS / VLoS channel synthesis.

Path gains produced here never contain the transmit power; the sounding layer
applies ``sqrt(P_Tx)`` (or ``sqrt(P_Tx N_B)`` for reflected links) once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .geometry import (
    ArrayGeometry,
    Box,
    clamp_cos,
    cos_sub,
    cosine_of_direction,
    segments_hit_boxes,
    steering_vector,
    unit,
)

SPEED_OF_LIGHT = 299_792_458.0

BS_POSITION = (0.0, 0.0, 5.0)
BS_DIRECTION = (np.sqrt(2) / 2, np.sqrt(2) / 2, 0.0)
IRS_POSITIONS = (
    (5, -10, 3.5), (5, 10, 3.5), (0, -10, 3.5), (0, 10, 3.5),
    (-5, -10, 3.5), (-5, 10, 3.5), (-10, 5, 3.5), (10, 5, 3.5),
    (-10, 0, 3.5), (10, 0, 3.5), (-10, -5, 3.5), (10, -5, 3.5),
)
IRS_DIRECTIONS = (
    (0, 0, 1), (1, 0, 0), (0, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 0),
    (0, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 0), (0, 1, 0), (0, 1, 0),
)
USER_SIZE = (0.6, 0.4, 1.7)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class Anchor:
    """BS (``eta == 1``) or IRS (``eta >= 2``) with a known pose."""

    kind: str
    eta: int
    position: np.ndarray
    array: ArrayGeometry

    def __post_init__(self):
        if self.kind not in ("BS", "IRS"):
            raise ValueError(f"unknown anchor kind {self.kind!r}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @property
    def direction(self) -> np.ndarray:
        return self.array.direction


@lru_cache(maxsize=8)
def default_anchors(n_bs: int = 16, n_irs: int = 16) -> tuple[Anchor, ...]:
    """BS plus the twelve wall-mounted IRSs of the reference lecture hall."""
    anchors = [Anchor("BS", 1, BS_POSITION, ArrayGeometry(n_bs, unit(BS_DIRECTION)))]
    for i, (p, e) in enumerate(zip(IRS_POSITIONS, IRS_DIRECTIONS)):
        anchors.append(Anchor("IRS", i + 2, p, ArrayGeometry(n_irs, unit(e))))
    return tuple(anchors)


@dataclass(frozen=True)
class ScenarioConfig:
    """World parameters a trial's scenario is drawn from."""

    hall_lo: tuple = (-10.0, -10.0, 0.0)
    hall_hi: tuple = (10.0, 10.0, 5.0)
    mt_altitude: tuple = (1.2, 1.4)
    users: int = 100
    user_size: tuple = USER_SIZE
    frequency_hz: float = 28e9
    reflection_loss_db: float = 13.0
    tx_power_dbm: float = 15.0
    noise_dbm: float = -84.0
    nlos_count: int = 4
    nlos_power_gap_db: float = 20.0
    n_bs: int = 16
    n_mt: int = 16
    n_irs_elements: int = 16
    n_irs: int = 12
    rejection_budget: int = 10_000
    # False idealises IRS sounding: the BS-MT paths do not leak through the BS beam
    step2_leakage: bool = True

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz


@dataclass(frozen=True)
class Scenario:
    anchors: tuple
    obstacles: tuple
    mt_position: np.ndarray
    mt_array: ArrayGeometry
    wavelength: float
    reflection_loss: float
    tx_power: float
    noise_power: float
    nlos_count: int = 0
    nlos_power_gap_db: float = 20.0
    hall_lo: np.ndarray = field(default_factory=lambda: np.array([-10.0, -10.0, 0.0]))
    hall_hi: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 5.0]))

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.tx_power <= 0 or self.noise_power <= 0:
            raise ValueError("powers must be positive")
        if not 0 < self.reflection_loss <= 1:
            raise ValueError("reflection loss must be in (0, 1]")
        kinds = [a.kind for a in self.anchors]
        if kinds.count("BS") != 1 or self.anchors[0].kind != "BS":
            raise ValueError("exactly one BS anchor, listed first")
        if [a.eta for a in self.anchors] != list(range(1, len(self.anchors) + 1)):
            raise ValueError("anchor indices must run 1..N_IRS+1")
        object.__setattr__(self, "mt_position", np.asarray(self.mt_position, float))
        object.__setattr__(self, "hall_lo", np.asarray(self.hall_lo, float))
        object.__setattr__(self, "hall_hi", np.asarray(self.hall_hi, float))

    @property
    def bs(self) -> Anchor:
        return self.anchors[0]

    @property
    def irs(self) -> tuple:
        return self.anchors[1:]


@dataclass(frozen=True)
class LinkState:
    """Blockage indicators, ``zeta[eta - 1]`` for anchor ``eta``."""

    zeta: np.ndarray

    @property
    def n_blocked(self) -> int:
        return int(np.sum(self.zeta == 0))


def _random_unit(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def sample_user_centers(n_users: int, rng, cfg: ScenarioConfig = ScenarioConfig()):
    """Draw ``n_users`` non-overlapping footprint centres in the hall.

    Returns an ``(n_users, 2)`` array of (x, y). Raises ``ScenarioError`` when
    the rejection budget is exhausted.
    """
    sx, sy = cfg.user_size[0], cfg.user_size[1]
    lo, hi = np.asarray(cfg.hall_lo[:2], float), np.asarray(cfg.hall_hi[:2], float)
    centers = np.empty((n_users, 2))
    count = 0
    tries = 0
    batch = np.empty((0, 2))
    pos = 0
    while count < n_users:
        if tries >= cfg.rejection_budget:
            raise ScenarioError(
                f"rejection budget exhausted after placing {count}/{n_users} users"
            )
        if pos == len(batch):
            batch = rng.uniform(lo, hi, size=(max(n_users - count, 8), 2))
            pos = 0
        cand = batch[pos]
        pos += 1
        tries += 1
        if count:
            d = np.abs(centers[:count] - cand)
            if ((d[:, 0] < sx) & (d[:, 1] < sy)).any():
                continue
        centers[count] = cand
        count += 1
    return centers


def sample_scenario(cfg: ScenarioConfig, rng) -> Scenario:
    """Draw one world state: the MT, its array pose and the other users.

    User 0 holds the MT; its own body is not an occluder. ``cfg.users`` counts
    all users including the MT holder.
    """
    n_users = max(int(cfg.users), 1)
    xy = sample_user_centers(n_users, rng, cfg)
    z = rng.uniform(*cfg.mt_altitude)
    mt = np.array([xy[0, 0], xy[0, 1], z])
    half = np.asarray(cfg.user_size, float) / 2
    obstacles = tuple(
        Box(np.array([x, y, half[2]]), half.copy()) for x, y in xy[1:]
    )
    mt_array = ArrayGeometry(cfg.n_mt, _random_unit(rng))
    return Scenario(
        anchors=default_anchors(cfg.n_bs, cfg.n_irs_elements)[: cfg.n_irs + 1],
        obstacles=obstacles,
        mt_position=mt,
        mt_array=mt_array,
        wavelength=cfg.wavelength,
        reflection_loss=float(db_to_linear(-cfg.reflection_loss_db)),
        tx_power=float(dbm_to_watt(cfg.tx_power_dbm)),
        noise_power=float(dbm_to_watt(cfg.noise_dbm)),
        nlos_count=cfg.nlos_count,
        nlos_power_gap_db=cfg.nlos_power_gap_db,
        hall_lo=np.asarray(cfg.hall_lo, float),
        hall_hi=np.asarray(cfg.hall_hi, float),
    )


def compute_blockage(scenario: Scenario) -> LinkState:
    """zeta_1 for BS-MT; zeta_eta (eta >= 2) needs both BS-IRS and IRS-MT clear."""
    bs = scenario.bs.position
    mt = scenario.mt_position
    irs = np.array([a.position for a in scenario.irs]).reshape(-1, 3)
    starts = np.vstack([bs[None], irs, np.repeat(bs[None], len(irs), axis=0)])
    ends = np.vstack([mt[None], np.repeat(mt[None], len(irs), axis=0), irs])
    if scenario.obstacles:
        lo = np.array([b.lo for b in scenario.obstacles])
        hi = np.array([b.hi for b in scenario.obstacles])
        clear = ~segments_hit_boxes(starts, ends, lo, hi).any(axis=1)
    else:
        clear = np.ones(len(starts), dtype=bool)
    n = len(irs)
    zeta = np.empty(n + 1, dtype=int)
    zeta[0] = clear[0]
    zeta[1:] = clear[1 : n + 1] & clear[n + 1 :]
    return LinkState(zeta)


def los_gain(d: float, wavelength: float) -> complex:
    """Free-space LoS gain ``lambda e^{-j 2 pi d / lambda} / (4 pi d)``."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return complex(wavelength * np.exp(-2j * np.pi * d / wavelength) / (4 * np.pi * d))


def vlos_gain(d_br: float, d_rm: float, xi: float, wavelength: float) -> complex:
    """Reflected-path gain before the array factor of the IRS."""
    if d_br <= 0 or d_rm < 0:
        raise ValueError("distances must be positive")
    if not 0 < xi <= 1:
        raise ValueError("reflection loss must be in (0, 1]")
    d = d_br + d_rm
    return complex(np.sqrt(xi) * wavelength * np.exp(-2j * np.pi * d / wavelength) / (4 * np.pi * d))


def optimal_reflection(n: int, phi_rm: float, theta_br: float) -> np.ndarray:
    return steering_vector(n, cos_sub(phi_rm, theta_br))


def effective_irs_gain(g, phi_rm: float, theta_br: float, delta_bar: complex) -> complex:
    """Equivalent gain ``delta_bar * a_R^H(phi_rm - theta_br) g`` of a reflected path."""
    g = np.asarray(g, dtype=complex)
    if np.any(np.abs(g) > 1 + 1e-12):
        raise ValueError("reflection coefficients must have modulus <= 1")
    a = steering_vector(len(g), cos_sub(phi_rm, theta_br))
    return complex(delta_bar * np.vdot(a, g))


def sample_nlos(count: int, abs_delta1: float, gap_db: float, rng):
    """Scattered paths: CN gains at ``gap_db`` below the LoS power, uniform angles.

    Returns ``(gains, theta, phi)`` arrays of length ``count``; cosines come
    from physical angles drawn uniformly on [0, 2 pi).
    """
    var = abs_delta1**2 * 10.0 ** (-gap_db / 10.0)
    gains = np.sqrt(var / 2) * (rng.standard_normal(count) + 1j * rng.standard_normal(count))
    theta = clamp_cos(np.cos(rng.uniform(0, 2 * np.pi, count)))
    phi = clamp_cos(np.cos(rng.uniform(0, 2 * np.pi, count)))
    return gains, theta, phi


@dataclass(frozen=True)
class LinkParams:
    """Ground truth of one LoS (eta=1) or VLoS (eta>=2) link.

    ``phi`` is the AoD seen by the estimator: the BS AoD for the LoS link and
    the equivalent reflection angle ``phi_rm (-) theta_br`` for an IRS link.
    """

    eta: int
    zeta: int
    delta: complex
    theta: float
    phi: float
    theta_br: float = float("nan")
    phi_br: float = float("nan")
    phi_rm: float = float("nan")
    d_br: float = 0.0
    d_rm: float = 0.0

    @property
    def aod(self) -> float:
        """AoD in the anchor's own array frame."""
        return self.phi if self.eta == 1 else self.phi_rm


@dataclass(frozen=True)
class ChannelRealization:
    links: tuple
    nlos_gains: np.ndarray
    nlos_theta: np.ndarray
    nlos_phi: np.ndarray
    n_bs: int
    n_mt: int
    irs_sizes: tuple

    @property
    def los(self) -> LinkParams:
        return self.links[0]

    def link(self, eta: int) -> LinkParams:
        return self.links[eta - 1]

    @property
    def zeta(self) -> np.ndarray:
        return np.array([l.zeta for l in self.links])


def realize_channel(scenario: Scenario, rng, state: LinkState | None = None) -> ChannelRealization:
    """Path parameters for every anchor link plus the NLoS scatter list."""
    if state is None:
        state = compute_blockage(scenario)
    bs, mt = scenario.bs, scenario.mt_position
    e_mt = scenario.mt_array.direction
    lam = scenario.wavelength
    d_bm = float(np.linalg.norm(mt - bs.position))
    links = [
        LinkParams(
            eta=1,
            zeta=int(state.zeta[0]),
            delta=los_gain(d_bm, lam),
            theta=cosine_of_direction(mt, bs.position, e_mt),
            phi=cosine_of_direction(mt, bs.position, bs.direction),
            d_rm=d_bm,
        )
    ]
    for a in scenario.irs:
        d_br = float(np.linalg.norm(a.position - bs.position))
        d_rm = float(np.linalg.norm(mt - a.position))
        theta_br = cosine_of_direction(a.position, bs.position, a.direction)
        phi_br = cosine_of_direction(a.position, bs.position, bs.direction)
        phi_rm = cosine_of_direction(mt, a.position, a.direction)
        links.append(
            LinkParams(
                eta=a.eta,
                zeta=int(state.zeta[a.eta - 1]),
                delta=vlos_gain(d_br, d_rm, scenario.reflection_loss, lam),
                theta=cosine_of_direction(mt, a.position, e_mt),
                phi=cos_sub(phi_rm, theta_br),
                theta_br=theta_br,
                phi_br=phi_br,
                phi_rm=phi_rm,
                d_br=d_br,
                d_rm=d_rm,
            )
        )
    gains, th, ph = sample_nlos(
        scenario.nlos_count, abs(links[0].delta), scenario.nlos_power_gap_db, rng
    )
    return ChannelRealization(
        links=tuple(links),
        nlos_gains=gains,
        nlos_theta=th,
        nlos_phi=ph,
        n_bs=scenario.bs.array.size,
        n_mt=scenario.mt_array.size,
        irs_sizes=tuple(a.array.size for a in scenario.irs),
    )


def assemble_channel(
    realization: ChannelRealization,
    reflection: Mapping[int, Sequence[complex]] | None = None,
    direct: bool = True,
) -> np.ndarray:
    """Full ``N_M x N_B`` channel: LoS + NLoS + activated IRS cascades.

    ``reflection`` maps an IRS anchor index ``eta`` to its reflection vector;
    IRSs absent from the mapping are deactivated. Cascades are built from the
    raw BS-IRS and IRS-MT responses (``a_M a_R^H diag(g) a_R a_B^H``).
    ``direct=False`` drops the LoS and NLoS terms and keeps only cascades.
    """
    n_m, n_b = realization.n_mt, realization.n_bs
    H = np.zeros((n_m, n_b), dtype=complex)
    los = realization.los
    if direct and los.zeta:
        H += los.delta * np.outer(steering_vector(n_m, los.theta), steering_vector(n_b, los.phi).conj())
    if direct and len(realization.nlos_gains):
        A_m = steering_vector(n_m, realization.nlos_theta)
        A_b = steering_vector(n_b, realization.nlos_phi)
        H += (A_m * realization.nlos_gains) @ A_b.conj().T
    for eta, g in (reflection or {}).items():
        link = realization.link(eta)
        n_r = realization.irs_sizes[eta - 2]
        g = np.asarray(g, dtype=complex)
        if g.shape != (n_r,):
            raise ValueError(f"reflection vector for IRS {eta} must have length {n_r}")
        if not link.zeta:
            continue
        a_out = steering_vector(n_r, link.phi_rm)
        a_in = steering_vector(n_r, link.theta_br)
        cascade = np.vdot(a_out, g * a_in)
        H += (link.delta * cascade) * np.outer(
            steering_vector(n_m, link.theta), steering_vector(n_b, link.phi_br).conj()
        )
    return H
