"""One Monte-Carlo trial of the full pipeline: scene, sounding, estimation,
positioning, refinement and blockage classification.

Random streams are derived from the trial seed with ``SeedSequence`` spawn
keys feeding a Philox generator, so a trial never depends on which worker ran
it or on the power point being simulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..analysis import kmeans_1d
from ..channel import (
    ScenarioConfig,
    compute_blockage,
    dbm_to_watt,
    realize_channel,
    sample_scenario,
)
from ..estimator import PathEstimate, estimate_path
from ..geometry import cos_sub
from ..positioning import AnchorObservation, PositioningError, default_initial_guess, locate
from ..sounding import random_codebook, sound_step1, sound_step2
from .config import ExperimentConfig

STREAMS = {"scene": 0, "nlos": 1, "codebook": 2, "noise": 3, "baseline": 4, "kmeans": 5}


def trial_seed(base_seed: int, index: int) -> int:
    return (int(base_seed) + int(index)) % 2**64


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent Philox stream ``name`` of trial ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrialRecord:
    """Everything measured in one trial; per-link arrays are indexed by ``eta - 1``."""

    seed: int
    tx_power_dbm: float
    n_training: int
    users: int
    mt_position: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    theta_hat: np.ndarray
    phi_hat: np.ndarray
    residual: np.ndarray
    power_db: np.ndarray
    position: np.ndarray
    reliable: tuple
    low_confidence: bool
    theta_star: np.ndarray
    phi_star: np.ndarray
    zeta_star: np.ndarray
    zeta_power_km: np.ndarray
    zeta_residual_km: np.ndarray
    flags: tuple = field(default=())

    @property
    def position_error(self) -> float:
        return float(np.linalg.norm(self.position - self.mt_position))

    @property
    def n_blocked(self) -> int:
        return int(np.sum(self.zeta == 0))

    def summary(self) -> dict:
        """Flat scalar view used by the CSV writers."""
        unb = self.zeta == 1
        return {
            "seed": self.seed,
            "tx_power_dbm": self.tx_power_dbm,
            "n_training": self.n_training,
            "users": self.users,
            "n_blocked": self.n_blocked,
            "position_error": self.position_error,
            "reliable": len(self.reliable),
            "low_confidence": int(self.low_confidence),
            "blockage_errors": int(np.sum(self.zeta_star != self.zeta)),
            "kmeans_power_errors": int(np.sum(self.zeta_power_km != self.zeta)),
            "kmeans_residual_errors": int(np.sum(self.zeta_residual_km != self.zeta)),
            "links": len(self.zeta),
            "unblocked": int(np.sum(unb)),
        }


def _estimate_domain_star(fix, observations) -> tuple[np.ndarray, np.ndarray]:
    """Refined angles expressed like the raw estimates (equivalent AoD for IRSs)."""
    th = np.asarray(fix.theta_star, dtype=float)
    ph = np.array(
        [
            p if o.eta == 1 else cos_sub(p, o.theta_br)
            for p, o in zip(fix.phi_star, observations)
        ]
    )
    return th, ph


def kmeans_blockage(values, rng, blocked_low: bool) -> np.ndarray:
    """Two-cluster split of per-link features into blockage decisions (1 = unblocked)."""
    res = kmeans_1d(values, 2, rng)
    if res.degenerate:
        return np.ones(len(values), dtype=int)
    low = res.labels == 0
    return np.where(low, 0, 1) if blocked_low else np.where(low, 1, 0)


def run_trial(
    config: ExperimentConfig,
    seed: int,
    tx_power_dbm: float | None = None,
    n_training: int | None = None,
    users: int | None = None,
) -> TrialRecord:
    """Full pipeline for one scene at one transmit power."""
    scfg: ScenarioConfig = config.scenario
    over = {}
    if tx_power_dbm is not None:
        over["tx_power_dbm"] = float(tx_power_dbm)
    if users is not None:
        over["users"] = int(users)
    if over:
        scfg = replace(scfg, **over)
    N = int(n_training or config.sounding.n_training)
    noise = float(dbm_to_watt(scfg.noise_dbm))
    power = float(dbm_to_watt(scfg.tx_power_dbm))

    scenario = sample_scenario(scfg, stream(seed, "scene"))
    state = compute_blockage(scenario)
    real = realize_channel(scenario, stream(seed, "nlos"), state)

    cb_seed = config.sounding.codebook_seed
    cb_rng = stream(seed, "codebook") if cb_seed is None else stream(cb_seed, "codebook")
    noise_rng = stream(seed, "noise")

    sessions = []
    tx = random_codebook(real.n_bs, N, "transmit", cb_rng)
    rx = random_codebook(real.n_mt, N, "receive", cb_rng)
    sessions.append(sound_step1(real, tx, rx, N, power, noise, noise_rng))
    for a in scenario.irs:
        refl = random_codebook(a.array.size, N, "reflect", cb_rng)
        rx = random_codebook(real.n_mt, N, "receive", cb_rng)
        sessions.append(
            sound_step2(real, a.eta, refl, rx, N, power, noise, noise_rng, scfg.step2_leakage)
        )

    grid, fine = config.estimator.grid(), config.estimator.fine()
    estimates: list[PathEstimate] = [estimate_path(s, grid, fine) for s in sessions]

    observations = [
        AnchorObservation(a, e, s, real.link(a.eta).theta_br)
        for a, e, s in zip(scenario.anchors, estimates, sessions)
    ]
    bounds = (scenario.hall_lo, scenario.hall_hi)
    flags = []
    n_links = len(observations)
    try:
        fix = locate(
            observations,
            wavelength=scenario.wavelength,
            reflection_loss=scenario.reflection_loss,
            tx_power=power,
            policy=config.positioning.policy(),
            bounds=bounds,
            eps=config.positioning.taylor_eps,
        )
        position = fix.position
        reliable, low_conf = fix.reliable, fix.low_confidence
        theta_star, phi_star = _estimate_domain_star(fix, observations)
        zeta_star = fix.zeta_star
    except PositioningError as exc:
        flags.append(f"positioning: {exc}")
        position = default_initial_guess(bounds)
        reliable, low_conf = (), True
        theta_star = np.full(n_links, np.nan)
        phi_star = np.full(n_links, np.nan)
        zeta_star = np.ones(n_links, dtype=int)

    power_db = np.array([10 * np.log10(max(np.vdot(s.y, s.y).real, 1e-300)) for s in sessions])
    residual = np.array([e.residual for e in estimates])
    km_rng = stream(seed, "kmeans")
    return TrialRecord(
        seed=int(seed),
        tx_power_dbm=float(scfg.tx_power_dbm),
        n_training=N,
        users=scfg.users,
        mt_position=scenario.mt_position,
        zeta=np.asarray(state.zeta, dtype=int),
        theta=np.array([l.theta for l in real.links]),
        phi=np.array([l.phi for l in real.links]),
        theta_hat=np.array([e.theta for e in estimates]),
        phi_hat=np.array([e.phi for e in estimates]),
        residual=residual,
        power_db=power_db,
        position=np.asarray(position, dtype=float),
        reliable=tuple(reliable),
        low_confidence=bool(low_conf),
        theta_star=theta_star,
        phi_star=phi_star,
        zeta_star=np.asarray(zeta_star, dtype=int),
        # clustering runs on linear received power (watts), not on dB
        zeta_power_km=kmeans_blockage(10.0 ** (power_db / 10.0), km_rng, blocked_low=True),
        zeta_residual_km=kmeans_blockage(residual, km_rng, blocked_low=False),
        flags=tuple(flags),
    )
