"""Fast property checks behind the ``validate`` subcommand.

Each check draws its own instances from the trial streams and returns a row
with the number of instances, the number of failures and the worst statistic.
"""

from __future__ import annotations

import numpy as np

from ..analysis import d_squared
from ..channel import default_anchors
from ..estimator import FineSearchConfig, GridSpec, estimate_delta, estimate_path, gradient_g, objective_g
from ..geometry import cos_sub
from ..positioning import aod_jacobian, aod_of_position
from ..sounding import SoundingSession, random_codebook, sensing_matrix, synth_unified
from .config import ExperimentConfig
from .trial import run_trial, stream, trial_seed


def _random_sensing(rng, N=16, n_rx=16, n_tx=16):
    tx = random_codebook(n_tx, N, "transmit", rng).vectors
    rx = random_codebook(n_rx, N, "receive", rng).vectors
    return sensing_matrix(tx, rx)


def check_noiseless_uniqueness(seeds, tol=1e-4):
    worst, bad = 0.0, 0
    for s in seeds:
        rng = stream(s, "codebook")
        S = _random_sensing(rng)
        th, ph = rng.uniform(-1, 1, 2)
        y = S.steer(th, ph)
        est = estimate_path(SoundingSession(1, S, y, 1.0, 0.0), GridSpec(), FineSearchConfig())
        err = max(abs(cos_sub(est.theta, th)), abs(cos_sub(est.phi, ph)))
        worst = max(worst, err)
        bad += err > tol
    return {"check": "noiseless_uniqueness", "instances": len(seeds), "failures": bad, "worst": worst}


def check_gradient(seeds, h=1e-6, tol=1e-5):
    worst, bad = 0.0, 0
    for s in seeds:
        rng = stream(s, "noise")
        S = _random_sensing(rng)
        y = rng.standard_normal(S.N) + 1j * rng.standard_normal(S.N)
        th, ph = rng.uniform(-0.9, 0.9, 2)
        g = np.array(gradient_g(th, ph, S, y))
        fd = np.array(
            [
                (objective_g(th + h, ph, S, y) - objective_g(th - h, ph, S, y)) / (2 * h),
                (objective_g(th, ph + h, S, y) - objective_g(th, ph - h, S, y)) / (2 * h),
            ]
        )
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300)
        worst = max(worst, rel)
        bad += rel > tol
    return {"check": "gradient_g", "instances": len(seeds), "failures": bad, "worst": worst}


def check_aod_jacobian(seeds, h=1e-6, tol=1e-5):
    anchors = default_anchors()
    worst, bad = 0.0, 0
    for s in seeds:
        rng = stream(s, "scene")
        a = anchors[rng.integers(len(anchors))]
        p = rng.uniform([-9, -9, 0.5], [9, 9, 3])
        J = aod_jacobian(p, a)
        fd = np.array(
            [(aod_of_position(p + h * e, a) - aod_of_position(p - h * e, a)) / (2 * h) for e in np.eye(3)]
        )
        rel = np.linalg.norm(J - fd) / max(np.linalg.norm(fd), 1e-300)
        worst = max(worst, rel)
        bad += rel > tol
    return {"check": "aod_jacobian", "instances": len(seeds), "failures": bad, "worst": worst}


def check_row_monotone(seeds, tol=-1e-12):
    worst, bad = np.inf, 0
    for s in seeds:
        rng = stream(s, "baseline")
        N = int(rng.integers(1, 16))
        S = _random_sensing(rng, N=N + 1)
        th, ph, tt, pt = rng.uniform(-1, 1, 4)
        diff = d_squared(S, th, ph, tt, pt) - d_squared(S.head(N), th, ph, tt, pt)
        worst = min(worst, diff)
        bad += diff < tol
    return {"check": "d_squared_monotone", "instances": len(seeds), "failures": bad, "worst": worst}


def check_delta_oracle(seeds, tol=1e-10):
    worst, bad = 0.0, 0
    for s in seeds:
        rng = stream(s, "kmeans")
        S = _random_sensing(rng)
        th, ph = rng.uniform(-1, 1, 2)
        delta = complex(*rng.standard_normal(2))
        y = synth_unified(1, delta, th, ph, S, 0.1, rng)
        u = S.steer(th, ph)[:, None]
        ref = np.linalg.solve(u.conj().T @ u, u.conj().T @ y)[0]
        err = abs(estimate_delta(th, ph, S, y) - ref) / max(abs(ref), 1.0)
        worst = max(worst, err)
        bad += err > tol
    return {"check": "delta_oracle", "instances": len(seeds), "failures": bad, "worst": worst}


def check_fixed_point(config: ExperimentConfig, seeds, tol_p=1e-4, tol_a=1e-6):
    cfg = config.with_scenario(users=0, nlos_count=0, noise_dbm=-300.0, step2_leakage=False)
    worst, bad = 0.0, 0
    for s in seeds:
        r = run_trial(cfg, s)
        ang = max(
            np.max(np.abs(cos_sub(r.theta_star, r.theta))),
            np.max(np.abs(cos_sub(r.phi_star, r.phi))),
        )
        ok = r.position_error <= tol_p and ang <= tol_a and np.all(r.zeta_star == 1)
        worst = max(worst, r.position_error)
        bad += not ok
    return {"check": "pipeline_fixed_point", "instances": len(seeds), "failures": bad, "worst": worst}


def validate(config: ExperimentConfig) -> list:
    """Run every check with ``config.run.trials`` instances (fixed point: at most 10)."""
    seeds = [trial_seed(config.run.seed, i) for i in range(config.run.trials)]
    rows = [
        check_noiseless_uniqueness(seeds),
        check_gradient(seeds),
        check_aod_jacobian(seeds),
        check_row_monotone(seeds),
        check_delta_oracle(seeds),
        check_fixed_point(config, seeds[:10]),
    ]
    for r in rows:
        r["passed"] = int(r["failures"] == 0)
    return rows
