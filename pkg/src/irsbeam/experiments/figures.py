"""Monte-Carlo drivers behind the figure subcommands.

Each ``figN`` function returns a list of row dicts; :func:`write_csv` stores
them with a comment line carrying the config hash and base seed. Trials are
mapped over a process pool and collected in submission order, so results do
not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..analysis import (
    DftCodebook,
    best_true_pair,
    crb_numeric,
    exhaustive_sweep,
    quantize_to_codebook,
)
from ..channel import (
    assemble_channel,
    compute_blockage,
    dbm_to_watt,
    realize_channel,
    sample_scenario,
)
from ..estimator import coarse_search, estimate_path, grid_angles, objective_grid, GridSpec
from ..geometry import cos_sub, steering_vector
from ..sounding import SoundingSession, random_codebook, sensing_matrix, sound_step1
from .config import ExperimentConfig
from .trial import run_trial, stream, trial_seed

FLOAT_FORMAT = "{:.9g}"


# ---------------------------------------------------------------- plumbing

def parallel_map(fn, items, workers: int = 1) -> list:
    """Ordered map; ``workers > 1`` uses a process pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FORMAT.format(float(v))
    return str(v)


def format_csv(name: str, rows: list, config: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(
        f"# irsbeam {name} config={config.digest()} seed={config.run.seed} "
        f"trials={config.run.trials}\n"
    )
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def write_csv(path, name: str, rows: list, config: ExperimentConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(name, rows, config))
    return path


def _seeds(config: ExperimentConfig) -> list[int]:
    return [trial_seed(config.run.seed, i) for i in range(config.run.trials)]


def _wrapped_sq(a, b) -> np.ndarray:
    return np.asarray(cos_sub(a, b), dtype=float) ** 2


# ---------------------------------------------------------------- fig5

def _los_scene(config: ExperimentConfig, seed: int, nlos: int):
    """Unobstructed single-user scene (only the MT holder is present)."""
    scfg = replace(config.scenario, users=1, nlos_count=nlos)
    scen = sample_scenario(scfg, stream(seed, "scene"))
    return scen, realize_channel(scen, stream(seed, "nlos"), compute_blockage(scen))


def _fig5_trial(args):
    config, seed, N, nlos, powers = args
    _, real = _los_scene(config, seed, nlos)
    cb = stream(seed, "codebook")
    tx = random_codebook(real.n_bs, N, "transmit", cb)
    rx = random_codebook(real.n_mt, N, "receive", cb)
    noise = config.noise_power
    los = real.los
    grid, fine = config.estimator.grid(), config.estimator.fine()
    out = []
    for p_dbm in powers:
        power = float(dbm_to_watt(p_dbm))
        sess = sound_step1(real, tx, rx, N, power, noise, stream(seed, "noise"))
        est = estimate_path(sess, grid, fine)
        crb = crb_numeric(sess.sensing, np.sqrt(power) * los.delta, los.theta, los.phi, noise)
        out.append(
            (
                float(_wrapped_sq(est.theta, los.theta)),
                float(_wrapped_sq(est.phi, los.phi)),
                crb[0],
                crb[1],
            )
        )
    return out


def fig5(config: ExperimentConfig, powers=None, lengths=None, cases=None) -> list:
    """Angle MSE and CRB of the BS-MT link versus transmit power."""
    powers = tuple(config.sweep.powers_dbm if powers is None else powers)
    lengths = tuple(config.sweep.training_lengths if lengths is None else lengths)
    if cases is None:
        cases = (("los", 0), ("los+nlos", config.scenario.nlos_count))
    rows = []
    for case, nlos in cases:
        for N in lengths:
            items = [(config, s, N, nlos, powers) for s in _seeds(config)]
            res = np.array(parallel_map(_fig5_trial, items, config.run.workers))  # T x P x 4
            for j, p in enumerate(powers):
                rows.append(
                    {
                        "case": case,
                        "n_training": N,
                        "tx_power_dbm": p,
                        "mse_theta": res[:, j, 0].mean(),
                        "mse_phi": res[:, j, 1].mean(),
                        "crb_theta": res[:, j, 2].mean(),
                        "crb_phi": res[:, j, 3].mean(),
                        "trials": len(res),
                    }
                )
    return rows


# ---------------------------------------------------------------- fig6

def _fig6_trial(args):
    config, seed, users = args
    scen = sample_scenario(replace(config.scenario, users=users), stream(seed, "scene"))
    return compute_blockage(scen).n_blocked


def fig6(config: ExperimentConfig, user_counts=None) -> list:
    """Histogram of blocked links per scene for each user count."""
    counts = tuple(config.sweep.user_counts if user_counts is None else user_counts)
    n_links = config.scenario.n_irs + 1
    rows = []
    for users in counts:
        items = [(config, s, users) for s in _seeds(config)]
        blocked = np.array(parallel_map(_fig6_trial, items, config.run.workers))
        hist = np.bincount(blocked, minlength=n_links + 1)
        for k, c in enumerate(hist):
            rows.append(
                {
                    "users": users,
                    "blocked_links": k,
                    "count": int(c),
                    "fraction": c / len(blocked),
                }
            )
    return rows


# ---------------------------------------------------------------- fig7

def _fig7_trial(args):
    config, seed, lengths, powers = args
    _, real = _los_scene(config, seed, config.scenario.nlos_count)
    H = assemble_channel(real)
    tx_dft, rx_dft = DftCodebook(real.n_bs), DftCodebook(real.n_mt)
    best = best_true_pair(H, tx_dft, rx_dft)
    cb = stream(seed, "codebook")
    n_max = max(lengths)
    # nested codebooks: every length uses a prefix of the same sequences
    tx = random_codebook(real.n_bs, n_max, "transmit", cb)
    rx = random_codebook(real.n_mt, n_max, "receive", cb)
    grid, fine = config.estimator.grid(), config.estimator.fine()
    noise = config.noise_power
    out = []
    for p_dbm in powers:
        power = float(dbm_to_watt(p_dbm))
        ex = exhaustive_sweep(H, tx_dft, rx_dft, power, noise, stream(seed, "baseline"))
        full = sound_step1(real, tx, rx, n_max, power, noise, stream(seed, "noise"))
        bits = [int(ex != best)]
        for N in lengths:
            sess = SoundingSession(1, full.sensing.head(N), full.y[:N], full.gain_scale, noise)
            est = estimate_path(sess, grid, fine)
            pair = (quantize_to_codebook(est.phi, tx_dft), quantize_to_codebook(est.theta, rx_dft))
            bits.append(int(pair != best))
        out.append(bits)
    return out


def fig7(config: ExperimentConfig, lengths=None, powers=None) -> list:
    """Beam misalignment of random-beamforming ML versus exhaustive DFT sweep."""
    lengths = tuple(config.sweep.misalignment_lengths if lengths is None else lengths)
    powers = tuple(config.sweep.misalignment_powers_dbm if powers is None else powers)
    items = [(config, s, lengths, powers) for s in _seeds(config)]
    res = np.array(parallel_map(_fig7_trial, items, config.run.workers))  # T x P x (1+L)
    rows = []
    for j, p in enumerate(powers):
        n_ex = config.scenario.n_bs * config.scenario.n_mt
        rows.append(
            {
                "method": "exhaustive",
                "n_training": n_ex,
                "tx_power_dbm": p,
                "misalignment": res[:, j, 0].mean(),
                "trials": len(res),
            }
        )
        for i, N in enumerate(lengths):
            rows.append(
                {
                    "method": "random_beamforming",
                    "n_training": N,
                    "tx_power_dbm": p,
                    "misalignment": res[:, j, i + 1].mean(),
                    "trials": len(res),
                }
            )
    return rows


# ---------------------------------------------------------------- fig8 / fig9 / fig10

def _pipeline_trial(args):
    config, seed, power, N = args
    return run_trial(config, seed, power, N)


def pipeline_records(config: ExperimentConfig, powers, N=None) -> dict:
    """``{power: [TrialRecord, ...]}`` for the full pipeline."""
    out = {}
    for p in powers:
        items = [(config, s, p, N) for s in _seeds(config)]
        out[p] = parallel_map(_pipeline_trial, items, config.run.workers)
    return out


def fig8_rows(records: dict) -> list:
    rows = []
    for p, recs in records.items():
        err = np.array([r.position_error for r in recs])
        rows.append(
            {
                "tx_power_dbm": p,
                "rmse": np.sqrt(np.mean(err**2)),
                "median_error": np.median(err),
                "p90_error": np.percentile(err, 90),
                "low_confidence_rate": np.mean([r.low_confidence for r in recs]),
                "mean_reliable": np.mean([len(r.reliable) for r in recs]),
                "trials": len(recs),
            }
        )
    return rows


def fig9_rows(records: dict) -> list:
    rows = []
    for p, recs in records.items():
        rows.append(
            {
                "tx_power_dbm": p,
                "error_position_aided": np.mean([np.mean(r.zeta_star != r.zeta) for r in recs]),
                "error_kmeans_residual": np.mean(
                    [np.mean(r.zeta_residual_km != r.zeta) for r in recs]
                ),
                "error_kmeans_power": np.mean([np.mean(r.zeta_power_km != r.zeta) for r in recs]),
                "trials": len(recs),
            }
        )
    return rows


def fig10_rows(records: dict, N: int) -> list:
    rows = []
    for p, recs in records.items():
        acc = {k: [] for k in ("theta_raw", "phi_raw", "theta_refined", "phi_refined")}
        for r in recs:
            m = (r.zeta == 1) & np.isfinite(r.theta_star)
            acc["theta_raw"] += list(_wrapped_sq(r.theta_hat[m], r.theta[m]))
            acc["phi_raw"] += list(_wrapped_sq(r.phi_hat[m], r.phi[m]))
            acc["theta_refined"] += list(_wrapped_sq(r.theta_star[m], r.theta[m]))
            acc["phi_refined"] += list(_wrapped_sq(r.phi_star[m], r.phi[m]))
        row = {"n_training": N, "tx_power_dbm": p}
        row.update({f"mse_{k}": float(np.mean(v)) if v else float("nan") for k, v in acc.items()})
        row["links"] = len(acc["theta_raw"])
        row["trials"] = len(recs)
        rows.append(row)
    return rows


def fig8(config: ExperimentConfig, powers=None) -> list:
    """Position RMSE versus transmit power."""
    powers = tuple(config.sweep.powers_dbm if powers is None else powers)
    return fig8_rows(pipeline_records(config, powers))


def fig9(config: ExperimentConfig, powers=None) -> list:
    """Blockage-decision error rate of three classifiers versus power."""
    powers = tuple(config.sweep.powers_dbm if powers is None else powers)
    return fig9_rows(pipeline_records(config, powers))


def fig10(config: ExperimentConfig, powers=None, lengths=None) -> list:
    """MSE of raw versus position-refined angles over unblocked links."""
    powers = tuple(config.sweep.powers_dbm if powers is None else powers)
    lengths = tuple(config.sweep.training_lengths if lengths is None else lengths)
    rows = []
    for N in lengths:
        rows += fig10_rows(pipeline_records(config, powers, N), N)
    return rows


# ---------------------------------------------------------------- contour

def contour_grid(z: int) -> np.ndarray:
    """Plot grid ``-1 + 2 i / z`` (contains 0 for even ``z``)."""
    return -1.0 + 2.0 * np.arange(z) / z


def _contour_case(seed: int, lengths, n_rx: int, n_tx: int, z: int):
    cb = stream(seed, "codebook")
    n_max = max(lengths)
    tx = random_codebook(n_tx, n_max, "transmit", cb).vectors
    rx = random_codebook(n_rx, n_max, "receive", cb).vectors
    th = contour_grid(z)
    out = []
    for N in lengths:
        S = sensing_matrix(tx[:N], rx[:N])
        y = S.steer(0.0, 0.0)
        A_r = steering_vector(n_rx, th)
        A_t = steering_vector(n_tx, th)
        R = S.rx.conj() @ A_r
        T = S.tx @ A_t.conj()
        num = np.abs((R.conj() * y[:, None]).T @ T.conj()) ** 2
        den = (np.abs(R) ** 2).T @ (np.abs(T) ** 2)
        G = num / den
        peak = (
            (G > np.roll(G, 1, 0)) & (G > np.roll(G, -1, 0))
            & (G > np.roll(G, 1, 1)) & (G > np.roll(G, -1, 1))
        )
        ii, kk = np.nonzero(peak)
        order = np.argsort(-G[ii, kk], kind="stable")
        vals = G[ii, kk][order]
        p1 = float(vals[0]) if len(vals) else float(G.max())
        p2 = float(vals[1]) if len(vals) > 1 else 0.0
        loc = (float(th[ii[order[0]]]), float(th[kk[order[0]]])) if len(vals) else (0.0, 0.0)
        out.append((N, G, p1, p2, loc))
    return out


def _contour_trial(args):
    seed, lengths, n_rx, n_tx, z = args
    return [(N, p1, p2, loc) for N, _, p1, p2, loc in _contour_case(seed, lengths, n_rx, n_tx, z)]


def contour(config: ExperimentConfig, lengths=None, z: int = 64) -> tuple[list, list]:
    """Noiseless ``g`` surfaces (first seed) and peak statistics (every seed).

    The setting is a single path with unit gain at ``theta = phi = 0``.
    Returns ``(grid_rows, peak_rows)``.
    """
    lengths = tuple(config.sweep.contour_lengths if lengths is None else lengths)
    n_rx, n_tx = config.scenario.n_mt, config.scenario.n_bs
    seeds = _seeds(config)
    grid_rows = []
    th = contour_grid(z)
    for N, G, _, _, _ in _contour_case(seeds[0], lengths, n_rx, n_tx, z):
        for i, t in enumerate(th):
            for k, p in enumerate(th):
                grid_rows.append({"n_training": N, "theta": t, "phi": p, "g": G[i, k]})
    res = parallel_map(
        _contour_trial, [(s, lengths, n_rx, n_tx, z) for s in seeds], config.run.workers
    )
    peak_rows = []
    for s, per in zip(seeds, res):
        for N, p1, p2, loc in per:
            peak_rows.append(
                {
                    "seed": s,
                    "n_training": N,
                    "peak1": p1,
                    "peak2": p2,
                    "gap": p1 - p2,
                    "peak1_theta": loc[0],
                    "peak1_phi": loc[1],
                }
            )
    return grid_rows, peak_rows
