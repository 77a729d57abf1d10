"""Analytic checks and baselines: separation metric, pairwise error
probability, numeric CRB, DFT-codebook quantisation, exhaustive sweep and a
1-D K-means used for blockage classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .geometry import cos_sub, steering_vector
from .sounding import SensingMatrix


class AnalysisError(ValueError):
    pass


def d_squared(sensing: SensingMatrix, theta, phi, theta_t, phi_t, display: bool = False) -> float:
    """``||u||^2 - |v^H u|^2 / ||v||^2`` with ``u = D b(theta, phi)``, ``v = D b(theta_t, phi_t)``.

    ``display=True`` divides by ``||v||`` instead of ``||v||^2``; that variant
    is dimensionally inconsistent and only kept for comparison.
    """
    u = sensing.steer(theta, phi)
    v = sensing.steer(theta_t, phi_t)
    su = np.vdot(u, u).real
    sv = np.vdot(v, v).real
    if su <= 0 or sv <= 0:
        raise AnalysisError("projected steering vector has zero norm")
    den = np.sqrt(sv) if display else sv
    return float(su - abs(np.vdot(v, u)) ** 2 / den)


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``."""
    return ndtr(-np.asarray(x, dtype=float))


def pep_theoretical(
    delta, noise_power, sensing: SensingMatrix, theta, phi, theta_t, phi_t, form: str = "derived"
) -> float:
    """High-SNR probability that ``(theta_t, phi_t)`` outranks the true pair.

    ``form="derived"``: ``Q(|delta| d / sqrt(2 sigma^2))``, the ratio of the
    mean gap ``|delta|^2 d^2`` to its linearised standard deviation
    ``sqrt(2 sigma^2 |delta|^2 d^2)``.
    ``form="displayed"``: ``Q(|delta|^2 d^2 / (2 sigma^2))``.
    """
    d2 = max(d_squared(sensing, theta, phi, theta_t, phi_t), 0.0)
    if d2 == 0.0 or abs(delta) == 0.0:
        return 0.5
    if noise_power <= 0:
        return 0.0
    if form == "derived":
        x = abs(delta) * np.sqrt(d2) / np.sqrt(2.0 * noise_power)
    elif form == "displayed":
        x = abs(delta) ** 2 * d2 / (2.0 * noise_power)
    else:
        raise ValueError("form must be 'derived' or 'displayed'")
    return float(q_function(x))


def pep_monte_carlo(
    delta, noise_power, sensing: SensingMatrix, theta, phi, theta_t, phi_t, trials: int, rng,
    batch: int = 20_000,
) -> float:
    """Empirical rate of ``g(theta_t, phi_t) > g(theta, phi)`` under ``y = delta D b + n``."""
    u = sensing.steer(theta, phi)
    v = sensing.steer(theta_t, phi_t)
    w_u = u / np.linalg.norm(u)
    w_v = v / np.linalg.norm(v)
    mean = delta * u
    hits = 0
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        n = np.sqrt(noise_power / 2) * (
            rng.standard_normal((m, len(u))) + 1j * rng.standard_normal((m, len(u)))
        )
        y = mean[None, :] + n
        gu = np.abs(y @ w_u.conj()) ** 2
        gv = np.abs(y @ w_v.conj()) ** 2
        hits += int(np.count_nonzero(gv > gu))
        done += m
    return hits / trials


def _mean_jacobian(sensing: SensingMatrix, delta, theta, phi) -> np.ndarray:
    a_r = steering_vector(sensing.n_rx, theta)
    a_t = steering_vector(sensing.n_tx, phi)
    u = sensing.project(a_r, a_t)
    u_th = sensing.project(a_r * (1j * np.pi * np.arange(sensing.n_rx)), a_t)
    u_ph = sensing.project(a_r, a_t * (1j * np.pi * np.arange(sensing.n_tx)))
    # columns: d mu / d (Re delta, Im delta, theta, phi)
    return np.stack([u, 1j * u, delta * u_th, delta * u_ph], axis=1)


def fisher_information(sensing: SensingMatrix, delta, theta, phi, noise_power) -> np.ndarray:
    """``(2 / sigma^2) Re(J^H J)`` for the real parameters (Re d, Im d, theta, phi)."""
    J = _mean_jacobian(sensing, delta, theta, phi)
    return (2.0 / noise_power) * (J.conj().T @ J).real


def crb_numeric(sensing: SensingMatrix, delta, theta, phi, noise_power) -> tuple[float, float]:
    """CRB of ``theta`` and ``phi``: last two diagonal entries of the inverse FIM."""
    F = fisher_information(sensing, delta, theta, phi, noise_power)
    if not np.all(np.isfinite(F)) or np.linalg.cond(F) > 1e14:
        raise AnalysisError("unidentifiable configuration: singular Fisher information")
    C = np.linalg.inv(F)
    return float(C[2, 2]), float(C[3, 3])


@dataclass(frozen=True)
class DftCodebook:
    """``n`` beams ``a(psi_k) / sqrt(n)`` on the uniform cosine grid ``-1 + (2k - 1)/n``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("codebook size must be >= 1")

    @property
    def angles(self) -> np.ndarray:
        return -1.0 + (2.0 * np.arange(1, self.n + 1) - 1.0) / self.n

    @property
    def vectors(self) -> np.ndarray:
        """Beams stored row-wise, shape ``(n, n)``."""
        return steering_vector(self.n, self.angles).T / np.sqrt(self.n)


def dft_codebook(n: int) -> DftCodebook:
    return DftCodebook(n)


def quantize_to_codebook(psi, codebook: DftCodebook) -> int:
    """Index of the nearest codeword in wrapped distance; ties go to the lower index."""
    dist = np.abs(cos_sub(codebook.angles, psi))
    return int(np.argmin(dist))


def beam_pair_gains(H, tx: DftCodebook, rx: DftCodebook) -> np.ndarray:
    """``|m_k^H H f_l|`` for every (rx k, tx l), shape ``(n_rx, n_tx)``."""
    return np.abs(rx.vectors.conj() @ H @ tx.vectors.T)


def best_true_pair(H, tx: DftCodebook, rx: DftCodebook) -> tuple[int, int]:
    """Noiseless strongest pair as ``(tx index, rx index)``."""
    G = beam_pair_gains(H, tx, rx)
    k, l = np.unravel_index(np.argmax(G), G.shape)
    return int(l), int(k)


def exhaustive_sweep(H, tx: DftCodebook, rx: DftCodebook, tx_power, noise_power, rng) -> tuple[int, int]:
    """Measure every beam pair once with receiver noise and keep the strongest.

    Returns ``(tx index, rx index)``.
    """
    M = rx.vectors
    Y = np.sqrt(tx_power) * (M.conj() @ H @ tx.vectors.T)
    # noise m_k^H w with w ~ CN(0, sigma^2 I) and unit-norm m_k
    noise = np.sqrt(noise_power / 2) * (
        rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape)
    )
    P = np.abs(Y + noise) ** 2
    k, l = np.unravel_index(np.argmax(P), P.shape)
    return int(l), int(k)


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: tuple
    degenerate: bool = False


def _lloyd(x, centers, max_iter):
    hist = []
    labels = None
    for _ in range(max_iter):
        dist = np.abs(x[:, None] - centers[None, :])
        new = np.argmin(dist, axis=1)
        hist.append(float(np.sum(dist[np.arange(len(x)), new] ** 2)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean()
    dist = np.abs(x - centers[labels])
    obj = float(np.sum(dist**2))
    hist.append(obj)
    return labels, centers, obj, hist


def kmeans_1d(values, k: int = 2, rng=None, restarts: int = 8, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm on scalars with ``restarts`` random initialisations.

    Cluster labels are renumbered so that centres ascend: label 0 always has
    the lowest mean. All-identical input returns one cluster flagged
    ``degenerate``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if len(x) == 0:
        raise ValueError("no values to cluster")
    distinct = np.unique(x)
    if len(distinct) < k:
        centers = distinct.copy()
        labels = np.searchsorted(distinct, x)
        return KMeansResult(labels, centers, 0.0, (0.0,), degenerate=True)
    rng = np.random.default_rng(0) if rng is None else rng
    best = None
    for _ in range(restarts):
        init = np.sort(rng.choice(distinct, size=k, replace=False))
        labels, centers, obj, hist = _lloyd(x, init.astype(float), max_iter)
        if best is None or obj < best[2]:
            best = (labels, centers, obj, hist)
    labels, centers, obj, hist = best
    order = np.argsort(centers, kind="stable")
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return KMeansResult(remap[labels], centers[order], obj, tuple(hist))
