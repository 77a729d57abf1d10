"""Random-beamforming codebooks, sensing matrices and measurement synthesis.

A measurement row is ``y_n = (f_n^T kron m_n^H) b(theta, phi) * gain + noise``
with ``b(theta, phi) = vec(a_rx(theta) a_tx(phi)^H)`` (column-major vec), so
row ``n`` of ``D`` is ``f_n kron conj(m_n)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, assemble_channel
from .geometry import steering_vector

SIDES = ("transmit", "receive", "reflect")


@dataclass(frozen=True)
class BeamCodebook:
    """``N`` beamforming vectors stored row-wise, shape ``(N, n)``."""

    vectors: np.ndarray
    side: str

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    def head(self, N: int) -> "BeamCodebook":
        return BeamCodebook(self.vectors[:N], self.side)


def random_codebook(n: int, N: int, side: str, rng) -> BeamCodebook:
    """Phase-only random beams with i.i.d. U(0, 2 pi) phases.

    Transmit/receive entries have modulus ``1/sqrt(n)``; passive reflect
    entries have unit modulus.
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be >= 1")
    amp = 1.0 if side == "reflect" else 1.0 / np.sqrt(n)
    phases = rng.uniform(0.0, 2 * np.pi, size=(N, n))
    return BeamCodebook(amp * np.exp(1j * phases), side)


def kron_steering(theta, phi, n_rx: int, n_tx: int) -> np.ndarray:
    """``vec(a_rx(theta) a_tx(phi)^H)``, length ``n_rx * n_tx``."""
    return np.kron(steering_vector(n_tx, phi).conj(), steering_vector(n_rx, theta))


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    """Sensing matrix ``D`` of shape ``(N, n_tx * n_rx)`` with its array sizes.

    When the beam sequences ``tx`` and ``rx`` that generated ``D`` are kept,
    projections use the rank-one row structure instead of the full matrix.
    """

    D: np.ndarray
    n_rx: int
    n_tx: int
    tx: np.ndarray | None = None
    rx: np.ndarray | None = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=complex))
        if D.shape[1] != self.n_rx * self.n_tx:
            raise ValueError("D has wrong column count for (n_rx, n_tx)")
        object.__setattr__(self, "D", D)
        if (self.tx is None) != (self.rx is None):
            raise ValueError("tx and rx factors must be given together")

    @property
    def factored(self) -> bool:
        return self.tx is not None

    @property
    def N(self) -> int:
        return self.D.shape[0]

    @cached_property
    def cube(self) -> np.ndarray:
        # cube[n, t, r] multiplies conj(a_tx[t]) * a_rx[r]
        return self.D.reshape(self.N, self.n_tx, self.n_rx)

    def project(self, a_rx: np.ndarray, a_tx: np.ndarray) -> np.ndarray:
        """``D vec(a_rx a_tx^H)`` without forming the Kronecker vector."""
        if self.factored:
            return (self.tx @ a_tx.conj()) * (self.rx.conj() @ a_rx)
        return np.einsum("ntr,t,r->n", self.cube, a_tx.conj(), a_rx)

    def steer(self, theta: float, phi: float) -> np.ndarray:
        """``D b(theta, phi)``."""
        return self.project(steering_vector(self.n_rx, theta), steering_vector(self.n_tx, phi))

    def append(self, rows) -> "SensingMatrix":
        """Unstructured copy with extra rows (factors are dropped)."""
        return SensingMatrix(np.vstack([self.D, np.atleast_2d(rows)]), self.n_rx, self.n_tx)

    def head(self, N: int) -> "SensingMatrix":
        if self.factored:
            return SensingMatrix(self.D[:N], self.n_rx, self.n_tx, self.tx[:N], self.rx[:N])
        return SensingMatrix(self.D[:N], self.n_rx, self.n_tx)


def sensing_matrix(tx: np.ndarray, rx: np.ndarray) -> SensingMatrix:
    """Rows ``tx_n kron conj(rx_n)`` from ``(N, n_tx)`` and ``(N, n_rx)`` beams."""
    tx = np.atleast_2d(tx)
    rx = np.atleast_2d(rx)
    if tx.shape[0] != rx.shape[0]:
        raise ValueError("transmit and receive sequences differ in length")
    D = (tx[:, :, None] * rx.conj()[:, None, :]).reshape(tx.shape[0], -1)
    return SensingMatrix(D, rx.shape[1], tx.shape[1], tx.astype(complex), rx.astype(complex))


@dataclass(frozen=True, eq=False)
class SoundingSession:
    """Measurements of one link: ``y = zeta * gain_scale * delta * D b + n``."""

    eta: int
    sensing: SensingMatrix
    y: np.ndarray
    gain_scale: float
    noise_power: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.y) != self.sensing.N:
            raise ValueError("len(y) must equal the number of rows of D")

    @property
    def D(self) -> np.ndarray:
        return self.sensing.D

    @property
    def N(self) -> int:
        return self.sensing.N


def _slot_noise(rx: np.ndarray, noise_power: float, rng) -> np.ndarray:
    """``m_n^H w_n`` with ``w_n ~ CN(0, sigma^2 I)`` drawn per slot."""
    w = np.sqrt(noise_power / 2) * (
        rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape)
    )
    return np.einsum("nr,nr->n", rx.conj(), w)


def sound_step1(
    realization: ChannelRealization,
    tx_cb: BeamCodebook,
    rx_cb: BeamCodebook,
    N: int,
    tx_power: float,
    noise_power: float,
    rng,
) -> SoundingSession:
    """BS-MT sounding with all IRSs deactivated."""
    F = tx_cb.vectors[:N]
    M = rx_cb.vectors[:N]
    if len(F) < N or len(M) < N:
        raise ValueError("codebook shorter than training length")
    H = assemble_channel(realization)
    scale = np.sqrt(tx_power)
    y = scale * np.einsum("nr,rt,nt->n", M.conj(), H, F) + _slot_noise(M, noise_power, rng)
    return SoundingSession(
        eta=1,
        sensing=sensing_matrix(F, M),
        y=y,
        gain_scale=float(scale),
        noise_power=noise_power,
        meta={"step": 1},
    )


def sound_step2(
    realization: ChannelRealization,
    eta: int,
    refl_cb: BeamCodebook,
    rx_cb: BeamCodebook,
    N: int,
    tx_power: float,
    noise_power: float,
    rng,
    leakage: bool = True,
) -> SoundingSession:
    """Sounding of the link through IRS ``eta`` (all other IRSs off).

    The BS points ``a_B(phi_BR)/sqrt(N_B)`` at the IRS; LoS and NLoS leakage
    through that beam is kept exactly rather than approximated, unless
    ``leakage=False``.
    """
    if not 2 <= eta <= len(realization.links):
        raise ValueError(f"unknown IRS index {eta}")
    link = realization.link(eta)
    n_b = realization.n_bs
    f = steering_vector(n_b, link.phi_br) / np.sqrt(n_b)
    G = refl_cb.vectors[:N]
    M = rx_cb.vectors[:N]
    if len(G) < N or len(M) < N:
        raise ValueError("codebook shorter than training length")
    y = np.empty(N, dtype=complex)
    for n in range(N):
        H = assemble_channel(realization, {eta: G[n]}, direct=leakage)
        y[n] = M[n].conj() @ H @ f
    y = np.sqrt(tx_power) * y + _slot_noise(M, noise_power, rng)
    return SoundingSession(
        eta=eta,
        sensing=sensing_matrix(G, M),
        y=y,
        gain_scale=float(np.sqrt(tx_power * n_b)),
        noise_power=noise_power,
        meta={"step": 2},
    )


def synth_unified(zeta, delta, theta, phi, sensing: SensingMatrix, noise_power, rng):
    """``y = zeta * delta * D b(theta, phi) + n``, ``n ~ CN(0, sigma^2 I)``."""
    N = sensing.N
    n = np.sqrt(noise_power / 2) * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
    if not zeta:
        return n
    return delta * sensing.steer(theta, phi) + n


def save_session(path, session: SoundingSession) -> None:
    """Write a session to ``.npz`` (arrays plus JSON metadata)."""
    meta = {
        "eta": session.eta,
        "n_rx": session.sensing.n_rx,
        "n_tx": session.sensing.n_tx,
        "gain_scale": session.gain_scale,
        "noise_power": session.noise_power,
        "meta": session.meta,
    }
    arrays = {"D": session.D, "y": session.y, "meta": np.array(json.dumps(meta))}
    if session.sensing.factored:
        arrays.update(tx=session.sensing.tx, rx=session.sensing.rx)
    np.savez(Path(path), **arrays)


def load_session(path) -> SoundingSession:
    with np.load(Path(path)) as z:
        meta = json.loads(str(z["meta"]))
        factors = (z["tx"], z["rx"]) if "tx" in z.files else (None, None)
        return SoundingSession(
            eta=meta["eta"],
            sensing=SensingMatrix(z["D"], meta["n_rx"], meta["n_tx"], *factors),
            y=z["y"],
            gain_scale=meta["gain_scale"],
            noise_power=meta["noise_power"],
            meta=meta["meta"],
        )
