"""Geometry helpers: wrapped cosine-angle arithmetic, ULA steering vectors,
bearing cosines and segment/box occlusion tests.

Positions are plain ``ndarray`` of shape ``(3,)`` (meters). Cosine angles are
floats (or arrays of floats) in the half-open interval ``[-1, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Largest double strictly below 1; exact +1 bearings are mapped here.
COS_MAX = np.nextafter(1.0, 0.0)


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


def _wrap(x):
    if isinstance(x, (float, int, np.floating)):
        r = (float(x) + 1.0) % 2.0 - 1.0
        return r - 2.0 if r >= 1.0 else r
    r = np.mod(x + 1.0, 2.0) - 1.0
    # np.mod may round up to exactly 2.0 for tiny negative arguments
    if np.ndim(r) == 0:
        r = float(r)
        return r - 2.0 if r >= 1.0 else r
    r[r >= 1.0] -= 2.0
    return r


def cos_sub(a, b):
    """Wrapped difference ``((a - b + 1) mod 2) - 1``, result in [-1, 1)."""
    return _wrap(np.subtract(a, b))


def cos_add(a, b):
    """Wrapped sum ``((a + b + 1) mod 2) - 1``, result in [-1, 1)."""
    return _wrap(np.add(a, b))


def clamp_cos(x):
    """Clip a cosine into [-1, 1), sending +1 to the nearest double below it."""
    return np.minimum(np.maximum(x, -1.0), COS_MAX)


def steering_vector(n: int, psi):
    """ULA response ``[1, e^{j pi psi}, ..., e^{j pi (n-1) psi}]``.

    Parameters
    ----------
    n : int
        Number of elements (half-wavelength spacing).
    psi : float or array_like
        Cosine angle(s). For an array of shape ``(M,)`` the result has shape
        ``(n, M)`` with one steering vector per column.
    """
    if n < 1:
        raise ValueError("element count must be >= 1")
    k = np.arange(n)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        return np.exp(1j * np.pi * k * psi)
    return np.exp(1j * np.pi * np.multiply.outer(k, psi))


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise GeometryError("zero-length direction")
    return v / nrm


def cosine_of_direction(p, anchor_pos, axis) -> float:
    """Cosine between ``axis`` and the ray from ``anchor_pos`` to ``p``."""
    d = np.asarray(p, dtype=float) - np.asarray(anchor_pos, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise GeometryError("degenerate geometry: coincident points")
    return float(clamp_cos(d @ np.asarray(axis, dtype=float) / r))


@dataclass(frozen=True)
class ArrayGeometry:
    """A ULA: element count and unit axis direction."""

    size: int
    direction: np.ndarray

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("array size must be >= 1")
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("array direction must be a unit vector")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its center and positive half extents."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        h = np.asarray(self.half_extents, dtype=float)
        if np.any(h <= 0):
            raise ValueError("half extents must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_extents


def segment_intersects_box(a, b, box: Box, tol: float = 1e-12) -> bool:
    """True iff the open segment (a, b) meets the closed box.

    Slab clipping with the box inflated by ``tol`` so that grazing contacts
    count as blocking.
    """
    hit = segments_hit_boxes(
        np.asarray(a, float)[None], np.asarray(b, float)[None],
        box.lo[None], box.hi[None], tol=tol,
    )
    return bool(hit[0, 0])


def segments_hit_boxes(a, b, lo, hi, tol: float = 1e-12) -> np.ndarray:
    """Vectorised slab test.

    Parameters
    ----------
    a, b : ndarray, shape (S, 3)
        Segment endpoints.
    lo, hi : ndarray, shape (B, 3)
        Box corners.

    Returns
    -------
    ndarray of bool, shape (S, B)
    """
    a = np.asarray(a, float)[:, None, :]
    d = np.asarray(b, float)[:, None, :] - a
    lo = np.asarray(lo, float)[None] - tol
    hi = np.asarray(hi, float)[None] + tol
    if lo.shape[1] == 0:
        return np.zeros((a.shape[0], 0), dtype=bool)
    parallel = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    tnear = np.where(parallel, -np.inf, np.minimum(t1, t2))
    tfar = np.where(parallel, np.inf, np.maximum(t1, t2))
    outside = parallel & ((a < lo) | (a > hi))
    t0 = tnear.max(axis=2)
    t1 = tfar.min(axis=2)
    return (~outside.any(axis=2)) & (t0 <= t1) & (t1 > 0.0) & (t0 < 1.0)
