import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsbeam.geometry import (
    Box,
    GeometryError,
    clamp_cos,
    cos_add,
    cos_sub,
    cosine_of_direction,
    segment_intersects_box,
    steering_vector,
)

cosines = st.floats(-1.0, 1.0, exclude_max=True, allow_nan=False)


@given(cosines, cosines)
def test_sub_add_inverse(a, b):
    assert abs(cos_sub(cos_add(a, b), b) - a) < 1e-12 or abs(abs(cos_sub(cos_add(a, b), b) - a) - 2) < 1e-12
    assert -1.0 <= cos_add(a, b) < 1.0
    assert -1.0 <= cos_sub(a, b) < 1.0


def test_inverse_bulk(rng):
    a, b = rng.uniform(-1, 1, (2, 10_000))
    back = cos_add(cos_sub(a, b), b)
    err = np.abs(back - a)
    assert np.all(np.minimum(err, 2 - err) < 1e-12)


def test_wrap_examples():
    assert cos_sub(-0.9, 0.5) == pytest.approx(0.6)
    assert cos_add(0.9, 0.5) == pytest.approx(-0.6)
    assert cos_add(0.5, 0.5) == -1.0  # half-open at +1


def test_clamp_maps_one_below():
    assert clamp_cos(1.0) < 1.0
    assert clamp_cos(1.0) == np.nextafter(1.0, 0.0)
    assert clamp_cos(0.3) == 0.3


def test_steering_examples():
    np.testing.assert_allclose(steering_vector(2, 0.0), [1, 1])
    np.testing.assert_allclose(steering_vector(4, 0.5), [1, 1j, -1, -1j], atol=1e-15)


@given(st.integers(1, 64), cosines)
def test_steering_unit_modulus(n, psi):
    a = steering_vector(n, psi)
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert abs(np.vdot(a, a)) == pytest.approx(n, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(2, 32), cosines, cosines)
def test_inner_product_dirichlet(n, p1, p2):
    d = cos_sub(p2, p1)
    got = abs(np.vdot(steering_vector(n, p1), steering_vector(n, p2)))
    den = np.sin(np.pi * d / 2)
    want = n if abs(den) < 1e-9 else abs(np.sin(n * np.pi * d / 2) / den)
    assert got == pytest.approx(want, abs=1e-7)


def test_cosine_of_direction_example():
    v = cosine_of_direction([0, 0, 1.2], [10, 0, 3.5], [1, 0, 0])
    assert v == pytest.approx(-10 / np.sqrt(100 + 5.29), abs=1e-12)
    assert v == pytest.approx(-0.9745551866, abs=1e-10)


def test_cosine_on_axis_and_orthogonal():
    assert cosine_of_direction([5, 0, 0], [0, 0, 0], [1, 0, 0]) == np.nextafter(1.0, 0.0)
    assert cosine_of_direction([0, 3, 0], [0, 0, 0], [1, 0, 0]) == pytest.approx(0.0, abs=1e-15)


def test_cosine_coincident_raises():
    with pytest.raises(GeometryError, match="degenerate geometry"):
        cosine_of_direction([1, 1, 1], [1, 1, 1], [1, 0, 0])


def test_segment_box_examples():
    box = Box([0, 0, 0], [1, 1, 1])
    assert segment_intersects_box([-3, 0, 0], [3, 0, 0], box)
    assert not segment_intersects_box([-3, 2, 0], [3, 2, 0], box)
    # grazing the top face
    assert segment_intersects_box([-3, 0, 1.0 + 5e-13], [3, 0, 1.0 + 5e-13], box)
    assert not segment_intersects_box([-3, 0, 1.0 + 1e-9], [3, 0, 1.0 + 1e-9], box)


def test_segment_box_matches_sampling(rng):
    t = np.linspace(0.0, 1.0, 10_000)[1:-1, None]
    disagreements = 0
    for _ in range(1000):
        box = Box(rng.uniform(-1, 1, 3), rng.uniform(0.1, 1.0, 3))
        a, b = rng.uniform(-3, 3, (2, 3))
        pts = a + t * (b - a)
        sampled = bool(np.any(np.all((pts >= box.lo) & (pts <= box.hi), axis=1)))
        exact = segment_intersects_box(a, b, box)
        # sampling can only miss very short chords
        if sampled and not exact:
            disagreements += 1
        if exact and not sampled:
            d = (b - a)
            # chord length must then be below the sampling pitch
            lo_t = np.max(np.minimum((box.lo - a) / d, (box.hi - a) / d))
            hi_t = np.min(np.maximum((box.lo - a) / d, (box.hi - a) / d))
            assert (hi_t - lo_t) * np.linalg.norm(d) < 2 * np.linalg.norm(d) / len(t) + 1e-9
    assert disagreements == 0


def test_box_rejects_nonpositive_extent():
    with pytest.raises(ValueError):
        Box([0, 0, 0], [1, 0, 1])
