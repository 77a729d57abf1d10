import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsbeam.channel import default_anchors, los_gain
from irsbeam.estimator import PathEstimate
from irsbeam.geometry import GeometryError, cosine_of_direction, unit
from irsbeam.positioning import (
    AnchorObservation,
    PositioningError,
    SelectionPolicy,
    aod_jacobian,
    aod_of_position,
    bearing_cost,
    build_reliable_set,
    decide_blockage,
    default_initial_guess,
    estimate_mt_direction,
    multistart_position,
    pathloss_from_position,
    refine_angles,
    refined_delta,
    taylor_position,
)
from irsbeam.sounding import SoundingSession

from conftest import make_sensing

ANCHORS = default_anchors()
BOUNDS = (np.array([-10.0, -10.0, 0.0]), np.array([10.0, 10.0, 5.0]))
LAM = 0.010707


def _obs(anchor, aod, residual=0.01, theta=0.0):
    est = PathEstimate(1.0 + 0j, theta, aod, residual, 1.0)
    return AnchorObservation(anchor, est, None, 0.0 if anchor.eta > 1 else float("nan"))


def test_aod_jacobian_finite_difference(rng):
    h = 1e-6
    for _ in range(100):
        a = ANCHORS[rng.integers(len(ANCHORS))]
        p = rng.uniform([-9, -9, 0.5], [9, 9, 3])
        J = aod_jacobian(p, a)
        fd = np.array([(aod_of_position(p + h * e, a) - aod_of_position(p - h * e, a)) / (2 * h) for e in np.eye(3)])
        assert np.linalg.norm(J - fd) <= 1e-5 * np.linalg.norm(fd)


def test_range_invariance(rng):
    for _ in range(50):
        a = ANCHORS[rng.integers(len(ANCHORS))]
        p = rng.uniform([-9, -9, 0.5], [9, 9, 3])
        t = rng.uniform(0.2, 3.0)
        q = a.position + t * (p - a.position)
        assert aod_of_position(q, a) == pytest.approx(aod_of_position(p, a), abs=1e-12)
        assert (p - a.position) @ aod_jacobian(p, a) == pytest.approx(0.0, abs=1e-12)


def test_jacobian_zero_on_axis():
    a = ANCHORS[0]
    p = a.position + 3.0 * a.direction
    np.testing.assert_allclose(aod_jacobian(p, a), 0.0, atol=1e-15)


def test_taylor_exact_bearings():
    p = np.array([3.0, -2.0, 1.25])
    sub = [ANCHORS[i] for i in (0, 3, 7)]
    phi = [aod_of_position(p, a) for a in sub]
    res = multistart_position(phi, sub, default_initial_guess(BOUNDS), bounds=BOUNDS)
    assert np.linalg.norm(res.position - p) < 1e-5
    assert res.cost < 1e-12


def test_taylor_fixed_point():
    p0 = default_initial_guess(BOUNDS)
    phi = [aod_of_position(p0, a) for a in ANCHORS]
    res = taylor_position(phi, ANCHORS, p0)
    assert res.iterations == 1 and np.linalg.norm(res.position - p0) < 1e-12


def test_taylor_descends(rng):
    good = 0
    for _ in range(100):
        p = rng.uniform([-9, -9, 1.2], [9, 9, 1.4])
        phi = np.array([aod_of_position(p, a) for a in ANCHORS]) + rng.normal(0, 1e-3, len(ANCHORS))
        p0 = default_initial_guess(BOUNDS)
        res = taylor_position(phi, ANCHORS, p0, bounds=BOUNDS)
        good += res.cost <= bearing_cost(phi, ANCHORS, p0)
    assert good >= 95


def test_taylor_errors():
    with pytest.raises(PositioningError, match="insufficient anchors"):
        taylor_position([0.1, 0.2], ANCHORS[:2], [0, 0, 1])
    # three anchors stacked on one line through p: bearings carry no cross-range information
    from irsbeam.channel import Anchor
    from irsbeam.geometry import ArrayGeometry

    e = unit([1.0, 0.0, 0.0])
    line = [Anchor("IRS", i + 2, [float(i), 0.0, 0.0], ArrayGeometry(4, e)) for i in range(3)]
    with pytest.raises(PositioningError, match="ill-conditioned"):
        taylor_position([0.0, 0.0, 0.0], line, [10.0, 0.0, 0.0])


def test_reliable_set_excludes_noise(rng):
    p = np.array([-4.0, 5.0, 1.3])
    obs = []
    for i, a in enumerate(ANCHORS):
        if i in (0, 2, 9):
            obs.append(_obs(a, aod_of_position(p, a), residual=0.01 + 0.001 * i))
        else:
            obs.append(_obs(a, rng.uniform(-1, 1), residual=0.9 + 0.001 * i))
    rel = build_reliable_set(obs, SelectionPolicy(), bounds=BOUNDS)
    assert set(rel.etas) == {1, 3, 10}
    assert not rel.low_confidence
    assert np.linalg.norm(rel.position - p) < 1e-4


def test_reliable_set_all_clean_and_minimum():
    p = np.array([2.0, 2.0, 1.3])
    obs = [_obs(a, aod_of_position(p, a)) for a in ANCHORS]
    assert set(build_reliable_set(obs, bounds=BOUNDS).etas) == set(range(1, 14))
    three = build_reliable_set(obs[:3], bounds=BOUNDS)
    assert three.etas == (1, 2, 3)


def test_reliable_set_needs_three():
    with pytest.raises(PositioningError):
        build_reliable_set([_obs(a, 0.0) for a in ANCHORS[:2]])


def test_direction_recovery(rng):
    for _ in range(30):
        p = rng.uniform([-9, -9, 1.2], [9, 9, 1.4])
        e = unit(rng.standard_normal(3))
        theta = [cosine_of_direction(p, a.position, e) for a in ANCHORS]
        res = estimate_mt_direction(p, theta, ANCHORS)
        ang = np.arccos(np.clip(res.direction @ e, -1, 1))
        assert ang < 1e-4
        assert np.linalg.norm(res.direction) == pytest.approx(1.0, abs=1e-12)


def test_refine_exact_inputs():
    p = np.array([1.0, -3.0, 1.3])
    e = unit([0.2, 0.9, -0.1])
    for a in ANCHORS:
        th, ph = refine_angles(p, e, a)
        assert th == cosine_of_direction(p, a.position, e)
        assert ph == aod_of_position(p, a)


def test_refined_delta_noiseless(rng):
    S = make_sensing(rng)
    d = 2e-5 * np.exp(0.4j)
    s = SoundingSession(1, S, 5.0 * d * S.steer(0.3, 0.1), 5.0, 0.0)
    assert refined_delta(0.3, 0.1, s) == pytest.approx(d, rel=1e-12)
    blocked = SoundingSession(1, S, np.zeros(16, complex), 5.0, 0.0)
    assert refined_delta(0.3, 0.1, blocked) == 0


def test_pathloss_examples():
    bs = ANCHORS[0]
    p = bs.position + np.array([10.0, 0.0, 0.0])
    assert pathloss_from_position(p, bs, LAM, 1.0, 1.0, 16) == pytest.approx(8.52e-5, rel=1e-3)
    assert pathloss_from_position(p, bs, LAM, 1.0, 4.0, 16) == pytest.approx(
        2 * pathloss_from_position(p, bs, LAM, 1.0, 1.0, 16)
    )
    irs = ANCHORS[4]
    d_br = np.linalg.norm(irs.position - bs.position)
    near = irs.position + 1e-9
    assert pathloss_from_position(near, irs, LAM, 1.0, 1.0, 1, bs.position) == pytest.approx(
        abs(los_gain(d_br, LAM)), rel=1e-8
    )
    with pytest.raises(GeometryError):
        pathloss_from_position(bs.position, bs, LAM, 1.0, 1.0, 16)


def test_decide_blockage_examples():
    assert decide_blockage(1e-5, 1e-5) == 1
    assert decide_blockage(1e-6, 1e-5) == 0
    assert decide_blockage(0.0, 1e-5) == 0


@settings(max_examples=200)
@given(st.floats(1e-9, 1.0), st.floats(1.0, 100.0))
def test_decide_blockage_monotone(ref, factor):
    # moving |delta*| further away from the reference never turns 0 into 1
    for a, b in ((ref, ref / factor), (ref, ref * factor)):
        if decide_blockage(a, ref) == 0:
            assert decide_blockage(b, ref) == 0
        assert decide_blockage(b, ref) <= decide_blockage(a, ref)
