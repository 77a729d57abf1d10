import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsbeam.estimator import (
    FineSearchConfig,
    GridSpec,
    coarse_search,
    estimate_delta,
    estimate_path,
    fine_search,
    gradient_g,
    grid_angles,
    objective_g,
    residual_ratio,
)
from irsbeam.geometry import cos_add, cos_sub
from irsbeam.sounding import SoundingSession, sensing_matrix, synth_unified

from conftest import make_sensing


def _session(S, y, scale=1.0):
    return SoundingSession(1, S, y, scale, 0.0)


def test_grid_defaults_and_centres():
    g = GridSpec.for_arrays(16, 16)
    assert (g.z_theta, g.z_phi, g.n_peaks) == (64, 64, 5)
    np.testing.assert_allclose(grid_angles(4), [-0.75, -0.25, 0.25, 0.75])


def test_objective_examples(rng):
    S = make_sensing(rng)
    d = 0.3 - 0.4j
    u = S.steer(0.2, -0.5)
    y = d * u
    assert objective_g(0.2, -0.5, S, y) == pytest.approx(abs(d) ** 2 * np.vdot(u, u).real)
    z = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    z -= np.vdot(u, z) / np.vdot(u, u) * u
    assert objective_g(0.2, -0.5, S, z) == pytest.approx(0.0, abs=1e-20)


def test_gradient_finite_difference(rng):
    h = 1e-6
    for _ in range(100):
        S = make_sensing(rng)
        y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        th, ph = rng.uniform(-0.9, 0.9, 2)
        g = np.array(gradient_g(th, ph, S, y))
        fd = np.array(
            [
                (objective_g(th + h, ph, S, y) - objective_g(th - h, ph, S, y)) / (2 * h),
                (objective_g(th, ph + h, S, y) - objective_g(th, ph - h, S, y)) / (2 * h),
            ]
        )
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_gradient_swaps_with_roles(rng):
    S = make_sensing(rng)
    y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    # conj(m^H a_r a_t^H f) = f^H a_t a_r^H m: transmit and receive roles swap
    T = sensing_matrix(S.rx, S.tx)
    gt, gp = gradient_g(0.3, -0.2, S, y)
    ht, hp = gradient_g(-0.2, 0.3, T, y.conj())
    assert (gt, gp) == pytest.approx((hp, ht), rel=1e-10)


def test_gradient_zero_at_truth(rng):
    S = make_sensing(rng)
    y = S.steer(0.1, 0.4)
    gt, gp = gradient_g(0.1, 0.4, S, y)
    assert abs(gt) < 1e-6 * np.vdot(y, y).real and abs(gp) < 1e-6 * np.vdot(y, y).real


def test_coarse_top_candidate_near_truth(rng):
    for _ in range(20):
        S = make_sensing(rng)
        th, ph = rng.uniform(-1, 1, 2)
        c = coarse_search(S, S.steer(th, ph), GridSpec())
        assert len(c) <= 5
        assert abs(cos_sub(c[0][0], th)) <= 2 / 64 and abs(cos_sub(c[0][1], ph)) <= 2 / 64


def test_coarse_zero_input_falls_back(rng):
    S = make_sensing(rng)
    c = coarse_search(S, np.zeros(16, complex), GridSpec())
    assert c == [(float(grid_angles(64)[0]), float(grid_angles(64)[0]))]


def test_fine_from_truth_and_neighbour(rng):
    S = make_sensing(rng)
    th, ph = 0.37, -0.61
    y = S.steer(th, ph)
    r = fine_search((th, ph), S, y)
    assert r.iterations <= 2 and abs(r.theta - th) < 1e-9 and abs(r.phi - ph) < 1e-9
    r = fine_search((cos_add(th, 2 / 64), cos_add(ph, -2 / 64)), S, y, record=True)
    assert abs(cos_sub(r.theta, th)) < 1e-6 and abs(cos_sub(r.phi, ph)) < 1e-6
    assert all(b >= a for a, b in zip(r.history, r.history[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fine_never_decreases(seed):
    rng = np.random.default_rng(seed)
    S = make_sensing(rng)
    y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    start = tuple(rng.uniform(-1, 1, 2))
    r = fine_search(start, S, y)
    assert r.value >= objective_g(*start, S, y) * (1 - 1e-12)


def test_delta_examples(rng):
    S = make_sensing(rng)
    d = 0.7 + 0.1j
    assert estimate_delta(0.2, 0.3, S, d * S.steer(0.2, 0.3)) == pytest.approx(d, abs=1e-12)
    u = S.steer(0.2, 0.3)
    z = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    z -= np.vdot(u, z) / np.vdot(u, u) * u
    assert abs(estimate_delta(0.2, 0.3, S, z)) < 1e-12


def test_delta_normal_equations(rng):
    for _ in range(1000):
        S = make_sensing(rng, N=int(rng.integers(2, 20)))
        th, ph = rng.uniform(-1, 1, 2)
        y = rng.standard_normal(S.N) + 1j * rng.standard_normal(S.N)
        A = np.column_stack([S.D @ np.kron(np.exp(-1j * np.pi * np.arange(16) * ph),
                                           np.exp(1j * np.pi * np.arange(16) * th))])
        ref = np.linalg.solve(A.conj().T @ A, A.conj().T @ y)[0]
        assert estimate_delta(th, ph, S, y) == pytest.approx(ref, abs=1e-10)


def test_delta_residual_optimal(rng):
    S = make_sensing(rng)
    y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    d = estimate_delta(0.1, 0.2, S, y)
    u = S.steer(0.1, 0.2)
    base = np.linalg.norm(y - d * u)
    for e in (1e-3, -1e-3, 1e-3j, -1e-3j):
        assert np.linalg.norm(y - d * (1 + e) * u) > base


def test_residual_ratio_examples(rng):
    S = make_sensing(rng)
    u = S.steer(-0.3, 0.8)
    assert residual_ratio(2 * u, 2.0, -0.3, 0.8, S) == pytest.approx(0.0, abs=1e-15)
    z = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    z -= np.vdot(u, z) / np.vdot(u, u) * u
    assert residual_ratio(z, estimate_delta(-0.3, 0.8, S, z), -0.3, 0.8, S) == pytest.approx(1.0)


def test_residual_separation(rng):
    sig, noise = [], []
    for _ in range(300):
        S = make_sensing(rng)
        th, ph = rng.uniform(-1, 1, 2)
        snr_amp = 50.0
        good = estimate_path(_session(S, synth_unified(1, snr_amp, th, ph, S, 1.0, rng)))
        bad = estimate_path(_session(S, synth_unified(0, snr_amp, th, ph, S, 1.0, rng)))
        sig.append(good.residual)
        noise.append(bad.residual)
    assert np.median(noise) - np.median(sig) > 0.5


def test_estimate_path_noiseless(rng):
    for _ in range(20):
        S = make_sensing(rng)
        th, ph = rng.uniform(-1, 1, 2)
        d = complex(*rng.standard_normal(2))
        e = estimate_path(_session(S, 3.0 * d * S.steer(th, ph), scale=3.0))
        assert abs(cos_sub(e.theta, th)) < 1e-6 and abs(cos_sub(e.phi, ph)) < 1e-6
        assert e.delta == pytest.approx(d, abs=1e-6)
        assert 0.0 <= e.residual <= 1e-9


def test_scale_equivariance(rng):
    S = make_sensing(rng)
    y = synth_unified(1, 1.0, 0.4, -0.2, S, 0.05, rng)
    a = estimate_path(_session(S, y))
    c = 0.3 - 2j
    b = estimate_path(_session(S, c * y))
    assert (b.theta, b.phi) == pytest.approx((a.theta, a.phi), abs=1e-9)
    assert b.delta == pytest.approx(c * a.delta, rel=1e-7)
    assert b.residual == pytest.approx(a.residual, abs=1e-9)


def test_zero_measurement_is_flagged_unexplained(rng):
    S = make_sensing(rng)
    e = estimate_path(_session(S, np.zeros(16, complex)))
    assert e.residual == 1.0 and e.delta == 0
