import numpy as np
import pytest

from irsbeam.channel import ChannelRealization, LinkParams
from irsbeam.geometry import cos_sub, steering_vector
from irsbeam.sounding import (
    SensingMatrix,
    kron_steering,
    load_session,
    random_codebook,
    save_session,
    sensing_matrix,
    sound_step1,
    sound_step2,
    synth_unified,
)

from conftest import make_sensing


def _real(los_zeta=1, irs_zeta=1, n=16):
    los = LinkParams(1, los_zeta, 1e-4 * np.exp(0.7j), 0.35, -0.6, d_rm=9.0)
    irs = LinkParams(
        2, irs_zeta, 3e-6 * np.exp(-0.2j), -0.15, cos_sub(0.45, 0.8),
        theta_br=0.8, phi_br=0.55, phi_rm=0.45, d_br=6.0, d_rm=4.0,
    )
    z = np.zeros(0)
    return ChannelRealization((los, irs), z.astype(complex), z, z, n, n, (n,))


def test_codebook_modulus_and_seed():
    a = random_codebook(16, 8, "transmit", np.random.default_rng(3))
    b = random_codebook(16, 8, "transmit", np.random.default_rng(3))
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert np.allclose(np.abs(a.vectors), 1 / 4, atol=1e-12)
    r = random_codebook(16, 8, "reflect", np.random.default_rng(3))
    assert np.allclose(np.abs(r.vectors), 1.0)
    with pytest.raises(ValueError):
        random_codebook(16, 8, "sideways", np.random.default_rng(3))


def test_codebook_mean_gain(rng):
    F = random_codebook(16, 10_000, "transmit", rng).vectors
    assert np.mean(np.abs(F.conj() @ steering_vector(16, 0.37)) ** 2) == pytest.approx(1.0, rel=0.05)


def test_kron_steering_examples(rng):
    np.testing.assert_allclose(kron_steering(0.0, 0.0, 4, 3), np.ones(12))
    b = kron_steering(0.3, -0.7, 16, 8)
    assert np.vdot(b, b).real == pytest.approx(128)
    f = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    m = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    H = np.outer(steering_vector(16, 0.3), steering_vector(8, -0.7).conj())
    # m^H H f = (f kron m*)^T vec(H)
    assert np.kron(f, m.conj()) @ b == pytest.approx(m.conj() @ H @ f, abs=1e-12)


def test_factored_projection_matches_dense(rng):
    S = make_sensing(rng, N=12)
    dense = SensingMatrix(S.D, S.n_rx, S.n_tx)
    for th, ph in rng.uniform(-1, 1, (20, 2)):
        np.testing.assert_allclose(S.steer(th, ph), dense.steer(th, ph), atol=1e-13)
        np.testing.assert_allclose(S.steer(th, ph), S.D @ kron_steering(th, ph, 16, 16), atol=1e-13)


def test_sensing_row_norms(rng):
    S = make_sensing(rng, N=10)
    assert np.allclose(np.linalg.norm(S.D, axis=1), 1.0, atol=1e-12)


def test_step1_noiseless_single_path(rng):
    r = _real()
    tx = random_codebook(16, 16, "transmit", rng)
    rx = random_codebook(16, 16, "receive", rng)
    s = sound_step1(r, tx, rx, 16, 2.0, 0.0, rng)
    want = np.sqrt(2.0) * r.los.delta * s.sensing.steer(r.los.theta, r.los.phi)
    np.testing.assert_allclose(s.y, want, atol=1e-18)
    assert s.gain_scale == pytest.approx(np.sqrt(2.0))


def test_step1_blocked_is_noise(rng):
    r = _real(los_zeta=0)
    tx = random_codebook(16, 4000, "transmit", rng)
    rx = random_codebook(16, 4000, "receive", rng)
    s = sound_step1(r, tx, rx, 4000, 1.0, 3e-12, rng)
    assert np.mean(np.abs(s.y) ** 2) == pytest.approx(3e-12, rel=0.06)


def test_step1_noise_white(rng):
    r = _real(los_zeta=0)
    rx = random_codebook(16, 4, "receive", rng)
    tx = random_codebook(16, 4, "transmit", rng)
    Y = np.array([sound_step1(r, tx, rx, 4, 1.0, 1.0, rng).y for _ in range(20_000)])
    C = Y.T @ Y.conj() / len(Y)
    assert np.allclose(np.diag(C).real, 1.0, atol=0.05)
    off = C - np.diag(np.diag(C))
    assert np.max(np.abs(off)) < 3 * np.sqrt(1 / len(Y)) * 2


def test_step2_isolated_vlos(rng):
    r = _real(los_zeta=0)
    g = random_codebook(16, 16, "reflect", rng)
    rx = random_codebook(16, 16, "receive", rng)
    s = sound_step2(r, 2, g, rx, 16, 0.5, 0.0, rng)
    l = r.link(2)
    want = np.sqrt(0.5 * 16) * l.delta * s.sensing.steer(l.theta, l.phi)
    np.testing.assert_allclose(s.y, want, rtol=1e-10, atol=1e-20)
    assert s.gain_scale == pytest.approx(np.sqrt(0.5 * 16))


def test_step2_leakage_switch(rng):
    r = _real(los_zeta=1)
    g = random_codebook(16, 16, "reflect", rng)
    rx = random_codebook(16, 16, "receive", rng)
    with_leak = sound_step2(r, 2, g, rx, 16, 1.0, 0.0, np.random.default_rng(0))
    ideal = sound_step2(r, 2, g, rx, 16, 1.0, 0.0, np.random.default_rng(0), leakage=False)
    l = r.link(2)
    np.testing.assert_allclose(ideal.y, 4 * l.delta * ideal.sensing.steer(l.theta, l.phi), rtol=1e-10)
    leak = with_leak.y - ideal.y
    # direct path seen through the IRS-pointing BS beam
    f = steering_vector(16, 0.55) / 4
    direct = r.los.delta * (rx.vectors.conj() @ steering_vector(16, 0.35)) * (steering_vector(16, -0.6).conj() @ f)
    np.testing.assert_allclose(leak, direct, rtol=1e-9)


def test_step2_unknown_index(rng):
    g = random_codebook(16, 4, "reflect", rng)
    rx = random_codebook(16, 4, "receive", rng)
    with pytest.raises(ValueError, match="IRS index"):
        sound_step2(_real(), 5, g, rx, 4, 1.0, 0.0, rng)


def test_synth_unified(rng):
    S = make_sensing(rng)
    y0 = synth_unified(0, 1.0, 0.1, 0.2, S, 1e-3, np.random.default_rng(9))
    n = synth_unified(0, 5.0, 0.3, 0.4, S, 1e-3, np.random.default_rng(9))
    np.testing.assert_array_equal(y0, n)
    y = synth_unified(1, 0.5 + 0.5j, 0.1, 0.2, S, 0.0, rng)
    assert np.vdot(y, y).real == pytest.approx(0.5 * np.vdot(S.steer(0.1, 0.2), S.steer(0.1, 0.2)).real)


def test_synth_snr(rng):
    S = make_sensing(rng)
    u = S.steer(0.1, -0.3)
    want = np.vdot(u, u).real / (S.N * 0.2)
    Y = np.array([synth_unified(1, 1.0, 0.1, -0.3, S, 0.2, rng) for _ in range(1000)])
    got = np.vdot(u, u).real / np.mean(np.sum(np.abs(Y - u) ** 2, axis=1))
    assert got == pytest.approx(want, rel=0.05)


def test_session_roundtrip(tmp_path, rng):
    r = _real()
    tx = random_codebook(16, 8, "transmit", rng)
    rx = random_codebook(16, 8, "receive", rng)
    s = sound_step1(r, tx, rx, 8, 1.0, 1e-12, rng)
    save_session(tmp_path / "s.npz", s)
    t = load_session(tmp_path / "s.npz")
    np.testing.assert_array_equal(t.y, s.y)
    np.testing.assert_array_equal(t.D, s.D)
    assert t.gain_scale == s.gain_scale and t.eta == s.eta


def test_head_and_append(rng):
    S = make_sensing(rng, N=6)
    h = S.head(4)
    assert h.N == 4 and h.factored
    np.testing.assert_array_equal(h.D, S.D[:4])
    grown = h.append(S.D[4:])
    np.testing.assert_allclose(grown.D, S.D)
    assert sensing_matrix(S.tx, S.rx).N == 6
