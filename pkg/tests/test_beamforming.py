import numpy as np
import pytest

from backhaulsim.beamforming import (CoordinationError, DimensionError,
                                     TxScheme, canonical_phase,
                                     coordinated_mse_tx, local_mse_multiplier,
                                     local_mse_tx, matched_tx, mmse_rx,
                                     mse_of_filter, random_unit_beamformers,
                                     rx_covariance, tx_leakage, zf_tx_rx)
from backhaulsim.channel import ChannelRealization
from backhaulsim.netmodel import BeamformerSet, PowerProfile, link_gains, sinr

from conftest import wireless_sinr_game


def random_channel(rng, n, k, l, noise=1.0, scale=1.0):
    h = scale * (rng.standard_normal((n, n, l, k))
                 + 1j * rng.standard_normal((n, n, l, k))) / np.sqrt(2.0)
    return ChannelRealization(h=h, noise_variance=np.full(n, noise))


def sinr_of(n, p, w, u, ch):
    prof = PowerProfile(p=p, p_min=np.full(p.size, 1e-9),
                        p_max=np.full(p.size, 1e9))
    return sinr(n, prof, BeamformerSet(w=w, u=u), ch)


def test_mmse_rx_scalar_wiener_filter():
    h = np.array([[[[0.8 - 0.3j]]]])
    ch = ChannelRealization(h=h, noise_variance=np.array([0.5]))
    w = np.ones((1, 1), dtype=complex)
    p = np.array([2.0])
    u = mmse_rx(0, p, w, ch)
    hv = h[0, 0, 0, 0]
    # Filter vector proportional to the channel; the conjugation happens in
    # the applied inner product u^H y (the scalar coefficient is sqrt(P) h*).
    expected = np.sqrt(2.0) * hv / (2.0 * abs(hv) ** 2 + 0.5)
    assert np.allclose(u, expected, atol=1e-14)
    coeff = np.conj(u[0])
    assert coeff == pytest.approx(np.sqrt(2.0) * np.conj(hv)
                                  / (2.0 * abs(hv) ** 2 + 0.5))


def test_mmse_equals_one_over_one_plus_sinr():
    rng = np.random.default_rng(1)
    for _ in range(25):
        n, k, l = int(rng.integers(1, 4)), 3, 4
        ch = random_channel(rng, n, k, l, noise=rng.uniform(0.3, 2.0))
        w, _ = random_unit_beamformers(n, k, l, rng)
        p = rng.uniform(0.2, 3.0, n)
        for nn in range(n):
            u = mmse_rx(nn, p, w, ch)
            mse = mse_of_filter(nn, u, p, w, ch)
            gamma = sinr_of(nn, p, w, np.tile(u, (n, 1)), ch)
            assert abs(mse - 1.0 / (1.0 + gamma)) < 1e-10


def test_mmse_stationarity_residual():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, k, l = 2, 3, 3
        ch = random_channel(rng, n, k, l)
        w, _ = random_unit_beamformers(n, k, l, rng)
        p = rng.uniform(0.5, 2.0, n)
        for nn in range(n):
            u = mmse_rx(nn, p, w, ch)
            cov = rx_covariance(nn, p, w, ch)
            h_dir = ch.h[nn, nn] @ w[nn]
            residual = np.linalg.norm(cov @ u - np.sqrt(p[nn]) * h_dir)
            assert residual < 1e-8


def test_mmse_beats_random_filters():
    rng = np.random.default_rng(3)
    ch = random_channel(rng, 2, 3, 4)
    w, _ = random_unit_beamformers(2, 3, 4, rng)
    p = np.array([1.0, 0.7])
    for nn in range(2):
        u = mmse_rx(nn, p, w, ch)
        best = mse_of_filter(nn, u, p, w, ch)
        for _ in range(100):
            cand = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            cand /= np.linalg.norm(cand)
            assert best <= mse_of_filter(nn, cand, p, w, ch) + 1e-12


def test_mmse_rx_requires_noise_and_power():
    rng = np.random.default_rng(4)
    ch = random_channel(rng, 1, 2, 2)
    w, _ = random_unit_beamformers(1, 2, 2, rng)
    with pytest.raises(ValueError):
        mmse_rx(0, np.array([0.0]), w, ch)
    ch_bad = ChannelRealization(h=ch.h, noise_variance=np.array([1.0]))
    ch_bad.noise_variance = np.array([0.0])
    with pytest.raises(ValueError):
        mmse_rx(0, np.array([1.0]), w, ch_bad)


def test_matched_tx_identity_channel():
    h = np.eye(3, dtype=complex).reshape(1, 1, 3, 3)
    ch = ChannelRealization(h=h, noise_variance=np.array([1.0]))
    w = matched_tx(0, np.array([1.0, 0.0, 0.0], dtype=complex), ch)
    assert np.allclose(w, [1.0, 0.0, 0.0])


def test_matched_tx_maximizes_gain():
    rng = np.random.default_rng(5)
    ch = random_channel(rng, 1, 4, 3)
    u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w = matched_tx(0, u, ch)
    assert abs(np.linalg.norm(w) - 1.0) < 1e-12
    gain = abs(u.conj() @ ch.h[0, 0] @ w)
    for _ in range(100):
        cand = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        cand /= np.linalg.norm(cand)
        assert gain >= abs(u.conj() @ ch.h[0, 0] @ cand) - 1e-12


def test_matched_tx_scalar_phase():
    h = np.array([[[[0.3 + 0.4j]]]])
    ch = ChannelRealization(h=h, noise_variance=np.array([1.0]))
    w = matched_tx(0, np.array([1.0 + 0.0j]), ch)
    assert abs(abs(w[0]) - 1.0) < 1e-12
    assert w[0].imag == pytest.approx(0.0, abs=1e-12)  # canonical phase


def test_matched_tx_zero_vector_error():
    h = np.zeros((1, 1, 2, 2), dtype=complex)
    ch = ChannelRealization(h=h, noise_variance=np.array([1.0]))
    with pytest.raises(ValueError):
        matched_tx(0, np.array([1.0, 0.0], dtype=complex), ch)


def _rank1_setup(rng, a_target, k=4, l=3):
    # Scale the channel so ||H^H u|| == a_target for the unit test vector.
    h = rng.standard_normal((1, 1, l, k)) + 1j * rng.standard_normal((1, 1, l, k))
    u = rng.standard_normal(l) + 1j * rng.standard_normal(l)
    u /= np.linalg.norm(u)
    b = h[0, 0].conj().T @ u
    h *= a_target / np.linalg.norm(b)
    return ChannelRealization(h=h, noise_variance=np.array([1.0])), u


def test_local_mse_fallback_matches_matched():
    rng = np.random.default_rng(6)
    ch, u = _rank1_setup(rng, a_target=2.0)
    # P = 1, a = 2: multiplier would be 2 - 4 < 0, so the cap is slack.
    assert local_mse_multiplier(0, np.array([1.0]), u, ch) == pytest.approx(-2.0)
    w = local_mse_tx(0, np.array([1.0]), u, ch)
    assert np.allclose(w, matched_tx(0, u, ch), atol=1e-12)


def test_local_mse_positive_multiplier_case():
    rng = np.random.default_rng(7)
    ch, u = _rank1_setup(rng, a_target=2.0)
    p = np.array([0.1])
    lam = local_mse_multiplier(0, p, u, ch)
    assert lam == pytest.approx(1.6, rel=1e-12)
    w = local_mse_tx(0, p, u, ch)
    assert abs(np.linalg.norm(w) - 1.0) < 1e-12
    # Multiplier equation residual: a^2 / (P a^2 + lam)^2 == 1.
    b = ch.h[0, 0].conj().T @ u
    a2 = np.linalg.norm(b) ** 2
    assert abs(a2 / (p[0] * a2 + lam) ** 2 - 1.0) < 1e-10
    # Lagrangian stationarity of the normalized vector, up to global phase:
    # (P b b^H + lam I) w == b.
    r = p[0] * b * (b.conj() @ w) + lam * w
    resid = np.sqrt(max(np.linalg.norm(r) ** 2 + a2
                        - 2.0 * abs(b.conj() @ r), 0.0))
    assert resid < 1e-8


def test_local_mse_scalar_channel():
    h = np.array([[[[1.7 - 0.2j]]]])
    ch = ChannelRealization(h=h, noise_variance=np.array([1.0]))
    w = local_mse_tx(0, np.array([0.5]), np.array([1.0 + 0j]), ch)
    assert w[0] == pytest.approx(1.0)


def test_coordinated_reduces_to_local_without_budgets():
    rng = np.random.default_rng(8)
    ch = random_channel(rng, 2, 4, 3)
    _, u = random_unit_beamformers(2, 4, 3, rng)
    p = np.array([0.4, 0.9])
    budgets = np.full(2, np.inf)
    for nn in range(2):
        w_coord = coordinated_mse_tx(nn, p, u, ch, budgets)
        w_local = local_mse_tx(nn, p, u[nn], ch)
        assert np.allclose(w_coord, w_local, atol=1e-8)


def test_coordinated_inactive_when_orthogonal():
    rng = np.random.default_rng(9)
    ch = random_channel(rng, 2, 4, 3)
    _, u = random_unit_beamformers(2, 4, 3, rng)
    p = np.array([0.4, 0.9])
    w_local = local_mse_tx(0, p, u[0], ch)
    # Rebuild the cross channel so that link 1's filter sees nothing of w_local.
    c = ch.h[0, 1].conj().T @ u[1]
    c_perp = c - (w_local.conj() @ c) * w_local
    ch.h[0, 1] = np.outer(u[1], c_perp.conj())
    budgets = np.array([np.inf, 1e-6])
    w_coord = coordinated_mse_tx(0, p, u, ch, budgets)
    assert np.allclose(w_coord, w_local, atol=1e-8)


def test_coordinated_respects_tight_budget():
    rng = np.random.default_rng(10)
    for trial in range(5):
        ch = random_channel(rng, 2, 4, 3)
        _, u = random_unit_beamformers(2, 4, 3, rng)
        p = rng.uniform(0.3, 2.0, 2)
        w_local = local_mse_tx(0, p, u[0], ch)
        unconstrained = tx_leakage(0, p, w_local, u, ch)[1]
        budgets = np.array([np.inf, 0.5 * unconstrained])
        w = coordinated_mse_tx(0, p, u, ch, budgets)
        assert abs(np.linalg.norm(w) - 1.0) < 1e-10
        realized = tx_leakage(0, p, w, u, ch)[1]
        assert realized <= budgets[1] * (1.0 + 1e-8)


def test_zero_forcing_single_link_is_matched_pair():
    rng = np.random.default_rng(11)
    ch = random_channel(rng, 1, 4, 4)
    w0, u0 = random_unit_beamformers(1, 4, 4, rng)
    w, u = zf_tx_rx(np.array([1.0]), ch, w0, u0)
    left, s, right = np.linalg.svd(ch.h[0, 0])
    assert abs(abs(u[0].conj() @ ch.h[0, 0] @ w[0]) - s[0]) < 1e-10


def test_zero_forcing_nulls_cross_gains():
    rng = np.random.default_rng(12)
    ch = random_channel(rng, 2, 8, 8)
    w0, u0 = random_unit_beamformers(2, 8, 8, rng)
    w, u = zf_tx_rx(np.array([1.0, 1.0]), ch, w0, u0)
    for n in range(2):
        for i in range(2):
            if i != n:
                assert abs(u[i].conj() @ ch.h[n, i] @ w[n]) < 1e-6


def test_zero_forcing_dimension_error():
    rng = np.random.default_rng(13)
    ch = random_channel(rng, 9, 8, 8)
    w0, u0 = random_unit_beamformers(9, 8, 8, rng)
    with pytest.raises(DimensionError):
        zf_tx_rx(np.ones(9), ch, w0, u0)


def test_rx_update_never_hurts():
    rng = np.random.default_rng(14)
    for _ in range(25):
        n = int(rng.integers(2, 4))
        ch = random_channel(rng, n, 3, 4)
        w, u_old = random_unit_beamformers(n, 3, 4, rng)
        p = rng.uniform(0.3, 2.0, n)
        for nn in range(n):
            u_new = mmse_rx(nn, p, w, ch)
            u_stack_old = u_old.copy()
            u_stack_new = u_old.copy()
            u_stack_new[nn] = u_new
            g_new = sinr_of(nn, p, w, u_stack_new, ch)
            g_old = sinr_of(nn, p, w, u_stack_old, ch)
            assert g_new >= g_old - 1e-12 * max(1.0, g_old)


def test_tx_outputs_unit_norm_and_canonical():
    rng = np.random.default_rng(15)
    ch = random_channel(rng, 2, 5, 4)
    _, u = random_unit_beamformers(2, 5, 4, rng)
    p = np.array([0.8, 1.3])
    for fn in (lambda nn: matched_tx(nn, u[nn], ch),
               lambda nn: local_mse_tx(nn, p, u[nn], ch),
               lambda nn: coordinated_mse_tx(nn, p, u, ch, np.full(2, np.inf))):
        for nn in range(2):
            w = fn(nn)
            assert abs(np.linalg.norm(w) - 1.0) < 1e-10
            pivot = w[int(np.argmax(np.abs(w)))]
            assert pivot.imag == pytest.approx(0.0, abs=1e-12)
            assert pivot.real > 0


def test_tx_scheme_flags():
    assert not TxScheme("matched_filter").full_csi
    assert not TxScheme("local_mse").full_csi
    assert not TxScheme("fixed").full_csi
    assert TxScheme("coordinated_mse").full_csi
    assert TxScheme("coordinated_txbf").full_csi
    assert TxScheme("zero_forcing").full_csi
    with pytest.raises(ValueError):
        TxScheme("nonsense")


def test_canonical_phase_invariant_direction():
    rng = np.random.default_rng(16)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    rotated = v * np.exp(1j * 1.234)
    assert np.allclose(canonical_phase(v), canonical_phase(rotated), atol=1e-12)
