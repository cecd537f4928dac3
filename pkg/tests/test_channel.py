import numpy as np
import pytest

from backhaulsim.channel import (ChannelModelParams, PlacementError, Topology,
                                 array_response, channel_from_json,
                                 channel_to_json, covariance_from_params,
                                 generate_channel, generate_topology,
                                 sample_channel_from_covariance)


def test_array_response_broadside():
    a = array_response(0.0, 0.0, 4)
    assert np.allclose(a, 0.5)


def test_array_response_single_antenna():
    a = array_response(1.3, -0.7, 1)
    assert a.shape == (1,)
    assert np.allclose(a, 1.0)


def test_array_response_endfire_two_elements():
    # Direct phase evaluation: exp(-1j*pi*k*sin(pi/2)*cos(0))/sqrt(2), k=0,1.
    a = array_response(np.pi / 2, 0.0, 2)
    expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
    assert np.allclose(a, expected, atol=1e-12)


def test_array_response_unit_norm():
    rng = np.random.default_rng(5)
    for _ in range(50):
        az, el = rng.uniform(-np.pi, np.pi, 2)
        n = int(rng.integers(1, 33))
        a = array_response(az, el, n)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-12
        assert np.allclose(np.abs(a), 1.0 / np.sqrt(n))


def test_topology_single_link():
    topo = generate_topology(1, 50.0, seed=7)
    assert topo.n_links == 1
    assert topo.distances()[0, 0] <= 50.0


def test_topology_deterministic():
    a = generate_topology(10, 50.0, seed=7)
    b = generate_topology(10, 50.0, seed=7)
    assert np.array_equal(a.ss_positions, b.ss_positions)
    assert np.array_equal(a.ds_positions, b.ds_positions)


def test_topology_seed_sensitivity():
    a = generate_topology(10, 50.0, seed=7)
    b = generate_topology(10, 50.0, seed=8)
    assert not np.allclose(a.ss_positions, b.ss_positions)


def test_topology_spacing_band():
    for seed in range(5):
        topo = generate_topology(12, 40.0, seed=seed)
        ss = topo.ss_positions
        d2 = np.sum((ss[:, None] - ss[None, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        nearest = np.sqrt(d2.min(axis=1))
        assert nearest.min() >= 0.75 * 40.0
        assert nearest.max() <= 1.25 * 40.0
        link = np.linalg.norm(ss - topo.ds_positions, axis=1)
        assert np.all(link <= 40.0)


def test_topology_rejects_bad_args():
    with pytest.raises(ValueError):
        generate_topology(0, 50.0, seed=1)
    with pytest.raises(ValueError):
        generate_topology(3, -1.0, seed=1)
    with pytest.raises((ValueError, PlacementError)):
        generate_topology(3, 50.0, seed=1, link_distance_range=(0.9, 0.1))


def _one_link_topology(distance, k=2, l=2):
    return Topology(1, np.array([[0.0, 0.0]]), np.array([[distance, 0.0]]), k, l)


def test_channel_single_path_is_rank_one():
    topo = _one_link_topology(5.0, k=4, l=4)
    params = ChannelModelParams(n_clusters=1, n_rays_per_cluster=1, rng_seed=3)
    ch = generate_channel(topo, params)
    s = np.linalg.svd(ch.h[0, 0], compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_channel_deterministic():
    topo = generate_topology(4, 40.0, seed=2, k_tx_antennas=4, l_rx_antennas=4)
    params = ChannelModelParams(rng_seed=11)
    a = generate_channel(topo, params)
    b = generate_channel(topo, params)
    assert np.array_equal(a.h, b.h)


def test_channel_scalar_pathloss_monte_carlo():
    # K = L = 1: |H|^2 averages to reference_gain * d^(-pathloss_exponent).
    d = 3.0
    topo = _one_link_topology(d, k=1, l=1)
    expected = 2.0 * d ** -2.5
    vals = np.empty(10_000)
    for s in range(vals.size):
        params = ChannelModelParams(n_clusters=1, n_rays_per_cluster=1,
                                    pathloss_exponent=2.5, reference_gain=2.0,
                                    rng_seed=s)
        vals[s] = np.abs(generate_channel(topo, params).h[0, 0, 0, 0]) ** 2
    assert abs(vals.mean() - expected) < 0.05 * expected


def test_channel_frobenius_normalization():
    # E ||H||_F^2 = K * L * pathloss gain under the sum-over-rays scaling.
    d = 4.0
    topo = _one_link_topology(d, k=2, l=2)
    expected = 2 * 2 * 1.5 * d ** -3.0
    vals = np.empty(4000)
    for s in range(vals.size):
        params = ChannelModelParams(n_clusters=2, n_rays_per_cluster=2,
                                    pathloss_exponent=3.0, reference_gain=1.5,
                                    rng_seed=s)
        vals[s] = np.linalg.norm(generate_channel(topo, params).h[0, 0]) ** 2
    assert abs(vals.mean() - expected) < 0.05 * expected


def test_covariance_default_model():
    topo = _one_link_topology(1.0, k=2, l=2)
    params = ChannelModelParams(pathloss_exponent=0.0, reference_gain=1.0)
    cov = covariance_from_params(topo, params)
    assert cov.shape == (1, 1, 4, 4)
    assert np.allclose(cov[0, 0], np.eye(4))


def test_covariance_hermitian():
    topo = generate_topology(3, 30.0, seed=4, k_tx_antennas=2, l_rx_antennas=3)
    cov = covariance_from_params(topo, ChannelModelParams())
    for i in range(3):
        for n in range(3):
            assert np.max(np.abs(cov[i, n] - cov[i, n].conj().T)) < 1e-12


def test_covariance_sampling_matches():
    topo = _one_link_topology(2.0, k=2, l=2)
    params = ChannelModelParams(pathloss_exponent=1.0, reference_gain=0.7)
    cov = covariance_from_params(topo, params)[0, 0]
    rng = np.random.default_rng(9)
    vecs = np.empty((10_000, 4), dtype=complex)
    for t in range(vecs.shape[0]):
        h = sample_channel_from_covariance(cov, rng, l_rx=2, k_tx=2)
        vecs[t] = h.T.reshape(-1)  # column-major vec
    emp = vecs.conj().T @ vecs / vecs.shape[0]
    emp = emp.T  # E[vec vec^H]
    assert np.max(np.abs(emp - cov)) < 0.1 * np.max(np.abs(cov))


def test_channel_json_roundtrip():
    topo = generate_topology(2, 30.0, seed=1, k_tx_antennas=2, l_rx_antennas=3)
    ch = generate_channel(topo, ChannelModelParams(rng_seed=6),
                          with_covariance=True)
    back = channel_from_json(channel_to_json(ch))
    assert np.array_equal(back.h, ch.h)
    assert np.array_equal(back.noise_variance, ch.noise_variance)
    assert np.array_equal(back.covariance, ch.covariance)
