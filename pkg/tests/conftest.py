import numpy as np
import pytest

from backhaulsim.channel import ChannelModelParams, generate_channel, generate_topology
from backhaulsim.netmodel import BeamformerSet, SupplyPowerModel, link_gains
from backhaulsim.game import GameDefinition, sinr_power_game


def make_abstract_game(n=2, coupling=0.5, q_bar=1.0, lo=0.01, hi=10.0):
    """The linear toy game q_n(p) = p_n - coupling * mean of the others."""

    def qos(nn, p):
        others = np.delete(p, nn)
        return p[nn] - coupling * float(others.mean())

    return GameDefinition(
        n_players=n,
        qos_fn=qos,
        q_bar=np.full(n, float(q_bar)),
        utility_fn=lambda nn, p: -p[nn],
        p_min=np.full(n, lo),
        p_max=np.full(n, hi),
    )


def random_sinr_game(rng, n=3, sinr_db_max=20.0, coupling=0.4,
                     supply=None):
    """Synthetic feasible SINR game with controlled interference coupling."""
    sinr_min = 10.0 ** (rng.uniform(0.0, sinr_db_max / 10.0, n))
    gains = np.zeros((n, n))
    diag = rng.uniform(1.0, 4.0, n)
    for i in range(n):
        for j in range(n):
            if i == j:
                gains[i, j] = diag[i]
            else:
                # Keep the spectral radius of the best-response map around
                # `coupling` so instances stay comfortably feasible.
                scale = coupling * diag[i] / (sinr_min[i] * (n - 1))
                gains[i, j] = rng.uniform(0.1, 1.0) * scale
    noise_eff = rng.uniform(0.5, 2.0, n)
    p_min = np.full(n, 1e-3)
    p_max = np.full(n, 1e4)
    supply = supply or SupplyPowerModel(mu=10.0, alpha=4.0)
    return sinr_power_game(gains, noise_eff, sinr_min, p_min, p_max, supply)


def wireless_sinr_game(seed, n=3, k=4, sinr_db=10.0, spacing=40.0):
    """SINR game built from a full channel draw with SVD beamformers."""
    topo = generate_topology(n, spacing, seed, k_tx_antennas=k, l_rx_antennas=k)
    params = ChannelModelParams(reference_gain=1e4, pathloss_exponent=3.0,
                                rng_seed=seed)
    ch = generate_channel(topo, params)
    w = np.empty((n, k), dtype=complex)
    u = np.empty((n, k), dtype=complex)
    for i in range(n):
        left, _, right = np.linalg.svd(ch.h[i, i])
        w[i] = right[0].conj()
        u[i] = left[:, 0]
    bf = BeamformerSet(w=w, u=u)
    gains, noise_eff = link_gains(bf, ch)
    sinr_min = np.full(n, 10.0 ** (sinr_db / 10.0))
    game = sinr_power_game(gains, noise_eff, sinr_min,
                           np.full(n, 1e-3), np.full(n, 1e3),
                           SupplyPowerModel(mu=10.0, alpha=4.0))
    return game, ch, bf
