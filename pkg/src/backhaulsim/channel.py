"""Topology generation and clustered mmWave MIMO channel realizations.

Each of the N links is a serving station (SS, transmitter) paired with a
destination station (DS, receiver). Channels between every SS i and DS n are
drawn from a clustered multipath model: a sum over scattering clusters and
rays within each cluster, each ray contributing a complex gain times the
outer product of receive and transmit array responses.

All generation is purely functional in (inputs, seed): identical inputs give
bitwise-identical realizations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class PlacementError(RuntimeError):
    """Raised when random placement cannot satisfy the spacing constraints."""


@dataclass(frozen=True)
class Topology:
    """Station positions for N SS-DS pairs in the plane (meters)."""

    n_links: int
    ss_positions: np.ndarray  # (N, 2)
    ds_positions: np.ndarray  # (N, 2)
    k_tx_antennas: int
    l_rx_antennas: int

    def __post_init__(self):
        if self.n_links < 1:
            raise ValueError("n_links must be >= 1")
        if self.k_tx_antennas < 1 or self.l_rx_antennas < 1:
            raise ValueError("antenna counts must be >= 1")
        ss = np.asarray(self.ss_positions, dtype=float)
        ds = np.asarray(self.ds_positions, dtype=float)
        if ss.shape != (self.n_links, 2) or ds.shape != (self.n_links, 2):
            raise ValueError("positions must be (n_links, 2) arrays")
        if np.any(self.distances() <= 0.0):
            raise ValueError("all SS-DS distances must be strictly positive")

    def distances(self) -> np.ndarray:
        """Pairwise SS->DS distance matrix, entry (i, n) = |SS_i - DS_n|."""
        ss = np.asarray(self.ss_positions, dtype=float)
        ds = np.asarray(self.ds_positions, dtype=float)
        diff = ss[:, None, :] - ds[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class ChannelModelParams:
    """Parameters of the clustered multipath channel model."""

    n_clusters: int = 3
    n_rays_per_cluster: int = 4
    carrier_wavelength: float = 0.005  # meters (60 GHz band)
    angle_spread: float = 0.1  # radians, per-ray offset around cluster center
    pathloss_exponent: float = 3.0
    reference_gain: float = 1.0  # mean power gain at 1 m
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1 or self.n_rays_per_cluster < 1:
            raise ValueError("cluster/ray counts must be >= 1")
        if self.angle_spread < 0 or self.pathloss_exponent < 0:
            raise ValueError("angle_spread and pathloss_exponent must be >= 0")


@dataclass
class ChannelRealization:
    """One draw of all N x N channel matrices plus per-link noise power.

    h[i, n] is the L x K matrix from SS i to DS n. covariance, when present,
    holds the KL x KL covariance of vec(h[i, n]) used by the statistical
    (outage) QoS model.
    """

    h: np.ndarray  # (N, N, L, K) complex
    noise_variance: np.ndarray  # (N,) watts
    covariance: Optional[np.ndarray] = None  # (N, N, KL, KL) complex

    def __post_init__(self):
        if self.h.ndim != 4 or self.h.shape[0] != self.h.shape[1]:
            raise ValueError("h must have shape (N, N, L, K)")
        if not np.all(np.isfinite(self.h.view(float))):
            raise ValueError("channel entries must be finite")
        self.noise_variance = np.asarray(self.noise_variance, dtype=float)
        if np.any(self.noise_variance <= 0):
            raise ValueError("noise variances must be positive")

    @property
    def n_links(self) -> int:
        return self.h.shape[0]

    @property
    def l_rx(self) -> int:
        return self.h.shape[2]

    @property
    def k_tx(self) -> int:
        return self.h.shape[3]


def array_response(azimuth: float, elevation: float, n_antennas: int) -> np.ndarray:
    """Steering vector of a half-wavelength uniform linear array.

    Entries exp(-1j*pi*k*sin(az)*cos(el)) / sqrt(n) for k = 0..n-1. The
    elevation argument is kept for future planar-array geometries; a ULA only
    sees it through the cos(el) projection.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    k = np.arange(n_antennas)
    phase = -1j * np.pi * k * (np.sin(azimuth) * np.cos(elevation))
    return np.exp(phase) / np.sqrt(n_antennas)


def generate_topology(n_links: int, target_spacing: float, seed: int,
                      k_tx_antennas: int = 8, l_rx_antennas: int = 8,
                      link_distance_range: tuple = (0.15, 0.35),
                      max_tries: int = 50) -> Topology:
    """Place N SS on a jittered grid and each DS near its SS.

    SS sit on a square grid of pitch target_spacing with +/-10% jitter per
    coordinate, so nearest-neighbor SS-SS distances stay within 25% of the
    target. Each DS is dropped at a uniform angle from its SS at a distance
    drawn from link_distance_range (fractions of target_spacing).

    Raises PlacementError if the jittered draw keeps violating the spacing
    band after max_tries attempts (only possible for adversarial ranges).
    """
    if n_links < 1:
        raise ValueError("n_links must be >= 1")
    if target_spacing <= 0:
        raise ValueError("target_spacing must be positive")
    lo_frac, hi_frac = link_distance_range
    if not (0 < lo_frac <= hi_frac <= 1.0):
        raise ValueError("link_distance_range must satisfy 0 < lo <= hi <= 1")

    rng = np.random.default_rng(np.random.SeedSequence([0x70706F, seed]))
    # Fill grid cells from the center outward so the layout stays compact
    # for every N (a row-major fill makes partial grids elongated, which
    # skews the interference coupling non-monotonically with N).
    side = int(np.ceil(np.sqrt(n_links)))
    half = side / 2.0
    cells = [(r, c) for r in range(side + 1) for c in range(side + 1)]
    cells.sort(key=lambda rc: ((rc[0] - half) ** 2 + (rc[1] - half) ** 2,
                               rc[0], rc[1]))
    grid = np.array(cells[:n_links], dtype=float)

    for _ in range(max_tries):
        jitter = rng.uniform(-0.1, 0.1, size=(n_links, 2))
        ss = (grid + jitter) * target_spacing
        if n_links > 1:
            d2 = np.sum((ss[:, None, :] - ss[None, :, :]) ** 2, axis=-1)
            np.fill_diagonal(d2, np.inf)
            nearest = np.sqrt(d2.min(axis=1))
            if nearest.min() < 0.75 * target_spacing or nearest.max() > 1.25 * target_spacing:
                continue
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_links)
        dist = rng.uniform(lo_frac, hi_frac, size=n_links) * target_spacing
        ds = ss + dist[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return Topology(n_links, ss, ds, k_tx_antennas, l_rx_antennas)

    raise PlacementError(
        f"could not satisfy spacing constraints after {max_tries} tries "
        f"(n_links={n_links}, target_spacing={target_spacing})"
    )


def pathloss_gain(distance: np.ndarray, params: ChannelModelParams) -> np.ndarray:
    """Mean power gain reference_gain * d^(-pathloss_exponent)."""
    return params.reference_gain * np.asarray(distance, dtype=float) ** (-params.pathloss_exponent)


def _pair_rng(params: ChannelModelParams, i: int, n: int) -> np.random.Generator:
    # One independent, reproducible stream per (seed, i, n) triple.
    return np.random.default_rng(np.random.SeedSequence([params.rng_seed, i, n]))


def _single_channel(rng: np.random.Generator, gain: float, k_tx: int, l_rx: int,
                    params: ChannelModelParams) -> np.ndarray:
    ncl, nray = params.n_clusters, params.n_rays_per_cluster
    npaths = ncl * nray
    beta = np.sqrt(k_tx * l_rx / npaths)

    # Cluster centers, then per-ray offsets, independently for the arrival
    # (DS) and departure (SS) sides.
    def draw_angles():
        az_c = rng.uniform(0.0, 2.0 * np.pi, size=ncl)
        el_c = rng.uniform(-np.pi / 2, np.pi / 2, size=ncl)
        az = np.repeat(az_c, nray) + rng.uniform(-params.angle_spread,
                                                 params.angle_spread, size=npaths)
        el = np.repeat(el_c, nray) + rng.uniform(-params.angle_spread,
                                                 params.angle_spread, size=npaths)
        return az, el

    az_r, el_r = draw_angles()
    az_t, el_t = draw_angles()
    # Per-ray complex gains, CN(0, gain); the per-element antenna gain
    # pattern is folded into alpha (isotropic elements).
    alpha = np.sqrt(gain / 2.0) * (rng.standard_normal(npaths)
                                   + 1j * rng.standard_normal(npaths))

    h = np.zeros((l_rx, k_tx), dtype=complex)
    for p in range(npaths):
        a_r = array_response(az_r[p], el_r[p], l_rx)
        a_t = array_response(az_t[p], el_t[p], k_tx)
        h += alpha[p] * np.outer(a_r, a_t.conj())
    return beta * h


def generate_channel(topology: Topology, params: ChannelModelParams,
                     noise_variance: float = 1.0,
                     with_covariance: bool = False) -> ChannelRealization:
    """Draw all N x N channel matrices for a topology.

    Every (i, n) pair uses its own RNG stream derived from
    (params.rng_seed, i, n), so the draw is reproducible and insensitive to
    evaluation order. The sum-over-rays normalization makes
    E||h[i, n]||_F^2 = K*L*reference_gain*d(i, n)^(-pathloss_exponent).
    """
    n = topology.n_links
    k_tx, l_rx = topology.k_tx_antennas, topology.l_rx_antennas
    dist = topology.distances()
    gains = pathloss_gain(dist, params)

    h = np.zeros((n, n, l_rx, k_tx), dtype=complex)
    for i in range(n):
        for j in range(n):
            h[i, j] = _single_channel(_pair_rng(params, i, j), gains[i, j],
                                      k_tx, l_rx, params)

    noise = np.full(n, float(noise_variance))
    cov = covariance_from_params(topology, params) if with_covariance else None
    return ChannelRealization(h=h, noise_variance=noise, covariance=cov)


def covariance_from_params(topology: Topology, params: ChannelModelParams) -> np.ndarray:
    """Covariance of vec(h[i, n]) under the default i.i.d.-entry model.

    Returns an (N, N, KL, KL) array; entry (i, n) is
    reference_gain * d(i, n)^(-pathloss_exponent) * I. Hermitian PSD by
    construction.
    """
    n = topology.n_links
    kl = topology.k_tx_antennas * topology.l_rx_antennas
    gains = pathloss_gain(topology.distances(), params)
    eye = np.eye(kl, dtype=complex)
    return gains[:, :, None, None] * eye[None, None, :, :]


def sample_channel_from_covariance(cov: np.ndarray, rng: np.random.Generator,
                                   l_rx: int, k_tx: int) -> np.ndarray:
    """Draw one L x K channel with vec(H) ~ CN(0, cov).

    vec() stacks columns, matching the Kronecker identity
    u^H H w = (conj(w) kron u)^H vec(H).
    """
    kl = l_rx * k_tx
    if cov.shape != (kl, kl):
        raise ValueError("covariance size does not match antenna counts")
    z = (rng.standard_normal(kl) + 1j * rng.standard_normal(kl)) / np.sqrt(2.0)
    # Hermitian square root via eigendecomposition; tiny negative eigenvalues
    # from roundoff are clipped.
    evals, evecs = np.linalg.eigh(cov)
    root = evecs @ (np.sqrt(np.clip(evals, 0.0, None))[:, None] * evecs.conj().T)
    vec = root @ z
    return vec.reshape((k_tx, l_rx)).T  # column-major unstack


# ---------------------------------------------------------------------------
# JSON interchange (schema_version 1): complex scalars are [re, im] pairs.

def _complex_to_json(arr: np.ndarray):
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def _complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def channel_to_json(ch: ChannelRealization) -> str:
    doc = {
        "schema_version": 1,
        "kind": "channel_realization",
        "n_links": ch.n_links,
        "l_rx": ch.l_rx,
        "k_tx": ch.k_tx,
        "noise_variance": ch.noise_variance.tolist(),
        "h": _complex_to_json(ch.h),
        "covariance": None if ch.covariance is None else _complex_to_json(ch.covariance),
    }
    return json.dumps(doc, sort_keys=True)


def channel_from_json(text: str) -> ChannelRealization:
    doc = json.loads(text)
    if doc.get("kind") != "channel_realization" or doc.get("schema_version") != 1:
        raise ValueError("not a schema_version-1 channel_realization document")
    h = _complex_from_json(doc["h"])
    cov = doc.get("covariance")
    return ChannelRealization(
        h=h,
        noise_variance=np.asarray(doc["noise_variance"], dtype=float),
        covariance=None if cov is None else _complex_from_json(cov),
    )
