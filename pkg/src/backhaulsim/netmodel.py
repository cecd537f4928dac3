"""Physical-layer quantities: SINR, QoS functions, supply power, efficiency.

Everything here is a pure function of its inputs. Noise enters the SINR as
its expectation over the receive filter, sigma^2 * ||u||^2, which keeps the
QoS constraint deterministic and consistent with the MMSE identity
MSE = 1/(1 + sinr).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRealization

# Supply power diverges at the PA saturation point; callers evaluating the
# cost clamp powers to p_max * (1 - SATURATION_GUARD).
SATURATION_GUARD = 1e-6


@dataclass
class PowerProfile:
    """Joint transmit-power vector with per-link box bounds (watts)."""

    p: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.p_min = np.asarray(self.p_min, dtype=float)
        self.p_max = np.asarray(self.p_max, dtype=float)
        if np.any(self.p_min <= 0) or np.any(self.p_min >= self.p_max):
            raise ValueError("need 0 < p_min < p_max per link")
        if np.any(self.p < self.p_min - 1e-15) or np.any(self.p > self.p_max + 1e-15):
            raise ValueError("power outside its box bounds")


@dataclass
class BeamformerSet:
    """Per-link transmit vectors w (unit norm) and receive vectors u."""

    w: np.ndarray  # (N, K) complex
    u: np.ndarray  # (N, L) complex

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        self.u = np.asarray(self.u, dtype=complex)
        wn = np.linalg.norm(self.w, axis=1)
        if np.any(np.abs(wn - 1.0) > 1e-10):
            raise ValueError("transmit beamformers must be unit norm")
        if np.any(np.linalg.norm(self.u, axis=1) == 0.0):
            raise ValueError("receive filters must be nonzero")


@dataclass(frozen=True)
class SupplyPowerModel:
    """Logistic-inverse supply power curve: baseband floor plus PA ramp-up.

    mu is the supply power at half the saturation power (watts); alpha sets
    how steeply the PA approaches saturation (1/watts).
    """

    mu: float = 10.0
    alpha: float = 4.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class QosSpec:
    """Per-link QoS requirement.

    kind "sinr_threshold": sinr_min holds linear SINR floors.
    kind "outage_probability": sinr_min is the fading SINR floor and
    success_min the required probability of staying above it.
    """

    kind: str
    sinr_min: np.ndarray
    success_min: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("sinr_threshold", "outage_probability"):
            raise ValueError(f"unknown QoS kind: {self.kind}")
        object.__setattr__(self, "sinr_min", np.asarray(self.sinr_min, dtype=float))
        if np.any(self.sinr_min <= 0):
            raise ValueError("SINR thresholds must be positive")
        if self.kind == "outage_probability":
            if self.success_min is None:
                raise ValueError("outage_probability needs success_min")
            q = np.asarray(self.success_min, dtype=float)
            object.__setattr__(self, "success_min", q)
            if np.any((q <= 0) | (q >= 1)):
                raise ValueError("success_min must lie in (0, 1)")


def link_gains(bf: BeamformerSet, ch: ChannelRealization):
    """Effective power gains and noise terms under fixed beamformers.

    Returns (gains, noise_eff) where gains[n, i] = |u_n^H H_{i,n} w_i|^2 and
    noise_eff[n] = sigma_n^2 * ||u_n||^2. These two arrays are all the power
    game needs.
    """
    amp = np.einsum("nl,inlk,ik->ni", bf.u.conj(), ch.h, bf.w)
    gains = np.abs(amp) ** 2
    noise_eff = ch.noise_variance * np.sum(np.abs(bf.u) ** 2, axis=1)
    return gains, noise_eff


def sinr(n: int, p: PowerProfile, bf: BeamformerSet, ch: ChannelRealization) -> float:
    """SINR of link n: own received power over interference plus noise."""
    gains, noise_eff = link_gains(bf, ch)
    return sinr_from_gains(n, p.p, gains, noise_eff)


def sinr_from_gains(n: int, p: np.ndarray, gains: np.ndarray,
                    noise_eff: np.ndarray) -> float:
    interference = float(gains[n] @ p) - gains[n, n] * p[n]
    return p[n] * gains[n, n] / (interference + noise_eff[n])


def qos_margin_linear(n: int, p: PowerProfile, bf: BeamformerSet,
                      ch: ChannelRealization, spec: QosSpec) -> float:
    """Signed slack of the linearized SINR constraint for link n.

    Positive iff sinr(n) >= spec.sinr_min[n]; it is the same arithmetic as
    the SINR ratio, cleared of its denominator.
    """
    if spec.kind != "sinr_threshold":
        raise ValueError("qos_margin_linear needs a sinr_threshold spec")
    gains, noise_eff = link_gains(bf, ch)
    interference = float(gains[n] @ p.p) - gains[n, n] * p.p[n]
    return p.p[n] * gains[n, n] - spec.sinr_min[n] * (noise_eff[n] + interference)


def outage_gains(bf: BeamformerSet, cov: np.ndarray) -> np.ndarray:
    """Mean effective gains g[n, i] = (conj(w_i) kron u_n)^H Cov_{i,n} (...).

    cov is the (N, N, KL, KL) covariance stack of vec(H_{i,n}); g[n, i] is
    E|u_n^H H_{i,n} w_i|^2 under that distribution.
    """
    n_links = cov.shape[0]
    g = np.zeros((n_links, n_links))
    for n in range(n_links):
        for i in range(n_links):
            v = np.kron(bf.w[i].conj(), bf.u[n])
            g[n, i] = float(np.real(v.conj() @ cov[i, n] @ v))
    return g


def outage_qos(n: int, p: PowerProfile, bf: BeamformerSet,
               ch: ChannelRealization, spec: QosSpec) -> float:
    """Probability that link n's fading SINR clears spec.sinr_min[n].

    Correlated-Rayleigh closed form: an exponential own-noise factor times a
    product of interference penalty terms. Requires ch.covariance.
    """
    if spec.kind != "outage_probability":
        raise ValueError("outage_qos needs an outage_probability spec")
    if ch.covariance is None:
        raise ValueError("outage_qos needs channel covariances")
    g = outage_gains(bf, ch.covariance)
    return outage_qos_from_gains(n, p.p, g, spec.sinr_min,
                                 float(ch.noise_variance[n]))


def outage_qos_from_gains(n: int, p: np.ndarray, g: np.ndarray,
                          sinr_min: np.ndarray, sigma2: float) -> float:
    """Same closed form on precomputed mean gains g[n, i]."""
    if g[n, n] <= 0.0:
        raise ValueError(f"degenerate direct link: g[{n},{n}] = 0")
    own = g[n, n] * p[n]
    expo = np.exp(-0.5 * sinr_min[n] * sigma2 / own)
    others = np.delete(np.arange(len(p)), n)
    prod = np.prod(1.0 / (1.0 + sinr_min[n] * g[n, others] * p[others] / own))
    return float(expo * prod)


def supply_power(n: int, p: PowerProfile, model: SupplyPowerModel) -> float:
    """Supply power of SS n under the S-shaped consumption model.

    Constant below the circuit floor p_min, then
    mu - log(p_max / P - 1) / alpha, which rises to +inf at saturation.
    """
    return supply_power_scalar(p.p[n], p.p_min[n], p.p_max[n], model)


def supply_power_scalar(power: float, p_min: float, p_max: float,
                        model: SupplyPowerModel) -> float:
    if power >= p_max:
        raise ValueError(
            f"supply power undefined at PA saturation (P={power} >= p_max={p_max}); "
            f"clamp to p_max*(1 - SATURATION_GUARD) first"
        )
    p_eff = max(power, p_min)
    return model.mu - np.log(p_max / p_eff - 1.0) / model.alpha


def total_supply_power(p: np.ndarray, p_min: np.ndarray, p_max: np.ndarray,
                       model: SupplyPowerModel) -> float:
    """Sum of per-link supply powers with the saturation guard applied."""
    guarded = np.minimum(np.asarray(p, dtype=float),
                         p_max * (1.0 - SATURATION_GUARD))
    guarded = np.maximum(guarded, p_min)
    return float(np.sum(model.mu - np.log(p_max / guarded - 1.0) / model.alpha))


def spectrum_efficiency(sinr_value: float) -> float:
    """Achievable rate log2(1 + sinr) in bits/s/Hz."""
    return float(np.log2(1.0 + sinr_value))


def beamformers_to_json(bf: BeamformerSet) -> str:
    """Serialize in the shared complex-number schema ([re, im] pairs)."""
    import json

    from .channel import _complex_to_json

    return json.dumps({
        "schema_version": 1,
        "kind": "beamformer_set",
        "w": _complex_to_json(bf.w),
        "u": _complex_to_json(bf.u),
    }, sort_keys=True)


def beamformers_from_json(text: str) -> BeamformerSet:
    import json

    from .channel import _complex_from_json

    doc = json.loads(text)
    if doc.get("kind") != "beamformer_set" or doc.get("schema_version") != 1:
        raise ValueError("not a schema_version-1 beamformer_set document")
    return BeamformerSet(w=_complex_from_json(doc["w"]),
                         u=_complex_from_json(doc["u"]))
