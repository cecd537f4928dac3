"""Monotonic generalized Nash game engine for distributed power allocation.

The game: each of N players (links) picks a transmit power inside its box to
maximize a utility that decreases in its own power, subject to a QoS
constraint q_n(p) >= q_bar_n that rises with its own power and falls with
everyone else's. Players iterate asynchronous best responses from the
bottom of the box; the trajectory climbs monotonically and either settles
(an epsilon-GNE that is also socially optimal when utilities are local) or
some player hits its power ceiling, which certifies infeasibility.

Message accounting follows the over-the-air protocol: one pilot and one Ack
per best-response probe, plus one notification-channel event per player per
round, i.e. 3N messages per full round.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .netmodel import (SATURATION_GUARD, PowerProfile, SupplyPowerModel,
                       outage_qos_from_gains, sinr_from_gains,
                       supply_power_scalar)

VERDICT_CONVERGED = "converged"
VERDICT_INFEASIBLE = "infeasible"
VERDICT_ITERATION_CAP = "iteration_cap"

_BISECT_REL_TOL = 1e-10


@dataclass(frozen=True)
class LinearSinrForm:
    """Closed-form data for the linear SINR game: effective gains and noise."""

    gains: np.ndarray  # (N, N), gains[n, i] = |u_n^H H_{i,n} w_i|^2
    noise_eff: np.ndarray  # (N,)


@dataclass
class GameDefinition:
    """A monotonic generalized Nash game over power vectors."""

    n_players: int
    qos_fn: Callable[[int, np.ndarray], float]
    q_bar: np.ndarray
    utility_fn: Callable[[int, np.ndarray], float]
    p_min: np.ndarray
    p_max: np.ndarray
    lipschitz_bound: Optional[float] = None
    linear: Optional[LinearSinrForm] = None

    def __post_init__(self):
        self.q_bar = np.asarray(self.q_bar, dtype=float)
        self.p_min = np.ascontiguousarray(self.p_min, dtype=float)
        self.p_max = np.ascontiguousarray(self.p_max, dtype=float)
        if np.any(self.p_min <= 0) or np.any(self.p_min >= self.p_max):
            raise ValueError("need 0 < p_min < p_max per player")


@dataclass
class SolverParams:
    """Termination and scheduling knobs for the best-response engine.

    epsilon pads the QoS target during updates and doubles as the
    epsilon-GNE certificate accuracy. delta is the per-round movement
    threshold that stops the game; when omitted it defaults to
    epsilon / lipschitz_bound if the game provides a Lipschitz constant,
    else to 1e-6 * max(p_max).
    """

    epsilon: float = 1e-3
    delta: Optional[float] = None
    max_iters: int = 10000
    update_order: str = "round_robin"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.update_order not in ("round_robin", "seeded_random_permutation"):
            raise ValueError(f"unknown update_order: {self.update_order}")

    def resolved_delta(self, game: GameDefinition) -> float:
        if self.delta is not None:
            return self.delta
        if game.lipschitz_bound and self.epsilon > 0:
            return self.epsilon / game.lipschitz_bound
        return 1e-6 * float(np.max(game.p_max))


@dataclass
class GneResult:
    """Outcome of one power game run."""

    verdict: str
    p_star: PowerProfile
    iterations: int
    messages: int
    per_round_powers: np.ndarray  # (iterations + 1, N), row 0 = start

    @property
    def converged(self) -> bool:
        return self.verdict == VERDICT_CONVERGED


def best_response(n: int, p: np.ndarray, game: GameDefinition, epsilon: float,
                  lower: Optional[float] = None) -> Optional[float]:
    """Minimal power in [lower, p_max] meeting the epsilon-padded QoS.

    lower defaults to the player's box bottom. Returns None when even the
    box top fails the padded constraint (the infeasibility signal). For
    games carrying the linear SINR structure this is closed form; otherwise
    a bisection on the monotone QoS function to 1e-10 * p_max.
    """
    lo = game.p_min[n] if lower is None else max(lower, game.p_min[n])
    hi = game.p_max[n]
    target = game.q_bar[n] + epsilon

    if game.linear is not None:
        gains, noise_eff = game.linear.gains, game.linear.noise_eff
        own = gains[n, n]
        if own <= 0.0:
            return None
        interf = float(gains[n] @ p) - gains[n, n] * p[n]
        required = target * (noise_eff[n] + interf) / own
        if required > hi:
            return None
        return max(required, lo)

    def q_at(power: float) -> float:
        trial = p.copy()
        trial[n] = power
        return game.qos_fn(n, trial)

    if q_at(hi) < target:
        return None
    if q_at(lo) >= target:
        return lo
    tol = _BISECT_REL_TOL * hi
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if q_at(mid) >= target:
            b = mid
        else:
            a = mid
    return b


def run_gne(game: GameDefinition, params: SolverParams) -> GneResult:
    """Asynchronous best-response dynamics from the bottom of the box.

    Powers start at p_min and only ever move up. The run stops when a full
    round moves nobody by more than delta (converged), when a player's
    padded QoS is unreachable at its p_max (infeasible), or at max_iters.
    """
    n = game.n_players
    delta = params.resolved_delta(game)
    p = game.p_min.copy()
    history = [p.copy()]
    messages = 0
    rounds = 0
    verdict = VERDICT_ITERATION_CAP

    order_rng = None
    if params.update_order == "seeded_random_permutation":
        order_rng = np.random.default_rng(
            np.random.SeedSequence([0x6F726472, params.seed]))
    base_order = np.arange(n, dtype=np.intp)

    use_kernel = game.linear is not None
    if use_kernel:
        gains = np.ascontiguousarray(game.linear.gains, dtype=float)
        noise_eff = np.ascontiguousarray(game.linear.noise_eff, dtype=float)
        sinr_target = np.ascontiguousarray(game.q_bar + params.epsilon)

    while rounds < params.max_iters:
        if order_rng is not None:
            order = order_rng.permutation(n).astype(np.intp)
        else:
            order = base_order
        if use_kernel:
            max_move, infeasible, probes = kernels.sinr_round(
                gains, noise_eff, sinr_target, p, game.p_max, order)
        else:
            max_move, infeasible, probes = _generic_round(game, params.epsilon,
                                                          p, order)
        rounds += 1
        messages += 3 * probes
        history.append(p.copy())
        if infeasible >= 0:
            verdict = VERDICT_INFEASIBLE
            break
        if max_move <= delta:
            verdict = VERDICT_CONVERGED
            break

    if verdict == VERDICT_CONVERGED:
        bound = float(n * np.max(game.p_max - game.p_min) / delta)
        assert rounds <= max(bound, 1.0), "round count exceeded the theoretical bound"

    profile = PowerProfile(p=p, p_min=game.p_min.copy(), p_max=game.p_max.copy())
    return GneResult(verdict=verdict, p_star=profile, iterations=rounds,
                     messages=messages, per_round_powers=np.array(history))


def _generic_round(game: GameDefinition, epsilon: float, p: np.ndarray, order):
    max_move = 0.0
    for idx, nn in enumerate(order):
        br = best_response(int(nn), p, game, epsilon, lower=p[nn])
        if br is None:
            return max_move, int(nn), idx + 1
        move = br - p[nn]
        if move > 0.0:
            p[nn] = br
            if move > max_move:
                max_move = move
    return max_move, -1, len(order)


@dataclass
class GneCertificate:
    """Per-player epsilon-GNE check: feasibility plus best-deviation slack."""

    ok: bool
    feasible: np.ndarray  # (N,) bool, q_n(p) >= q_bar_n
    qos_slack: np.ndarray  # (N,) q_n(p) - q_bar_n
    utility_slack: np.ndarray  # (N,) best feasible utility gain


def verify_epsilon_gne(p: np.ndarray, game: GameDefinition,
                       epsilon: float) -> GneCertificate:
    """Check that p is feasible and no player can gain more than epsilon.

    The benchmark deviation is each player's unpadded best response over its
    full box with the others held fixed. Feasibility allows a 1e-9 relative
    slack for termination drift (the last movers in a round can push an
    earlier player marginally below target).
    """
    n = game.n_players
    feasible = np.zeros(n, dtype=bool)
    qos_slack = np.zeros(n)
    utility_slack = np.zeros(n)
    p = np.asarray(p, dtype=float)

    for nn in range(n):
        q = game.qos_fn(nn, p)
        qos_slack[nn] = q - game.q_bar[nn]
        feasible[nn] = qos_slack[nn] >= -1e-9 * max(1.0, abs(game.q_bar[nn]))
        br = best_response(nn, p, game, 0.0)
        if br is None:
            continue
        trial = p.copy()
        trial[nn] = br
        utility_slack[nn] = game.utility_fn(nn, trial) - game.utility_fn(nn, p)

    ok = bool(np.all(feasible) and np.all(utility_slack <= epsilon))
    return GneCertificate(ok=ok, feasible=feasible, qos_slack=qos_slack,
                          utility_slack=utility_slack)


def brute_force_social_optimum(game: GameDefinition, grid_points_per_dim: int):
    """Exhaustive grid search for the feasible point of least social cost.

    Independent oracle for the social-optimality corollary; exponential in
    N, so limited to N <= 3. Returns (powers, social_cost) or None when no
    grid point is feasible. Cost ties break toward the lexicographically
    smallest power vector, which the row-major scan order gives for free.
    """
    if game.n_players > 3:
        raise ValueError("brute-force oracle is exponential; N <= 3 only")
    if grid_points_per_dim < 16:
        raise ValueError("grid_points_per_dim must be >= 16")

    axes = [np.linspace(game.p_min[n], game.p_max[n], grid_points_per_dim)
            for n in range(game.n_players)]
    best_cost = np.inf
    best_p = None
    p = np.zeros(game.n_players)

    def scan(depth: int):
        nonlocal best_cost, best_p
        if depth == game.n_players:
            for nn in range(game.n_players):
                if game.qos_fn(nn, p) < game.q_bar[nn]:
                    return
            cost = -sum(game.utility_fn(nn, p) for nn in range(game.n_players))
            if cost < best_cost:
                best_cost = cost
                best_p = p.copy()
            return
        for value in axes[depth]:
            p[depth] = value
            scan(depth + 1)

    scan(0)
    if best_p is None:
        return None
    return best_p, float(best_cost)


# ---------------------------------------------------------------------------
# Game factories

def _supply_utility(p_min: np.ndarray, p_max: np.ndarray,
                    supply: SupplyPowerModel) -> Callable[[int, np.ndarray], float]:
    def utility(n: int, p: np.ndarray) -> float:
        guarded = min(p[n], p_max[n] * (1.0 - SATURATION_GUARD))
        return -supply_power_scalar(guarded, p_min[n], p_max[n], supply)

    return utility


def sinr_power_game(gains: np.ndarray, noise_eff: np.ndarray,
                    sinr_min: np.ndarray, p_min: np.ndarray, p_max: np.ndarray,
                    supply: Optional[SupplyPowerModel] = None) -> GameDefinition:
    """Power game with SINR-threshold QoS under fixed beamformers.

    gains[n, i] and noise_eff[n] come from netmodel.link_gains. The QoS
    function is the SINR itself, so its Lipschitz constant over the box is
    available in closed form and best responses have a closed form too.
    """
    gains = np.ascontiguousarray(gains, dtype=float)
    noise_eff = np.ascontiguousarray(noise_eff, dtype=float)
    sinr_min = np.asarray(sinr_min, dtype=float)
    p_min = np.asarray(p_min, dtype=float)
    p_max = np.asarray(p_max, dtype=float)
    supply = supply or SupplyPowerModel()
    n = len(noise_eff)

    def qos(nn: int, p: np.ndarray) -> float:
        return sinr_from_gains(nn, p, gains, noise_eff)

    # Slope bounds over the box: own-power slope g_nn / noise, cross-power
    # slope at most p_max * g_nn * g_in / noise^2.
    own_slope = np.diag(gains) / noise_eff
    cross = gains.copy()
    np.fill_diagonal(cross, 0.0)
    cross_slope = p_max * np.diag(gains) * cross.max(axis=1) / noise_eff ** 2
    lipschitz = float(np.max(np.maximum(own_slope, cross_slope)))

    return GameDefinition(
        n_players=n,
        qos_fn=qos,
        q_bar=sinr_min,
        utility_fn=_supply_utility(p_min, p_max, supply),
        p_min=p_min,
        p_max=p_max,
        lipschitz_bound=lipschitz if lipschitz > 0 else None,
        linear=LinearSinrForm(gains=gains, noise_eff=noise_eff),
    )


def outage_power_game(mean_gains: np.ndarray, noise_variance: np.ndarray,
                      sinr_floor: np.ndarray, success_min: np.ndarray,
                      p_min: np.ndarray, p_max: np.ndarray,
                      supply: Optional[SupplyPowerModel] = None) -> GameDefinition:
    """Power game with outage-probability QoS under channel statistics.

    mean_gains[n, i] is the expected beamformed gain from SS i at DS n
    (netmodel.outage_gains); the QoS function is the closed-form success
    probability, handled by the generic bisection path.
    """
    mean_gains = np.asarray(mean_gains, dtype=float)
    noise_variance = np.asarray(noise_variance, dtype=float)
    sinr_floor = np.asarray(sinr_floor, dtype=float)
    success_min = np.asarray(success_min, dtype=float)
    p_min = np.asarray(p_min, dtype=float)
    p_max = np.asarray(p_max, dtype=float)
    supply = supply or SupplyPowerModel()

    def qos(nn: int, p: np.ndarray) -> float:
        return outage_qos_from_gains(nn, p, mean_gains, sinr_floor,
                                     float(noise_variance[nn]))

    return GameDefinition(
        n_players=len(p_min),
        qos_fn=qos,
        q_bar=success_min,
        utility_fn=_supply_utility(p_min, p_max, supply),
        p_min=p_min,
        p_max=p_max,
    )


# ---------------------------------------------------------------------------
# Serialization

def gne_result_to_json(result: GneResult) -> str:
    doc = {
        "schema_version": 1,
        "kind": "gne_result",
        "verdict": result.verdict,
        "iterations": result.iterations,
        "messages": result.messages,
        "p_star": result.p_star.p.tolist(),
        "p_min": result.p_star.p_min.tolist(),
        "p_max": result.p_star.p_max.tolist(),
        "per_round_powers": result.per_round_powers.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def trajectory_to_csv(result: GneResult) -> str:
    """Power trajectory as CSV with columns (round, player, power)."""
    lines = ["round,player,power"]
    for t, row in enumerate(result.per_round_powers):
        for n, value in enumerate(row):
            lines.append(f"{t},{n},{float(value)!r}")
    return "\n".join(lines) + "\n"
