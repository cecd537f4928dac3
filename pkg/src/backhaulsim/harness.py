"""Two-stage driver and Monte Carlo experiment harness.

The two-stage loop alternates the distributed power game (stage 1) with
per-link beamformer refreshes (stage 2): every receiver re-solves its MMSE
filter against the powers the game just settled on, then every transmitter
applies the configured update once. Before the first game each SS fires a
pilot burst at its power ceiling so receivers can measure interference and
start from meaningful MMSE filters rather than the raw random draw.

Sweeps run independent seeded trials over (number of links, SINR threshold)
grids and aggregate converged-trial metrics, reporting the infeasible
fraction separately.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .beamforming import (TxScheme, canonical_phase, coordinated_mse_tx,
                          local_mse_tx, matched_tx, mmse_rx,
                          random_unit_beamformers, tx_leakage, zf_tx_rx)
from .channel import (ChannelModelParams, ChannelRealization, Topology,
                      _complex_from_json, _complex_to_json, generate_channel,
                      generate_topology)
from .game import (SolverParams, run_gne, sinr_power_game, VERDICT_CONVERGED,
                   VERDICT_INFEASIBLE)
from .netmodel import (BeamformerSet, QosSpec, SupplyPowerModel, link_gains,
                       spectrum_efficiency, total_supply_power)

VERDICT_CAP = "cap"

SWEEP_METRICS = ("sum_supply_power", "sum_spectrum_efficiency", "outer_rounds",
                 "power_iterations", "messages", "messages_per_outer_round",
                 "csi_reports", "csi_reports_per_outer_round")


@dataclass
class NetworkInstance:
    """Everything one simulation run needs: geometry, channels, targets."""

    topology: Topology
    channel: ChannelRealization
    qos: QosSpec
    supply: SupplyPowerModel
    p_min: np.ndarray
    p_max: np.ndarray

    @property
    def n_links(self) -> int:
        return self.topology.n_links


@dataclass(frozen=True)
class ScenarioConfig:
    """Instance-generation recipe shared by all trials of an experiment."""

    k_tx: int = 8
    l_rx: int = 8
    target_spacing: float = 40.0
    link_distance_range: tuple = (0.12, 0.30)
    n_clusters: int = 3
    n_rays_per_cluster: int = 4
    carrier_wavelength: float = 0.005
    angle_spread: float = 0.1
    pathloss_exponent: float = 3.0
    reference_gain: float = 1e4
    noise_variance: float = 1.0
    p_min: float = 1e-3
    p_max: float = 1e3
    supply_mu: float = 10.0
    supply_alpha: float = 4.0


def build_instance(scenario: ScenarioConfig, n_links: int, sinr_db: float,
                   seed: int) -> NetworkInstance:
    """Materialize one random instance at the given size and SINR target."""
    topo = generate_topology(
        n_links, scenario.target_spacing, seed,
        k_tx_antennas=scenario.k_tx, l_rx_antennas=scenario.l_rx,
        link_distance_range=scenario.link_distance_range)
    params = ChannelModelParams(
        n_clusters=scenario.n_clusters,
        n_rays_per_cluster=scenario.n_rays_per_cluster,
        carrier_wavelength=scenario.carrier_wavelength,
        angle_spread=scenario.angle_spread,
        pathloss_exponent=scenario.pathloss_exponent,
        reference_gain=scenario.reference_gain,
        rng_seed=seed)
    ch = generate_channel(topo, params, noise_variance=scenario.noise_variance)
    qos = QosSpec(kind="sinr_threshold",
                  sinr_min=np.full(n_links, 10.0 ** (sinr_db / 10.0)))
    return NetworkInstance(
        topology=topo, channel=ch, qos=qos,
        supply=SupplyPowerModel(mu=scenario.supply_mu, alpha=scenario.supply_alpha),
        p_min=np.full(n_links, scenario.p_min),
        p_max=np.full(n_links, scenario.p_max))


@dataclass
class RoundRecord:
    """State after one outer round (stage 1 metrics use the beamformers the
    power game actually played against)."""

    round: int
    powers: np.ndarray
    beamformer_digest: str
    sinr: np.ndarray
    sum_supply_power: float
    sum_spectrum_efficiency: float
    power_iterations: int
    messages: int


@dataclass
class RunTrace:
    """Full record of one two-stage run."""

    verdict: str
    outer_rounds: int
    per_round: list
    final_powers: np.ndarray
    final_u: np.ndarray
    final_w: np.ndarray
    sinr_min: np.ndarray
    epsilon: float
    delta: float
    scheme: str
    init_seed: int
    power_iterations: int
    messages: int
    csi_reports: int

    @property
    def converged(self) -> bool:
        return self.verdict == VERDICT_CONVERGED


def _digest(w: np.ndarray, u: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(w.tobytes())
    h.update(u.tobytes())
    return h.hexdigest()[:16]


def _sinr_all(p: np.ndarray, gains: np.ndarray, noise_eff: np.ndarray) -> np.ndarray:
    own = np.diag(gains) * p
    interference = gains @ p - own
    return own / (interference + noise_eff)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    out = np.array([canonical_phase(row) for row in x])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def two_stage(instance: NetworkInstance, scheme: TxScheme, params: SolverParams,
              outer_eps: float = 1e-4, outer_cap: int = 200,
              init_seed: Optional[int] = None) -> RunTrace:
    """Alternate the power game and beamformer updates until both settle.

    Terminates converged when every link's (phase-canonicalized, normalized)
    receive and transmit vectors move by at most outer_eps between rounds;
    infeasible as soon as a power game reports it; cap at outer_cap rounds.
    The recorded final state is the last game's powers together with the
    beamformers that game played against, so its QoS and equilibrium
    certificates hold exactly on the trace.
    """
    ch = instance.channel
    n = instance.n_links
    seed = params.seed if init_seed is None else init_seed
    rng = np.random.default_rng(np.random.SeedSequence([0x747378, seed]))
    w, u = random_unit_beamformers(n, ch.k_tx, ch.l_rx, rng)

    # Pre-game pilot burst at the power ceiling: one pilot per SS, receivers
    # derive their first MMSE filters from it.
    u = np.array([mmse_rx(i, instance.p_max, w, ch) for i in range(n)])
    messages = n
    csi_reports = 0
    power_iterations = 0
    sinr_min = instance.qos.sinr_min

    per_round = []
    verdict = VERDICT_CAP
    final_p = instance.p_min.copy()
    final_u, final_w = u.copy(), w.copy()
    delta_resolved = 0.0

    for outer in range(1, outer_cap + 1):
        bf = BeamformerSet(w=w, u=u)
        gains, noise_eff = link_gains(bf, ch)
        game = sinr_power_game(gains, noise_eff, sinr_min,
                               instance.p_min, instance.p_max, instance.supply)
        delta_resolved = params.resolved_delta(game)
        result = run_gne(game, params)

        power_iterations += result.iterations
        messages += result.messages
        if scheme.full_csi:
            csi_reports += n * n

        p = result.p_star.p
        sinr_vec = _sinr_all(p, gains, noise_eff)
        per_round.append(RoundRecord(
            round=outer,
            powers=p.copy(),
            beamformer_digest=_digest(w, u),
            sinr=sinr_vec,
            sum_supply_power=total_supply_power(p, instance.p_min,
                                                instance.p_max, instance.supply),
            sum_spectrum_efficiency=float(
                sum(spectrum_efficiency(s) for s in sinr_vec)),
            power_iterations=result.iterations,
            messages=result.messages))

        if result.verdict != VERDICT_CONVERGED:
            verdict = (VERDICT_INFEASIBLE
                       if result.verdict == VERDICT_INFEASIBLE else VERDICT_CAP)
            final_p, final_u, final_w = p.copy(), u.copy(), w.copy()
            break

        final_p, final_u, final_w = p.copy(), u.copy(), w.copy()

        # Stage 2: MMSE receive refresh (except for the fixed-Rx baseline),
        # then one transmit update per the scheme.
        if scheme.kind == "coordinated_txbf":
            u_new = u
        else:
            u_new = np.array([mmse_rx(i, p, w, ch) for i in range(n)])

        if scheme.kind == "fixed":
            w_new = w
        elif scheme.kind == "matched_filter":
            w_new = np.array([matched_tx(i, u_new[i], ch) for i in range(n)])
        elif scheme.kind == "local_mse":
            w_new = np.array([local_mse_tx(i, p, u_new[i], ch) for i in range(n)])
        elif scheme.kind in ("coordinated_mse", "coordinated_txbf"):
            w_new = np.empty_like(w)
            for i in range(n):
                budgets = tx_leakage(i, p, w[i], u_new, ch)
                budgets[i] = np.inf
                w_new[i] = coordinated_mse_tx(i, p, u_new, ch, budgets,
                                              w_current=w[i])
        elif scheme.kind == "zero_forcing":
            w_new, u_new = zf_tx_rx(p, ch, w, u)
        else:  # pragma: no cover - TxScheme validates kinds
            raise ValueError(scheme.kind)

        du = np.linalg.norm(_unit_rows(u_new) - _unit_rows(u), axis=1).max()
        dw = np.linalg.norm(_unit_rows(w_new) - _unit_rows(w), axis=1).max()
        u, w = u_new, w_new
        if max(du, dw) <= outer_eps:
            verdict = VERDICT_CONVERGED
            break

    return RunTrace(
        verdict=verdict,
        outer_rounds=len(per_round),
        per_round=per_round,
        final_powers=final_p,
        final_u=final_u,
        final_w=final_w,
        sinr_min=sinr_min.copy(),
        epsilon=params.epsilon,
        delta=delta_resolved,
        scheme=scheme.kind,
        init_seed=seed,
        power_iterations=power_iterations,
        messages=messages,
        csi_reports=csi_reports)


# ---------------------------------------------------------------------------
# Monte Carlo sweeps

@dataclass
class CellStats:
    """Aggregates for one (n_links, sinr_db) sweep cell."""

    n_links: int
    sinr_db: float
    total_trials: int
    converged_trials: int
    infeasible_frac: float
    cap_frac: float
    metrics: dict  # name -> (mean, std) over converged trials


@dataclass
class SweepResult:
    n_links_axis: list
    sinr_db_axis: list
    trials: int
    master_seed: int
    scheme: str
    cells: list  # CellStats in axis order


def trial_seed(master_seed: int, n_links: int, sinr_db: float, trial: int) -> int:
    """Stable per-trial seed, independent of the scheme under test.

    Deliberately ignores the cell coordinates: trial t reuses the same
    entropy in every cell (common random numbers), which sharpens cross-cell
    comparisons such as iteration-scaling fits and threshold ladders.
    """
    del n_links, sinr_db
    mix = np.random.SeedSequence([master_seed, trial])
    return int(mix.generate_state(1, np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)


def run_trial(scenario: ScenarioConfig, scheme: TxScheme, params: SolverParams,
              n_links: int, sinr_db: float, seed: int,
              outer_eps: float = 1e-4, outer_cap: int = 200) -> RunTrace:
    instance = build_instance(scenario, n_links, sinr_db, seed)
    return two_stage(instance, scheme, params, outer_eps=outer_eps,
                     outer_cap=outer_cap, init_seed=seed)


def trace_metrics(trace: RunTrace) -> dict:
    last = trace.per_round[-1]
    outer = max(trace.outer_rounds, 1)
    return {
        "sum_supply_power": last.sum_supply_power,
        "sum_spectrum_efficiency": last.sum_spectrum_efficiency,
        "outer_rounds": float(trace.outer_rounds),
        "power_iterations": float(trace.power_iterations),
        "messages": float(trace.messages),
        "messages_per_outer_round": trace.messages / outer,
        "csi_reports": float(trace.csi_reports),
        "csi_reports_per_outer_round": trace.csi_reports / outer,
    }


def monte_carlo_sweep(scenario: ScenarioConfig, scheme: TxScheme,
                      params: SolverParams, n_links_axis, sinr_db_axis,
                      n_trials: int, master_seed: int,
                      outer_eps: float = 1e-4, outer_cap: int = 200,
                      jobs: int = 1) -> SweepResult:
    """Independent trials per cell; aggregates over converged trials only.

    Deterministic in master_seed: each trial's instance and run seed derive
    from (master_seed, cell, trial index), so results are reproducible and
    identical instances are replayed across schemes. jobs > 1 farms trials
    out to a process pool; aggregation order stays fixed either way.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    cells = [(int(n), float(db)) for n in n_links_axis for db in sinr_db_axis]
    work = [(n, db, trial_seed(master_seed, n, db, t))
            for (n, db) in cells for t in range(n_trials)]

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_trial, scenario, scheme, params, n, db,
                                   seed, outer_eps, outer_cap)
                       for (n, db, seed) in work]
            traces = [f.result() for f in futures]
    else:
        traces = [run_trial(scenario, scheme, params, n, db, seed,
                            outer_eps, outer_cap)
                  for (n, db, seed) in work]

    stats = []
    for c, (n, db) in enumerate(cells):
        chunk = traces[c * n_trials:(c + 1) * n_trials]
        converged = [t for t in chunk if t.verdict == VERDICT_CONVERGED]
        infeasible = sum(1 for t in chunk if t.verdict == VERDICT_INFEASIBLE)
        capped = sum(1 for t in chunk if t.verdict == VERDICT_CAP)
        metrics = {}
        for name in SWEEP_METRICS:
            values = np.array([trace_metrics(t)[name] for t in converged])
            if len(values):
                metrics[name] = (float(values.mean()), float(values.std()))
            else:
                metrics[name] = (float("nan"), float("nan"))
        stats.append(CellStats(
            n_links=n, sinr_db=db, total_trials=n_trials,
            converged_trials=len(converged),
            infeasible_frac=infeasible / n_trials,
            cap_frac=capped / n_trials,
            metrics=metrics))

    return SweepResult(
        n_links_axis=[int(n) for n in n_links_axis],
        sinr_db_axis=[float(d) for d in sinr_db_axis],
        trials=n_trials, master_seed=master_seed, scheme=scheme.kind,
        cells=stats)


def fit_linear(x, y):
    """Ordinary least squares y = intercept + slope * x; returns r^2 too."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(x)) < 2:
        raise ValueError("need at least 2 distinct x values for a line fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    syy = float(np.sum((y - ym) ** 2))
    slope = sxy / sxx
    intercept = ym - slope * xm
    r2 = 1.0 if syy == 0.0 else sxy * sxy / (sxx * syy)
    return intercept, slope, r2


def fit_iteration_scaling(sweep: SweepResult):
    """OLS of mean total power iterations against the number of links."""
    if len(sweep.sinr_db_axis) != 1:
        raise ValueError("iteration-scaling fit expects a single SINR cell")
    xs, ys = [], []
    for cell in sweep.cells:
        mean = cell.metrics["power_iterations"][0]
        if np.isfinite(mean):
            xs.append(cell.n_links)
            ys.append(mean)
    return fit_linear(xs, ys)


def message_comparison(sweep_local: SweepResult, sweep_full: SweepResult):
    """Per-N message comparison between a local-CSI and a full-CSI sweep.

    Rows: (n_links, local_messages, full_csi_reports, full_total_messages,
    ratio) with ratio = full-CSI channel-report count over the proposed
    scheme's counted protocol messages.
    """
    if (sweep_local.n_links_axis != sweep_full.n_links_axis
            or sweep_local.sinr_db_axis != sweep_full.sinr_db_axis):
        raise ValueError("sweeps cover different axes")
    rows = []
    for cl, cf in zip(sweep_local.cells, sweep_full.cells):
        local_msgs = cl.metrics["messages"][0]
        reports = cf.metrics["csi_reports"][0]
        full_total = cf.metrics["messages"][0] + reports
        rows.append((cl.n_links, local_msgs, reports, full_total,
                     reports / local_msgs))
    return rows


# ---------------------------------------------------------------------------
# Serialization

def trace_to_json(trace: RunTrace) -> str:
    doc = {
        "schema_version": 1,
        "kind": "run_trace",
        "verdict": trace.verdict,
        "outer_rounds": trace.outer_rounds,
        "scheme": trace.scheme,
        "init_seed": trace.init_seed,
        "epsilon": trace.epsilon,
        "delta": trace.delta,
        "sinr_min": trace.sinr_min.tolist(),
        "per_round": [
            {
                "round": r.round,
                "powers": r.powers.tolist(),
                "beamformer_digest": r.beamformer_digest,
                "sinr": r.sinr.tolist(),
                "sum_supply_power": r.sum_supply_power,
                "sum_spectrum_efficiency": r.sum_spectrum_efficiency,
                "power_iterations": r.power_iterations,
                "messages": r.messages,
            }
            for r in trace.per_round
        ],
        "final": {
            "powers": trace.final_powers.tolist(),
            "u": _complex_to_json(trace.final_u),
            "w": _complex_to_json(trace.final_w),
        },
        "totals": {
            "power_iterations": trace.power_iterations,
            "messages": trace.messages,
            "csi_reports": trace.csi_reports,
        },
    }
    return json.dumps(doc, sort_keys=True)


def trace_from_json(text: str) -> RunTrace:
    doc = json.loads(text)
    if doc.get("kind") != "run_trace" or doc.get("schema_version") != 1:
        raise ValueError("not a schema_version-1 run_trace document")
    per_round = [RoundRecord(
        round=r["round"],
        powers=np.asarray(r["powers"], dtype=float),
        beamformer_digest=r["beamformer_digest"],
        sinr=np.asarray(r["sinr"], dtype=float),
        sum_supply_power=r["sum_supply_power"],
        sum_spectrum_efficiency=r["sum_spectrum_efficiency"],
        power_iterations=r["power_iterations"],
        messages=r["messages"]) for r in doc["per_round"]]
    return RunTrace(
        verdict=doc["verdict"],
        outer_rounds=doc["outer_rounds"],
        per_round=per_round,
        final_powers=np.asarray(doc["final"]["powers"], dtype=float),
        final_u=_complex_from_json(doc["final"]["u"]),
        final_w=_complex_from_json(doc["final"]["w"]),
        sinr_min=np.asarray(doc["sinr_min"], dtype=float),
        epsilon=doc["epsilon"],
        delta=doc["delta"],
        scheme=doc["scheme"],
        init_seed=doc["init_seed"],
        power_iterations=doc["totals"]["power_iterations"],
        messages=doc["totals"]["messages"],
        csi_reports=doc["totals"]["csi_reports"])


def sweep_to_csv(sweep: SweepResult) -> str:
    """CSV with one row per (cell, metric); header per the documented schema."""
    lines = ["n_links,sinr_db,metric,mean,std,trials,infeasible_frac"]
    for cell in sweep.cells:
        for name in SWEEP_METRICS:
            mean, std = cell.metrics[name]
            lines.append(
                f"{cell.n_links},{float(cell.sinr_db)!r},{name},"
                f"{float(mean)!r},{float(std)!r},{cell.converged_trials},"
                f"{float(cell.infeasible_frac)!r}")
    return "\n".join(lines) + "\n"
