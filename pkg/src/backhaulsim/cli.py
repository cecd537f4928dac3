"""Command-line front end: simulate | sweep | verify.

Configs are single JSON documents (SINR thresholds in dB, converted to
linear internally). Exit codes are scriptable: 0 success/converged,
1 config or schema error, 2 infeasible, 3 iteration cap, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .beamforming import TxScheme, TX_SCHEME_KINDS
from .game import SolverParams, sinr_power_game, verify_epsilon_gne
from .harness import (ScenarioConfig, build_instance, fit_linear,
                      fit_iteration_scaling, monte_carlo_sweep, sweep_to_csv,
                      trace_from_json, trace_to_json, two_stage)
from .netmodel import BeamformerSet, link_gains

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_CAP = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    """Configuration failed validation; the message names the field."""


_REQUIRED = object()

_SCENARIO_FIELDS = {
    "k_tx": (int, 8),
    "l_rx": (int, 8),
    "target_spacing": (float, 40.0),
    "link_distance_range": (list, [0.12, 0.30]),
    "n_clusters": (int, 3),
    "n_rays_per_cluster": (int, 4),
    "carrier_wavelength": (float, 0.005),
    "angle_spread": (float, 0.1),
    "pathloss_exponent": (float, 3.0),
    "reference_gain": (float, 1e4),
    "noise_variance": (float, 1.0),
    "p_min": (float, _REQUIRED),
    "p_max": (float, _REQUIRED),
    "supply_mu": (float, 10.0),
    "supply_alpha": (float, 4.0),
}

_SOLVER_FIELDS = {
    "epsilon": (float, 1e-3),
    "delta": (float, None),  # None = derive from epsilon and Lipschitz bound
    "max_iters": (int, 10000),
    "update_order": (str, "round_robin"),
    "seed": (int, 0),
}


def _take(section: dict, fields: dict, path: str) -> dict:
    out = {}
    for key, (typ, default) in fields.items():
        if key in section:
            value = section[key]
            if value is not None:
                try:
                    value = typ(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"field {path}.{key} has invalid type")
            out[key] = value
        elif default is _REQUIRED:
            raise ConfigError(f"missing required field: {path}.{key}")
        else:
            out[key] = default
    unknown = set(section) - set(fields)
    if unknown:
        raise ConfigError(f"unknown field(s) in {path}: {sorted(unknown)}")
    return out


def load_config(path) -> dict:
    """Parse, validate, and normalize a config file (defaults applied)."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    cfg = {"schema_version": 1}
    cfg["scenario"] = _take(raw.get("scenario", {}), _SCENARIO_FIELDS,
                            "scenario")
    try:
        rng_lo, rng_hi = (float(v) for v in cfg["scenario"]["link_distance_range"])
    except (TypeError, ValueError):
        raise ConfigError("scenario.link_distance_range must be [lo, hi]")
    if not (0 < rng_lo <= rng_hi <= 1):
        raise ConfigError("scenario.link_distance_range must satisfy "
                          "0 < lo <= hi <= 1")
    cfg["scenario"]["link_distance_range"] = [rng_lo, rng_hi]
    cfg["solver"] = _take(raw.get("solver", {}), _SOLVER_FIELDS, "solver")
    if cfg["solver"]["update_order"] not in ("round_robin",
                                             "seeded_random_permutation"):
        raise ConfigError("solver.update_order must be round_robin or "
                          "seeded_random_permutation")

    for key, typ, default in (("n_links", int, 10),
                              ("sinr_threshold_db", float, 20.0),
                              ("tx_scheme", str, "matched_filter"),
                              ("seed", int, 0),
                              ("master_seed", int, 0)):
        value = raw.get(key, default)
        try:
            cfg[key] = typ(value)
        except (TypeError, ValueError):
            raise ConfigError(f"field {key} has invalid type")
    if cfg["tx_scheme"] not in TX_SCHEME_KINDS:
        raise ConfigError(
            f"tx_scheme must be one of {list(TX_SCHEME_KINDS)}")
    if cfg["n_links"] < 1:
        raise ConfigError("n_links must be >= 1")

    outer = raw.get("outer", {})
    cfg["outer"] = _take(outer, {"eps": (float, 1e-4), "cap": (int, 200)},
                         "outer")

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError("sweep must be an object")
        axes = {}
        axes["n_links_axis"] = [int(v) for v in
                                sweep.get("n_links_axis", [cfg["n_links"]])]
        axes["sinr_db_axis"] = [float(v) for v in
                                sweep.get("sinr_db_axis",
                                          [cfg["sinr_threshold_db"]])]
        if not axes["n_links_axis"] or not axes["sinr_db_axis"]:
            raise ConfigError("sweep axes must be non-empty")
        trials = int(sweep.get("trials", 20))
        if trials < 1:
            raise ConfigError("sweep.trials must be >= 1")
        unknown = set(sweep) - {"n_links_axis", "sinr_db_axis", "trials"}
        if unknown:
            raise ConfigError(f"unknown field(s) in sweep: {sorted(unknown)}")
        cfg["sweep"] = {**axes, "trials": trials}
    else:
        cfg["sweep"] = None

    unknown = set(raw) - {"schema_version", "scenario", "solver", "outer",
                          "sweep", "n_links", "sinr_threshold_db",
                          "tx_scheme", "seed", "master_seed"}
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {sorted(unknown)}")
    return cfg


def dumps_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def _scenario(cfg: dict) -> ScenarioConfig:
    s = dict(cfg["scenario"])
    s["link_distance_range"] = tuple(s["link_distance_range"])
    return ScenarioConfig(**s)


def _solver(cfg: dict) -> SolverParams:
    return SolverParams(**cfg["solver"])


def cmd_simulate(cfg: dict, out_dir: Path) -> int:
    instance = build_instance(_scenario(cfg), cfg["n_links"],
                              cfg["sinr_threshold_db"], cfg["seed"])
    trace = two_stage(instance, TxScheme(cfg["tx_scheme"]), _solver(cfg),
                      outer_eps=cfg["outer"]["eps"],
                      outer_cap=cfg["outer"]["cap"], init_seed=cfg["seed"])
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.json"
    trace_path.write_text(trace_to_json(trace))

    last = trace.per_round[-1] if trace.per_round else None
    print(f"verdict: {trace.verdict}")
    print(f"outer rounds: {trace.outer_rounds}")
    print(f"total power iterations: {trace.power_iterations}")
    print(f"total messages: {trace.messages}")
    if last is not None:
        print(f"final sum supply power: {last.sum_supply_power:.6f} W")
        print(f"final sum spectrum efficiency: "
              f"{last.sum_spectrum_efficiency:.6f} bit/s/Hz")
        sinr_db = 10.0 * np.log10(np.maximum(last.sinr, 1e-300))
        print("per-link SINR (dB): "
              + " ".join(f"{v:.2f}" for v in sinr_db))
    print(f"trace written to {trace_path}")

    if trace.verdict == "converged":
        return EXIT_OK
    if trace.verdict == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_CAP


def cmd_sweep(cfg: dict, out_dir: Path, jobs: int) -> int:
    if cfg["sweep"] is None:
        raise ConfigError("missing required field: sweep")
    sweep_cfg = cfg["sweep"]
    result = monte_carlo_sweep(
        _scenario(cfg), TxScheme(cfg["tx_scheme"]), _solver(cfg),
        sweep_cfg["n_links_axis"], sweep_cfg["sinr_db_axis"],
        sweep_cfg["trials"], cfg["master_seed"],
        outer_eps=cfg["outer"]["eps"], outer_cap=cfg["outer"]["cap"],
        jobs=jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    csv_path.write_text(sweep_to_csv(result))

    report = {"scheme": result.scheme, "trials": result.trials,
              "master_seed": result.master_seed}
    if (len(result.sinr_db_axis) == 1
            and len(set(result.n_links_axis)) >= 2):
        intercept, slope, r2 = fit_iteration_scaling(result)
        report["iteration_scaling_fit"] = {
            "intercept": intercept, "slope": slope, "r_squared": r2}
    fit_path = out_dir / "fit_report.json"
    fit_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"sweep written to {csv_path}")
    print(f"fit report written to {fit_path}")
    return EXIT_OK


def cmd_verify(cfg: dict, trace_path: Path) -> int:
    trace = trace_from_json(Path(trace_path).read_text())
    instance = build_instance(_scenario(cfg), cfg["n_links"],
                              cfg["sinr_threshold_db"], cfg["seed"])
    failures = []

    p = trace.final_powers
    if np.any(p < instance.p_min - 1e-12) or np.any(p > instance.p_max + 1e-12):
        failures.append("final powers leave the box bounds")

    bf = BeamformerSet(w=trace.final_w, u=trace.final_u)
    gains, noise_eff = link_gains(bf, instance.channel)
    own = np.diag(gains) * p
    interference = gains @ p - own
    sinr_vec = own / (interference + noise_eff)
    bad = np.where(sinr_vec < trace.sinr_min * (1.0 - 1e-6))[0]
    for n in bad:
        failures.append(
            f"link {n}: SINR {sinr_vec[n]:.6g} below threshold "
            f"{trace.sinr_min[n]:.6g}")

    game = sinr_power_game(gains, noise_eff, trace.sinr_min,
                           instance.p_min, instance.p_max, instance.supply)
    cert = verify_epsilon_gne(p, game, trace.epsilon)
    if not cert.ok:
        for n in range(instance.n_links):
            if not cert.feasible[n]:
                failures.append(f"link {n}: QoS constraint violated "
                                f"(slack {cert.qos_slack[n]:.3g})")
            elif cert.utility_slack[n] > trace.epsilon:
                failures.append(
                    f"link {n}: epsilon-GNE slack exceeded "
                    f"({cert.utility_slack[n]:.3g} > {trace.epsilon:.3g})")

    if failures:
        print("verification FAILED:")
        for f in failures:
            print(f"  - {f}")
        return EXIT_VERIFY
    print("verification passed: QoS feasible, epsilon-GNE certificate holds")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="backhaulsim",
        description="Distributed power allocation and beamforming simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override config seed / master_seed")
        p.add_argument("--out", default=".", help="output directory")

    p_sim = sub.add_parser("simulate", help="run one two-stage simulation")
    common(p_sim)

    p_sweep = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    common(p_sweep)
    p_sweep.add_argument("--trials", type=int, default=None,
                         help="override sweep.trials")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes")

    p_ver = sub.add_parser("verify", help="re-check a recorded trace")
    common(p_ver)
    p_ver.add_argument("--trace", required=True, help="trace.json path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
            cfg["master_seed"] = int(args.seed)
        if args.command == "sweep" and args.trials is not None:
            if cfg["sweep"] is None:
                raise ConfigError("missing required field: sweep")
            if args.trials < 1:
                raise ConfigError("sweep.trials must be >= 1")
            cfg["sweep"]["trials"] = int(args.trials)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, Path(args.out))
        if args.command == "sweep":
            return cmd_sweep(cfg, Path(args.out), args.jobs)
        if args.command == "verify":
            return cmd_verify(cfg, Path(args.trace))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
