"""Command-line entry point: ``uavurllc {predict,solve,sweep,compare,show-config}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
4 dataset error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import sim
from .config import ConfigError, RunConfig, load_config
from .optimizer import objective, successive_maximization, user_rates
from .traffic import DatasetError, ingest_series, rolling_forecast

log = logging.getLogger("uavurllc")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DATASET = 0, 2, 3, 4
AXIS_FIELD = {"eps": "eps", "users": "users", "bandwidth": "bandwidth_mhz"}


class Infeasible(RuntimeError):
    pass


# -- output helpers -----------------------------------------------------------


class Writer:
    """Writes result files that all carry the seed and config digest."""

    def __init__(self, cfg: RunConfig, out_dir):
        self.cfg = cfg
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.header = f"# master_seed={cfg.master_seed} config_sha256={cfg.digest()}"
        self.written = []

    def _want(self, fmt):
        return fmt in self.cfg.output.formats

    def csv(self, name, columns, rows):
        if not self._want("csv"):
            return
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.header + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.written.append(path)

    def json(self, name, payload):
        if not self._want("json"):
            return
        path = self.dir / name
        doc = {"master_seed": self.cfg.master_seed, "config_sha256": self.cfg.digest(), **payload}
        path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.written.append(path)

    def plot(self, name, xs, ys):
        """Two-column plot-data file (always written)."""
        path = self.dir / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.header + "\n")
            for x, y in zip(xs, ys):
                fh.write(f"{_fmt(x)} {_fmt(y)}\n")
        self.written.append(path)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- commands -----------------------------------------------------------------


def cmd_predict(cfg: RunConfig, args) -> int:
    t = cfg.traffic_config()
    series = ingest_series(t.dataset, t.time_col, t.value_col, t.delimiter, min_rows=t.window + 1)
    fc = rolling_forecast(series.values, t.window, t.refit_every, t.inputs)
    w = Writer(cfg, args.out)
    slots = np.arange(fc.start, fc.start + len(fc.mean))
    w.csv("prediction_trace.csv", ["slot", "observed", "predicted_mean", "predicted_variance", "squared_error"],
          zip(slots, fc.observed, fc.mean, fc.variance, fc.squared_error))
    w.json("prediction_summary.json", {
        "dataset": series.source, "rows": len(series), "rejected_rows": series.rejected,
        "degenerate_scale": series.degenerate, "window": t.window, "refit_every": t.refit_every,
        "inputs": t.inputs, "predictions": len(fc.mean), "mse": fc.mse,
        "fits": [{"slot": s, "theta1": f.params.theta1, "theta2": f.params.theta2,
                  "noise_var": f.params.noise_var, "degenerate": f.degenerate} for s, f in fc.fits]})
    print(f"predictions: {len(fc.mean)}  MSE: {fc.mse:.6g}")
    return EXIT_OK


def _scenario(cfg: RunConfig):
    values, forecast = sim.load_traffic(cfg.traffic_config())
    scenario = sim.generate_scenario(cfg.scenario_config(), sim.trial_seed(cfg.master_seed, 0),
                                     cfg.traffic_config())
    return scenario, values, forecast


def cmd_solve(cfg: RunConfig, args) -> int:
    scenario, values, forecast = _scenario(cfg)
    slot = scenario.start_slot
    idx = sim.trace_index(scenario.traffic, len(values), slot, scenario.offsets)
    preds = [forecast.at(int(i)) for i in idx]
    loads = sim.expected_load(scenario.traffic, [p.mean for p in preds], [p.variance for p in preds])
    inst = sim.build_instance(scenario, loads)
    w = Writer(cfg, args.out)
    solver = cfg.solver_config()
    strategy = args.strategy or "proposed"
    if strategy == "random_placement":
        res = sim.baseline_random_placement(inst, sim.placement_rng(scenario, slot), solver)
        alloc = res.allocation
    else:
        with open(w.dir / "solve_trace.csv", "w", encoding="utf-8") as fh:
            fh.write(w.header + "\n")
            res = successive_maximization(inst, solver, trace_file=fh)
        w.written.append(w.dir / "solve_trace.csv")
        alloc = res.allocation if strategy == "proposed" else sim.baseline_max_power(inst, res.allocation)
    bad = alloc.violations(inst)
    if bad:
        raise RuntimeError(f"solver returned an invalid allocation: {bad}")
    rates = user_rates(inst, alloc)
    req = inst.required_rates()
    w.json("solve.json", {
        "strategy": strategy, "status": res.status, "iterations": res.iterations,
        "converged": res.converged, "objective": objective(inst, alloc),
        "objective_trace": res.objective_trace, "feasibility_min_slack": res.min_slack,
        "slot": slot, "altitude_m": scenario.altitude, "users_m": scenario.users,
        "predicted_load_packets": loads, "required_rate_bps": req,
        "per_user_rate_bps": rates, "reliability_slack_bps": np.asarray(rates) - req,
        "total_power_w": alloc.total_power,
        "allocation": {"assign": alloc.assign, "power_w": alloc.power, "uav_pos_m": list(alloc.uav_pos)}})
    print(f"status: {res.status}  iterations: {res.iterations}  objective: {objective(inst, alloc):.6g}  "
          f"power: {alloc.total_power:.6g} W  position: ({alloc.uav_pos[0]:.2f}, {alloc.uav_pos[1]:.2f})")
    if res.status == "infeasible":
        worst = int(np.argmin(np.asarray(rates) - req))
        raise Infeasible(f"reliability cannot be met: max-min normalised slack {res.min_slack:.4g}; "
                         f"user {worst} short by {req[worst] - rates[worst]:.6g} bit/s")
    return EXIT_OK


def _workers(cfg):
    return cfg.output.workers or sim.default_workers()


def _strategies(args):
    if not args.strategy:
        return sim.STRATEGIES
    names = tuple(s.strip() for s in args.strategy.split(","))
    for s in names:
        if s not in sim.STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}; choose from {', '.join(sim.STRATEGIES)}")
    return names


def _values(cfg, args):
    if args.values:
        try:
            return [float(v) for v in args.values.split(",")]
        except ValueError:
            raise ConfigError(f"--values must be a comma-separated list of numbers, got {args.values!r}") from None
    return list(getattr(cfg.sweep, AXIS_FIELD[args.axis]))


def _trials(cfg, args):
    n = args.trials if args.trials is not None else cfg.sweep.trials
    if n < 1:
        raise ConfigError("--trials must be at least 1")
    return n


REPORT_COLUMNS = ("value", "trials", "energy_mean", "energy_std", "sum_rate_mean", "sum_rate_std",
                  "per_user_rate_mean", "per_user_rate_std", "violation_freq_mean", "violation_freq_std",
                  "predictor_mse", "infeasible_frac", "mean_iterations", "converged_frac")


def cmd_sweep(cfg: RunConfig, args) -> int:
    axis = args.axis
    values = _values(cfg, args)
    if axis == "users":
        values = [int(v) for v in values]
    strategies = _strategies(args)
    try:
        result = sim.sweep(axis, values, cfg.scenario_config(), cfg.traffic_config(), _trials(cfg, args),
                           cfg.master_seed, strategies, cfg.solver_config(), _workers(cfg))
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise ConfigError(str(exc)) from exc
    w = Writer(cfg, args.out)
    for s in strategies:
        reports = result.reports[s]
        w.csv(f"sweep_{axis}_{s}.csv", REPORT_COLUMNS, [[getattr(r, c) for c in REPORT_COLUMNS] for r in reports])
        for metric in sim.RunReport.METRICS:
            mean, std = result.series(s, metric)
            w.plot(f"plot_{axis}_{s}_{metric}_mean.dat", values, mean)
            w.plot(f"plot_{axis}_{s}_{metric}_std.dat", values, std)
    w.csv(f"records_{axis}.csv", sim.SlotRecord.COLUMNS + ("value",),
          [rec.row() + (r.value,) for s in strategies for r in result.reports[s] for rec in r.records])
    w.json(f"sweep_{axis}.json", {
        "axis": axis, "values": values, "failures": result.failures,
        "series": {s: [r.summary() for r in result.reports[s]] for s in strategies}})
    for s in strategies:
        e, _ = result.series(s, "energy")
        r, _ = result.series(s, "per_user_rate")
        print(f"{s:17s} energy_j: {' '.join(f'{v:.4g}' for v in e)}  per_user_bps: "
              f"{' '.join(f'{v:.4g}' for v in r)}")
    if result.failures:
        print(f"{len(result.failures)} trial(s) failed; see sweep_{axis}.json", file=sys.stderr)
    return EXIT_OK


def paired_difference(a, b):
    """Mean of a - b with a 95% normal-approximation interval."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    m = float(d.mean())
    half = 1.96 * float(d.std(ddof=1)) / math.sqrt(len(d)) if len(d) > 1 else 0.0
    return {"mean": m, "ci_low": m - half, "ci_high": m + half, "n": len(d)}


def per_trial(records, strategy, field, total=False):
    out = {}
    for r in records:
        if r.strategy == strategy:
            out.setdefault(r.trial, []).append(getattr(r, field))
    return [math.fsum(v) if total else float(np.mean(v)) for _, v in sorted(out.items())]


def cmd_compare(cfg: RunConfig, args) -> int:
    trials = _trials(cfg, args)
    base = cfg.scenario_config()
    result = sim.sweep("eps", [base.outage_eps], base, cfg.traffic_config(), trials, cfg.master_seed,
                       sim.STRATEGIES, cfg.solver_config(), _workers(cfg))
    reports = {s: result.reports[s][0] for s in sim.STRATEGIES}
    recs = [rec for r in reports.values() for rec in r.records]
    metrics = {"energy_j": True, "objective": False, "sum_rate_bps": False}
    paired = {}
    for other in ("max_power", "random_placement"):
        paired[other] = {m: paired_difference(per_trial(recs, "proposed", m, tot), per_trial(recs, other, m, tot))
                         for m, tot in metrics.items()}
    obj_p = np.array(per_trial(recs, "proposed", "objective"))
    obj_r = np.array(per_trial(recs, "random_placement", "objective"))
    wins = float(np.mean(obj_p >= obj_r)) if len(obj_p) else math.nan
    w = Writer(cfg, args.out)
    w.csv("compare.csv", ("strategy",) + REPORT_COLUMNS[1:],
          [[s] + [getattr(reports[s], c) for c in REPORT_COLUMNS[1:]] for s in sim.STRATEGIES])
    w.csv("compare_paired.csv", ("baseline", "metric", "mean_diff", "ci_low", "ci_high", "n"),
          [[o, m, d["mean"], d["ci_low"], d["ci_high"], d["n"]] for o, ms in paired.items() for m, d in ms.items()])
    w.json("compare.json", {
        "trials": trials, "failures": result.failures,
        "strategies": {s: reports[s].summary() for s in sim.STRATEGIES},
        "paired_proposed_minus": paired, "proposed_beats_random_objective_frac": wins})
    for s in sim.STRATEGIES:
        r = reports[s]
        print(f"{s:17s} energy {r.energy_mean:.4g} J  sum-rate {r.sum_rate_mean:.4g} bit/s  "
              f"violations {r.violation_freq_mean:.3f}")
    print(f"proposed objective >= random placement in {wins:.0%} of trials")
    return EXIT_OK


def cmd_show_config(cfg: RunConfig, args) -> int:
    sys.stdout.write(cfg.dump())
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of overrides on the built-in defaults")
    common.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uavurllc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="rolling one-step traffic prediction")
    s = sub.add_parser("solve", parents=[common], help="solve one slot of one scenario")
    s.add_argument("--strategy", choices=sim.STRATEGIES)
    s = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over one axis")
    s.add_argument("--axis", required=True, choices=tuple(AXIS_FIELD))
    s.add_argument("--values", help="comma list; bandwidth in MHz (default: from config)")
    s.add_argument("--trials", type=int)
    s.add_argument("--strategy", help="comma list of strategies (default: all)")
    s = sub.add_parser("compare", parents=[common], help="paired comparison of all strategies")
    s.add_argument("--trials", type=int)
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return p


COMMANDS = {"predict": cmd_predict, "solve": cmd_solve, "sweep": cmd_sweep,
            "compare": cmd_compare, "show-config": cmd_show_config}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.master_seed = args.seed
        if args.out is not None:
            cfg.output.directory = args.out
        args.out = cfg.output.directory
        cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
