"""Regenerate the energy and rate sweeps as CSV/JSON reports and plot-data files.

Each figure is one ``uavurllc sweep`` run with its own overrides, written to
``<out>/<figure>/``.  Energy figures use the package default trade-off weight
(zeta = 1e12, where the energy term matters); rate figures use zeta = 1e4,
where the power budget binds and rate is what the optimizer maximises.

    python scripts/reproduce_figures.py --trials 20 --out results/figures
"""
import argparse
import sys
from pathlib import Path

import yaml

from uavurllc.cli import main as cli_main

FIGURES = {
    # name: (axis, overrides)
    "energy_vs_bandwidth_eps0.01": ("bandwidth", {"scenario": {"outage_eps": 0.01}}),
    "energy_vs_bandwidth_eps0.05": ("bandwidth", {"scenario": {"outage_eps": 0.05}}),
    "energy_vs_users_eps0.01": ("users", {"scenario": {"outage_eps": 0.01}}),
    "rate_vs_users_eps0.1": ("users", {"scenario": {"outage_eps": 0.1, "tradeoff_zeta": 1e4}}),
    "rate_vs_bandwidth_eps0.1": ("bandwidth", {"scenario": {"outage_eps": 0.1, "tradeoff_zeta": 1e4}}),
}


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/figures")
    p.add_argument("--workers", type=int, default=1, help="0: one per CPU")
    p.add_argument("--only", nargs="*", choices=sorted(FIGURES), help="subset of figures")
    return p.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or FIGURES:
        axis, overrides = FIGURES[name]
        overrides = {**overrides, "output": {"workers": args.workers}}
        cfg_path = out / f"{name}.yaml"
        cfg_path.write_text(yaml.safe_dump(overrides, sort_keys=False), encoding="utf-8")
        print(f"== {name}")
        code = cli_main(["sweep", "--config", str(cfg_path), "--axis", axis, "--trials", str(args.trials),
                         "--seed", str(args.seed), "--out", str(out / name)])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
