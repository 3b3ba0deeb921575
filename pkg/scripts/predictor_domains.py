"""Compare the two GP input domains on a traffic trace.

``lagged`` regresses the next value on the current one; ``time`` regresses on
the slot index.  Prints the rolling one-step MSE and runtime of each, plus a
persistence forecast (next = current) for scale.

    python scripts/predictor_domains.py [--dataset path.csv] [--window 600]
"""
import argparse
import time

import numpy as np

from uavurllc.traffic import DEFAULT_DATASET, ingest_series, rolling_forecast


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dataset", default=str(DEFAULT_DATASET))
    p.add_argument("--window", type=int, default=600)
    p.add_argument("--refit-every", type=int, default=50)
    args = p.parse_args(argv)

    s = ingest_series(args.dataset)
    x = s.values
    naive = float(np.mean((x[args.window:] - x[args.window - 1:-1]) ** 2))
    print(f"{len(x)} slots, window {args.window}, {len(x) - args.window} predictions")
    print(f"{'persistence':>12s}  MSE {naive:.6f}")
    for inputs in ("lagged", "time"):
        t0 = time.perf_counter()
        fc = rolling_forecast(x, args.window, args.refit_every, inputs)
        dt = time.perf_counter() - t0
        print(f"{inputs:>12s}  MSE {fc.mse:.6f}  ({dt:.1f} s, {len(fc.fits)} refits)")


if __name__ == "__main__":
    main()
