"""Export the GOOG daily price sample bundled with matplotlib to CSV.

The file ends up in ``src/uavurllc/data/goog_daily.csv`` and serves as the
default traffic trace (stock prices standing in for URLLC load).
"""
from pathlib import Path

import numpy as np
from matplotlib import cbook

OUT = Path(__file__).resolve().parents[1] / "src" / "uavurllc" / "data" / "goog_daily.csv"


def main():
    data = cbook.get_sample_data("goog.npz")["price_data"]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Date,Close\n")
        for row in data:
            fh.write(f"{row['date']},{row['close']:.2f}\n")
    print(f"wrote {len(data)} rows to {OUT}")


if __name__ == "__main__":
    main()
