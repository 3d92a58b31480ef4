#!/usr/bin/env python3
"""Bound dominance and trigger rate for every bundled scenario.

    python scripts/dominance_table.py --trials 10000 --out results/dominance.csv
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from _common import summarize                      # noqa: E402
from etf2d.harness import write_csv                # noqa: E402
from etf2d.scenario import BUNDLED, load_scenario  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default="results/dominance.csv")
    args = ap.parse_args(argv)

    rows, header = [], None
    for name in BUNDLED:
        t0 = time.perf_counter()
        stats = summarize(load_scenario(name, trials=args.trials, seed=args.seed))
        header = ["scenario", *stats]
        rows.append([name, *stats.values()])
        print(f"{name:16s} rate={stats['trigger_rate']:.3f} "
              f"margin={stats['min_margin_Xi_u']:.4f} ({time.perf_counter() - t0:.1f} s)")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, header, rows)
    return 0 if all(r[header.index("min_margin_Xi_u")] >= -1e-6 for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
