#!/usr/bin/env python3
"""Produce the qualitative figure artifacts.

* a 50-step simulated intensity trajectory with its counts,
* grid-filter and particle-filter state estimates over those 50 steps,
* the t = 11 filtering-density histogram overlay on the committed
  12-step fixture (the singular zero-count step).

Everything lands under out/figures/.
"""

import pathlib
import sys

from pfconv.cli import cli_dispatch

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "out" / "figures"
FIXTURE = ROOT / "fixtures" / "cox_obs_t12.csv"


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    steps = [
        ["simulate", "--c", "0.5", "--eta", "0.1", "--steps", "50", "--seed", "54",
         "--out", str(OUT / "obs_t50.csv"), "--states-out", str(OUT / "states_t50.csv")],
        ["grid", "--observations", str(OUT / "obs_t50.csv"),
         "--out", str(OUT / "grid_t50.csv")],
        ["filter", "--observations", str(OUT / "obs_t50.csv"), "--n", "10000",
         "--seed", "7", "--alpha", "1.5", "--beta", "0.5",
         "--out", str(OUT / "filter_t50.csv")],
        ["filter", "--observations", str(FIXTURE), "--n", "10000", "--seed", "7",
         "--alpha", "1.5", "--beta", "0.5", "--out", str(OUT / "filter_t12.csv"),
         "--svg", str(OUT / "hist_t11.svg")],
    ]
    for argv in steps:
        code = cli_dispatch(argv)
        if code != 0:
            return code
    print(f"figure data in {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
