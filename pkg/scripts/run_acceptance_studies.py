#!/usr/bin/env python3
"""Run both committed convergence studies and print the gating slopes.

Equivalent to:

    pfconv converge --config configs/acceptance_mse.cfg
    pfconv converge --config configs/acceptance_l4.cfg

then reading the t = 11 rate fits out of the JSON reports.
"""

import json
import pathlib
import sys

from pfconv.cli import cli_dispatch

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    for name, moment, band in (("acceptance_mse", 2, (-1.35, -0.70)),
                               ("acceptance_l4", 4, (-2.5, -1.4))):
        config = ROOT / "configs" / f"{name}.cfg"
        code = cli_dispatch(["converge", "--config", str(config)])
        if code != 0:
            return code
        out_json = json.loads((ROOT / "out" / name.split("_")[1] / "report.json")
                              .read_text())
        fit = next(f for f in out_json["rate_fits"]
                   if f["stage"] == "normalized" and f["t"] == 11
                   and f["moment"] == moment)
        ok = band[0] <= fit["slope"] <= band[1]
        print(f"{name}: slope(t=11, p={moment}) = {fit['slope']:+.3f} "
              f"(target {band}) -> {'ok' if ok else 'OUT OF BAND'}")
        if not ok:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
