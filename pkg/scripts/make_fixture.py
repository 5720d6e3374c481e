#!/usr/bin/env python3
"""Regenerate the committed 12-step count fixture and verify it is unchanged.

Seed 54 was chosen so the series contains a zero count at t = 11 (the
singular-weight step the convergence studies gate on) with varied counts
elsewhere.
"""

import pathlib
import sys

from pfconv import CoxParams, ObservationSeries, simulate

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "fixtures" / "cox_obs_t12.csv"
SEED = 54


def main() -> int:
    _, series = simulate(CoxParams(c=0.5, eta=0.1), steps=12, master_seed=SEED)
    assert series.counts()[10] == 0, "fixture must carry a zero count at t=11"
    if FIXTURE.exists():
        existing = ObservationSeries.from_csv(FIXTURE)
        if tuple(existing) != tuple(series):
            print("regenerated series differs from the committed fixture!",
                  file=sys.stderr)
            return 1
        print(f"{FIXTURE} verified unchanged ({len(series)} rows)")
        return 0
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    series.to_csv(FIXTURE)
    print(f"wrote {FIXTURE}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
