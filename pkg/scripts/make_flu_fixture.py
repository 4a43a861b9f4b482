#!/usr/bin/env python3
"""Write the synthetic weekly surveillance fixture CSV.

The fixture mirrors the real ingestion schema (unit_id, iso_week,
count_h1, count_h3, count_b, itz) for 80 units over 9 April-to-April
seasons and plants a season shift in the dependence between the two
log-ratio coordinates, so the downstream pipeline has a recoverable
signal to find.
"""

import argparse

from copulatree.fludata import write_flu_fixture_csv

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="flu_fixture.csv")
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--units", type=int, default=80)
    parser.add_argument("--seasons", type=int, default=9)
    parser.add_argument("--tau-low", type=float, default=0.02)
    parser.add_argument("--tau-high", type=float, default=0.75)
    parser.add_argument("--shift-season", type=int, default=5)
    args = parser.parse_args()
    write_flu_fixture_csv(
        args.out,
        seed=args.seed,
        n_units=args.units,
        n_seasons=args.seasons,
        tau_low=args.tau_low,
        tau_high=args.tau_high,
        shift_season=args.shift_season,
    )
    print(f"wrote {args.out}")
