#!/usr/bin/env python3
"""Regenerate data/fixture: synthetic PUMS-format person records.

Four pseudo-states (A-D), six areas each on a 2x3 grid, two survey years.
Incomes are drawn from a three-component log-normal mixture whose weights
depend on the area's education and race mix, so the fitted factors have
something to find. A few non-positive incomes are included on purpose.
"""
import argparse
import csv
import math
import pathlib
import random

STATES = "ABCD"
ROWS, COLS = 2, 3
YEARS = ("2016", "2020")
PER_AREA = 230
MEANS = (9.0, 10.4, 11.6)  # log dollars
SD = 0.55


def area_profile(rng):
    return {"degree": rng.uniform(0.1, 0.6), "white": rng.uniform(0.3, 0.9), "female_gap": rng.uniform(0.6, 0.95)}


def mixture_weights(profile, year_shift):
    z = (0.0, 2.5 * profile["degree"] - 0.5 + year_shift, 4.0 * profile["degree"] + 1.0 * profile["white"] - 2.0)
    e = [math.exp(v) for v in z]
    s = sum(e)
    return [v / s for v in e]


def person(rng, area_id, profile, weights):
    sex = 2 if rng.random() < 0.5 else 1
    race = 1 if rng.random() < profile["white"] else rng.randint(2, 9)
    schl = rng.randint(21, 24) if rng.random() < profile["degree"] else rng.randint(1, 20)
    if rng.random() < 0.02:
        return [area_id, rng.choice((0, -1000, -50)), sex, race, schl]
    h = rng.choices(range(3), weights)[0]
    income = math.exp(rng.gauss(MEANS[h], SD))
    if sex == 2:
        income *= profile["female_gap"]
    return [area_id, round(income, 2), sex, race, schl]


def edges():
    out = []
    for r in range(ROWS):
        for c in range(COLS):
            a = r * COLS + c
            if c + 1 < COLS:
                out.append((a, a + 1))
            if r + 1 < ROWS:
                out.append((a, a + COLS))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "fixture"))
    ap.add_argument("--seed", type=int, default=20161020)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    root = pathlib.Path(args.out)
    for s in STATES:
        d = root / f"state{s}"
        d.mkdir(parents=True, exist_ok=True)
        ids = [f"{s}{i + 1:02d}" for i in range(ROWS * COLS)]  # already in sorted order
        profiles = {a: area_profile(rng) for a in ids}
        with open(d / "adjacency.txt", "w") as f:
            f.write("# edges between areas, 0-based over sorted area ids\n")
            for i, j in edges():
                f.write(f"{i} {j}\n")
        for k, year in enumerate(YEARS):
            with open(d / f"pums_{year}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["area_id", "PINCP", "SEX", "RAC1P", "SCHL"])
                for a in ids:
                    weights = mixture_weights(profiles[a], 0.3 * k)
                    for _ in range(PER_AREA):
                        w.writerow(person(rng, a, profiles[a], weights))


if __name__ == "__main__":
    main()
