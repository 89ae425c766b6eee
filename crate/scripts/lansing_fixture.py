"""Synthetic stand-in for the Lansing Woods maple/hickory pattern.

Writes data/lansing_maple_hickory.csv with the same counts as the real data
(514 maples, 703 hickories) on the unit square. The two species follow
intensities driven by one smooth random surface with opposite signs, so they
segregate at short range and mix beyond a few tenths of the window. Use
scripts/regenerate_lansing.R to replace it with the real data.
"""

import csv
import pathlib

import numpy as np

N_MAPLE = 514
N_HICKORY = 703
SEED = 20240611


def surface(rng):
    centres = rng.uniform(-0.1, 1.1, size=(12, 2))
    weights = rng.choice([-1.0, 1.0], size=12) * rng.uniform(0.8, 1.6, size=12)
    width = 0.12

    def f(xy):
        d2 = ((xy[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        return (weights * np.exp(-d2 / (2 * width**2))).sum(axis=1)

    return f


def scatter(rng, f, sign, n):
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(size=(4 * n, 2))
        keep = rng.uniform(size=len(cand)) < 1 / (1 + np.exp(-2.5 * sign * f(cand)))
        out = np.vstack([out, cand[keep]])
    return out[:n]


def main():
    rng = np.random.default_rng(SEED)
    f = surface(rng)
    rows = [(x, y, "maple") for x, y in scatter(rng, f, 1.0, N_MAPLE)]
    rows += [(x, y, "hickory") for x, y in scatter(rng, f, -1.0, N_HICKORY)]
    rows.sort(key=lambda r: (r[0], r[1]))
    path = pathlib.Path(__file__).resolve().parent.parent / "data" / "lansing_maple_hickory.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "species"])
        for x, y, s in rows:
            w.writerow([f"{x:.6f}", f"{y:.6f}", s])


if __name__ == "__main__":
    main()
