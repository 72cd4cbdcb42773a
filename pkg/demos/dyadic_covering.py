"""Dyadic tube covering sums on a random open set.

Rasterizes an open set, finds the maximal dyadic tubes of each of the five
families inside it, widens each maximal tube within the half-level set of
the family maximal function, and reports the covering sums.
"""

import numpy as np

from tha.grid import make_grid
from tha.geometry import (
    OpenSetMask, maximal_tubes, covering_sum, TYPE_I, TYPE_II, TYPE_III,
    TYPE_IV, TYPE_V,
)


def boxy_mask(n, seed=0):
    rng = np.random.default_rng(seed)
    mask = np.zeros((n, n), bool)
    for _ in range(4):
        h, w = rng.integers(4, n // 2, 2)
        i, j = rng.integers(0, n, 2)
        mask[(np.arange(i, i + h) % n)[:, None],
             (np.arange(j, j + w) % n)[None, :]] = True
    return mask


def main():
    spec = make_grid(m=1, n=64, period=2 * np.pi)
    omega = OpenSetMask(spec, boxy_mask(spec.n))
    print(f"|Omega| = {omega.measure():.4f} "
          f"({int(omega.mask.sum())} of {omega.n ** 2} cells)")
    print(f"{'type':>5} {'maximal tubes':>14} {'sum(k=1)/|Omega|':>17} "
          f"{'sum(k=2)/|Omega|':>17}")
    for typ in (TYPE_I, TYPE_II, TYPE_III, TYPE_IV, TYPE_V):
        count = len(maximal_tubes(omega, typ, axis=2))
        r1 = covering_sum(omega, typ, 1.0)[1]
        r2 = covering_sum(omega, typ, 2.0)[1]
        print(f"{typ:>5} {count:>14} {r1:>17.4f} {r2:>17.4f}")


if __name__ == "__main__":
    main()
