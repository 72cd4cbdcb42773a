"""Watch the square-function L2 constants converge to 1/2, 1/4, 1/8.

For band-limited inputs away from the degenerate frequency lines, the
one-, two-, and three-block area functions have exact L2 ratios that the
scale-ladder quadrature approaches as the ladder refines.
"""

import numpy as np

from tha.grid import SpatialField, make_grid
from tha.kernels import ScaleGrid
from tha.operators import area_l2_ratio, degenerate_mass_fraction


def admissible_field(spec, seed=3, kmax=8):
    rng = np.random.default_rng(seed)
    n = spec.n
    coeffs = np.zeros((n, n), complex)
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 and k2 and k1 + k2:
                coeffs[k1 % n, k2 % n] = rng.standard_normal() \
                    + 1j * rng.standard_normal()
    return SpatialField(spec, np.fft.ifft2(coeffs).real * n * n)


def main():
    spec = make_grid(m=1, n=64, period=2 * np.pi)
    f = admissible_field(spec)
    print(f"degenerate spectral mass: {degenerate_mass_fraction(f):.2e}")
    print(f"{'pts/decade':>10} {'S^(3)':>10} {'S^(1,2)':>10} {'S^(1,2,3)':>10}")
    for ppd in (4, 8, 16, 32):
        ladder = ScaleGrid(1e-3, 5, ppd)
        ratios = [area_l2_ratio(f, ladder, frozenset(b))
                  for b in ({3}, {1, 2}, {1, 2, 3})]
        print(f"{ppd:>10} " + " ".join(f"{v:>10.6f}" for v in ratios))
    print(f"{'target':>10} {0.5:>10.6f} {0.25:>10.6f} {0.125:>10.6f}")


if __name__ == "__main__":
    main()
