"""Periodic grids on the torus [0, L)^{2m} with spectral transform support.

The spatial domain is split into two blocks of dimension m (default m = 1,
so the grid lives on a 2-D torus).  Transforms use the integral convention:
the coefficient at frequency zero equals the mean of the field times L^{2m},
so continuum multiplier formulas apply verbatim on the discrete lattice.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"THA1"


class ConfigurationError(ValueError):
    """Invalid grid or operator configuration."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic sampling of [0, L)^{2m} with n points per axis."""

    m: int = 1
    n: int = 64
    period: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"block dimension must be >= 1, got {self.m}")
        if not _is_power_of_two(self.n):
            raise ConfigurationError(f"n must be a power of two, got {self.n}")
        if not self.period > 0:
            raise ConfigurationError(f"period must be positive, got {self.period}")

    @property
    def ndim(self) -> int:
        return 2 * self.m

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.ndim

    @property
    def size(self) -> int:
        return self.n ** self.ndim

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def cell_measure(self) -> float:
        return self.spacing ** self.ndim

    def axis_coords(self) -> np.ndarray:
        """Sample points along one axis: 0, h, ..., L - h."""
        return np.arange(self.n) * self.spacing

    def axis_freqs(self) -> np.ndarray:
        """Angular frequencies (2*pi/L) * {-n/2, ..., n/2 - 1} in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    def coords(self, axis: int) -> np.ndarray:
        """Coordinates along the given axis, broadcast to the grid shape."""
        c = self.axis_coords()
        shape = [1] * self.ndim
        shape[axis] = self.n
        return c.reshape(shape)

    def freq_component(self, axis: int) -> np.ndarray:
        k = self.axis_freqs()
        shape = [1] * self.ndim
        shape[axis] = self.n
        return k.reshape(shape)

    def block_freq_components(self, block: int) -> list:
        """Frequency components of block 1 or 2 (each m of them)."""
        if block == 1:
            axes = range(self.m)
        elif block == 2:
            axes = range(self.m, 2 * self.m)
        else:
            raise ValueError(f"spatial block must be 1 or 2, got {block}")
        return [self.freq_component(ax) for ax in axes]

    def block_freq_magnitudes(self):
        """(|xi1|, |xi2|, |xi1+xi2|) on the full frequency lattice."""
        xi1 = self.block_freq_components(1)
        xi2 = self.block_freq_components(2)
        a1 = np.sqrt(sum(k * k for k in xi1))
        a2 = np.sqrt(sum(k * k for k in xi2))
        a3 = np.sqrt(sum((p + q) ** 2 for p, q in zip(xi1, xi2)))
        return a1, a2, a3


@dataclass
class SpatialField:
    """Samples of a function on the grid."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.spec.shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}"
            )

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def real_part(self) -> "SpatialField":
        return SpatialField(self.spec, np.real(self.values))

    def __abs__(self) -> "SpatialField":
        return SpatialField(self.spec, np.abs(self.values))


@dataclass
class FrequencyField:
    """Fourier coefficients on the frequency lattice, FFT ordering."""

    spec: GridSpec
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != self.spec.shape:
            raise ConfigurationError("coefficient shape does not match grid")

    def parseval_sum(self) -> float:
        """Squared L2 norm of the spatial field, computed spectrally."""
        return float(
            np.sum(np.abs(self.coefficients) ** 2) / self.spec.period ** self.spec.ndim
        )


def make_grid(m: int, n: int, period: float) -> GridSpec:
    return GridSpec(m=m, n=n, period=period)


def forward_transform(f: SpatialField) -> FrequencyField:
    """DFT with integral normalization: coeff(0) = mean(f) * L^{2m}."""
    coeffs = np.fft.fftn(f.values) * f.spec.cell_measure
    return FrequencyField(f.spec, coeffs)


def inverse_transform(F: FrequencyField, real: bool = False) -> SpatialField:
    vals = np.fft.ifftn(F.coefficients) / F.spec.cell_measure
    if real:
        vals = vals.real
    return SpatialField(F.spec, vals)


def lp_norm(f: SpatialField, p: float) -> float:
    """Riemann-sum L^p norm with cell measure (L/n)^{2m}."""
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    a = np.abs(f.values)
    return float((np.sum(a ** p) * f.spec.cell_measure) ** (1.0 / p))


def distribution_measure(f: SpatialField, lam: float) -> float:
    """Lebesgue measure of the super-level set {|f| > lam}."""
    count = int(np.count_nonzero(np.abs(f.values) > lam))
    return count * f.spec.cell_measure


def llogl_functional(f: SpatialField, lam: float) -> float:
    """Riemann sum of (|f|/lam) * log(e + |f|/lam)."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    t = np.abs(f.values) / lam
    return float(np.sum(t * np.log(np.e + t)) * f.spec.cell_measure)


# ---------------------------------------------------------------------------
# serialization


def save_field(f: SpatialField, path) -> None:
    """Flat binary format: magic, m, n, L, real flag, then row-major f64."""
    is_real = f.is_real
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IId", f.spec.m, f.spec.n, f.spec.period))
        fh.write(struct.pack("<B", 1 if is_real else 0))
        if is_real:
            np.asarray(f.values, dtype="<f8").tofile(fh)
        else:
            inter = np.empty(f.spec.shape + (2,), dtype="<f8")
            inter[..., 0] = f.values.real
            inter[..., 1] = f.values.imag
            inter.tofile(fh)


def load_field(path) -> SpatialField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ConfigurationError(f"bad magic {magic!r}")
        m, n, period = struct.unpack("<IId", fh.read(16))
        (flag,) = struct.unpack("<B", fh.read(1))
        spec = GridSpec(m=m, n=n, period=period)
        if flag:
            vals = np.fromfile(fh, dtype="<f8", count=spec.size).reshape(spec.shape)
        else:
            raw = np.fromfile(fh, dtype="<f8", count=2 * spec.size)
            raw = raw.reshape(spec.shape + (2,))
            vals = raw[..., 0] + 1j * raw[..., 1]
    return SpatialField(spec, vals)


def export_csv(f: SpatialField, path) -> None:
    """One row per grid point: coordinates then value (re, im if complex)."""
    spec = f.spec
    coords = spec.axis_coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"x{i + 1}" for i in range(spec.ndim)]
        if f.is_real:
            w.writerow(header + ["value"])
        else:
            w.writerow(header + ["re", "im"])
        for idx in np.ndindex(spec.shape):
            row = [repr(coords[i]) for i in idx]
            v = f.values[idx]
            if f.is_real:
                row.append(repr(float(v)))
            else:
                row.extend([repr(float(v.real)), repr(float(v.imag))])
            w.writerow(row)
