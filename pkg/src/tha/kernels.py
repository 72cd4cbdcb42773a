"""Twisted Poisson kernel, extension, and block derivatives.

The extension U_f at scale r = (r1, r2, r3) acts on the frequency lattice by
the multiplier exp(-r1|xi1| - r2|xi2| - r3|xi1+xi2|).  The same kernel is
also available in physical space as the fiber integral of three Euclidean
Poisson kernels, which provides the independent cross-validation route.

A scale entry may be marked as a boundary (r_j -> 0 limit), in which case
that block contributes a multiplier factor of 1.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .grid import (
    GridSpec,
    SpatialField,
    FrequencyField,
    forward_transform,
    inverse_transform,
    lp_norm,
    ConfigurationError,
)


# ---------------------------------------------------------------------------
# scales


@dataclass(frozen=True)
class ScaleTriple:
    """A point in the scale octant; None marks the r_j -> 0 boundary."""

    r1: Optional[float] = None
    r2: Optional[float] = None
    r3: Optional[float] = None

    def __post_init__(self):
        for name in ("r1", "r2", "r3"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive or None, got {v}")

    def entry(self, j: int) -> Optional[float]:
        return (self.r1, self.r2, self.r3)[j - 1]

    def is_boundary(self, j: int) -> bool:
        return self.entry(j) is None

    def active_blocks(self) -> tuple:
        return tuple(j for j in (1, 2, 3) if not self.is_boundary(j))

    def replace(self, j: int, value: Optional[float]) -> "ScaleTriple":
        vals = [self.r1, self.r2, self.r3]
        vals[j - 1] = value
        return ScaleTriple(*vals)


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric ladder r_min * rho^k, k = 0 .. K-1, shared across axes."""

    r_min: float
    decades: float
    points_per_decade: int

    def __post_init__(self):
        if not self.r_min > 0:
            raise ValueError("r_min must be positive")
        if self.decades <= 0 or self.points_per_decade < 1:
            raise ValueError("need positive decades and points per decade")

    @property
    def ratio(self) -> float:
        return 10.0 ** (1.0 / self.points_per_decade)

    @property
    def dlog(self) -> float:
        """Log spacing ln(rho)."""
        return math.log(10.0) / self.points_per_decade

    @property
    def count(self) -> int:
        return int(round(self.decades * self.points_per_decade))

    def ladder(self) -> np.ndarray:
        k = np.arange(self.count)
        return self.r_min * self.ratio ** k

    def triples(self, blocks=(1, 2, 3)):
        """Cartesian product of the ladder over the active blocks."""
        lad = self.ladder()
        axes = [lad if j in blocks else [None] for j in (1, 2, 3)]
        for r1, r2, r3 in itertools.product(*axes):
            yield ScaleTriple(r1, r2, r3)

    def refine(self, factor: int = 2) -> "ScaleGrid":
        return ScaleGrid(self.r_min, self.decades, self.points_per_decade * factor)


# ---------------------------------------------------------------------------
# Poisson kernel and multiplier


def poisson_normalization(m: int) -> float:
    """c_m with unit mass: c_m = Gamma((m+1)/2) / pi^((m+1)/2)."""
    return math.exp(gammaln((m + 1) / 2.0) - (m + 1) / 2.0 * math.log(math.pi))


def poisson_kernel_1d(m: int, a: float, v) -> float:
    """Dilated Poisson kernel c_m * a / (a^2 + |v|^2)^((m+1)/2) on R^m."""
    if not a > 0:
        raise ValueError(f"scale must be positive, got {a}")
    v = np.asarray(v, dtype=float)
    sq = float(np.sum(v * v))
    cm = poisson_normalization(m)
    return cm * a / (a * a + sq) ** ((m + 1) / 2.0)


def twisted_multiplier(xi1, xi2, r: ScaleTriple) -> float:
    """exp(-r1|xi1| - r2|xi2| - r3|xi1+xi2|); boundary blocks contribute 1."""
    xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    a1 = float(np.linalg.norm(xi1))
    a2 = float(np.linalg.norm(xi2))
    a3 = float(np.linalg.norm(xi1 + xi2))
    s = 0.0
    for rj, aj in zip((r.r1, r.r2, r.r3), (a1, a2, a3)):
        if rj is not None:
            s += rj * aj
    return math.exp(-s)


def multiplier_lattice(spec: GridSpec, r: ScaleTriple) -> np.ndarray:
    """The extension multiplier on the full frequency lattice."""
    a1, a2, a3 = spec.block_freq_magnitudes()
    s = np.zeros(spec.shape)
    for rj, aj in zip((r.r1, r.r2, r.r3), (a1, a2, a3)):
        if rj is not None:
            s = s + rj * aj
    return np.exp(-s)


# ---------------------------------------------------------------------------
# physical-space kernel (m = 1): exact fiber integral by residues


def _fiber_integral_m1(x1, x2, r1, r2, r3):
    """int Poi_r1(x1-u) Poi_r2(x2-u) Poi_r3(u) du for m = 1.

    The integrand is a rational function of u with simple upper-half-plane
    poles at x1 + i r1, x2 + i r2, i r3; the contour integral gives an exact
    closed form.  Coincident poles are separated by a tiny relative radius
    perturbation (the kernel is continuous in r).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    # keeps poles apart when scales coincide; O(eps) bias, no cancellation
    eps = 1e-5
    rr1, rr2, rr3 = r1, r2 * (1.0 + eps), r3 * (1.0 + 2.0 * eps)
    p1 = x1 + 1j * rr1
    p2 = x2 + 1j * rr2
    p3 = 1j * rr3

    t1 = rr2 * rr3 / (((p1 - x2) ** 2 + rr2 ** 2) * (p1 ** 2 + rr3 ** 2))
    t2 = rr1 * rr3 / (((p2 - x1) ** 2 + rr1 ** 2) * (p2 ** 2 + rr3 ** 2))
    t3 = rr1 * rr2 / (((p3 - x1) ** 2 + rr1 ** 2) * ((p3 - x2) ** 2 + rr2 ** 2))
    return np.real(t1 + t2 + t3) / math.pi ** 2


def periodized_poisson_1d(x, a: float, L: float):
    """L-periodization of the 1-D Poisson kernel, summed in closed form.

    sum_k Poi_a(x + kL) = (1/L) sinh(2 pi a / L) / (cosh(2 pi a / L) -
    cos(2 pi x / L)).
    """
    t = 2.0 * math.pi * a / L
    return (math.sinh(t) / L) / (math.cosh(t) - np.cos(2.0 * math.pi * np.asarray(x) / L))


def twisted_kernel_physical(
    spec: GridSpec, r: ScaleTriple, quad_points: Optional[int] = None,
    mass_tol: float = 0.01,
) -> SpatialField:
    """Samples of the twisted Poisson kernel on the torus.

    Computes the fiber integral int Poi_r1(x1-u) Poi_r2(x2-u) Poi_r3(u) du
    with each factor replaced by its closed-form periodization, folding u
    onto one period; the integrand is then smooth and periodic, so the
    trapezoid rule converges spectrally.  Raises when the kernel does not
    fit in the box (discrete mass deficit beyond mass_tol).
    """
    if spec.m != 1:
        raise NotImplementedError("physical kernel is implemented for m = 1")
    for j in (1, 2, 3):
        if r.is_boundary(j):
            raise ValueError("physical kernel needs all three scales positive")
    L = spec.period
    rmin = min(r.r1, r.r2, r.r3)
    if quad_points is None:
        # resolves the narrowest periodized factor to ~1e-12
        quad_points = max(4 * spec.n, int(8.0 * L / rmin))
    u = (np.arange(quad_points) + 0.5) * (L / quad_points)
    x = spec.axis_coords()
    p1 = periodized_poisson_1d(x[None, :] - u[:, None], r.r1, L)
    p2 = periodized_poisson_1d(x[None, :] - u[:, None], r.r2, L)
    w3 = periodized_poisson_1d(u, r.r3, L) * (L / quad_points)
    vals = np.einsum("u,ua,ub->ab", w3, p1, p2)
    mass = float(np.sum(vals) * spec.cell_measure)
    if abs(mass - 1.0) > mass_tol:
        raise ConfigurationError(
            f"kernel mass {mass:.4f} deviates from 1 by more than {mass_tol}; "
            "scales too large for the box"
        )
    return SpatialField(spec, vals)


# ---------------------------------------------------------------------------
# extension and derivatives


@dataclass
class ExtensionField:
    """Samples of U_f(. , r) on the grid."""

    spec: GridSpec
    scale: ScaleTriple
    values: np.ndarray

    def as_spatial(self) -> SpatialField:
        return SpatialField(self.spec, self.values)

    def save(self, path) -> None:
        from .grid import save_field

        save_field(self.as_spatial(), path)
        with open(path, "ab") as fh:
            for j in (1, 2, 3):
                v = self.scale.entry(j)
                fh.write(struct.pack("<dB", 0.0 if v is None else v, v is None))


def extend(f: SpatialField, r: ScaleTriple) -> ExtensionField:
    """Twisted Poisson extension U_f(., r) via the multiplier."""
    F = forward_transform(f)
    mult = multiplier_lattice(f.spec, r)
    out = np.fft.ifftn(F.coefficients * mult) / f.spec.cell_measure
    if f.is_real:
        out = out.real
    return ExtensionField(f.spec, r, out)


@dataclass(frozen=True)
class BlockDerivativeSpec:
    """One action per block: None, ('spatial', k) with 0 <= k < m, or 'scale'.

    Block 3's spatial action is the twisted direction (component-wise sum of
    the two block gradients).  A 'scale' action on a boundary-marked block is
    rejected unless boundary_limit is set, in which case the analytic factor
    -|xi_j| is applied at r_j = 0.
    """

    block1: object = None
    block2: object = None
    block3: object = None
    boundary_limit: bool = False

    def action(self, j: int):
        return (self.block1, self.block2, self.block3)[j - 1]


def _derivative_factor(spec: GridSpec, j: int, action) -> np.ndarray:
    a1, a2, a3 = spec.block_freq_magnitudes()
    mags = (a1, a2, a3)
    if action == "scale":
        return -mags[j - 1]
    kind, k = action
    if kind != "spatial":
        raise ValueError(f"unknown action {action!r}")
    if not 0 <= k < spec.m:
        raise ValueError(f"spatial component {k} out of range for m={spec.m}")
    if j == 1:
        return 1j * spec.block_freq_components(1)[k]
    if j == 2:
        return 1j * spec.block_freq_components(2)[k]
    xi1 = spec.block_freq_components(1)[k]
    xi2 = spec.block_freq_components(2)[k]
    return 1j * (xi1 + xi2)


def block_derivative_field(
    f: SpatialField, r: ScaleTriple, d: BlockDerivativeSpec
) -> SpatialField:
    """Spectral block derivative of the extension U_f(., r)."""
    factor = np.ones(f.spec.shape, dtype=complex)
    for j in (1, 2, 3):
        action = d.action(j)
        if action is None:
            continue
        if action == "scale" and r.is_boundary(j) and not d.boundary_limit:
            raise ValueError(
                f"scale derivative on boundary block {j} requires boundary_limit"
            )
        factor = factor * _derivative_factor(f.spec, j, action)
    F = forward_transform(f)
    mult = multiplier_lattice(f.spec, r)
    out = np.fft.ifftn(F.coefficients * mult * factor) / f.spec.cell_measure
    if f.is_real:
        out = out.real
    return SpatialField(f.spec, out)


def _block_actions(m: int):
    return [("spatial", k) for k in range(m)] + ["scale"]


def mixed_gradient_sq(f: SpatialField, r: ScaleTriple, blocks) -> SpatialField:
    """Pointwise |nabla_{j1} ... nabla_{jk} U_f|^2 over the listed blocks.

    Sums, over every combination of one action (m spatial components or the
    scale derivative) per listed block, the squared magnitude of the
    corresponding spectral derivative field.
    """
    blocks = sorted(set(blocks))
    if not blocks:
        raise ValueError("blocks must be nonempty")
    spec = f.spec
    F = forward_transform(f).coefficients * multiplier_lattice(spec, r)
    total = np.zeros(spec.shape)
    for combo in itertools.product(_block_actions(spec.m), repeat=len(blocks)):
        factor = np.ones(spec.shape, dtype=complex)
        for j, action in zip(blocks, combo):
            if action == "scale" and r.is_boundary(j):
                # analytic limit of the scale factor at r_j = 0
                pass
            factor = factor * _derivative_factor(spec, j, action)
        field = np.fft.ifftn(F * factor) / spec.cell_measure
        total += np.abs(field) ** 2
    return SpatialField(spec, total)


# ---------------------------------------------------------------------------
# residual diagnostics (finite differences are the independent route)


def _spatial_laplacian_factor(spec: GridSpec, j: int) -> np.ndarray:
    a1, a2, a3 = spec.block_freq_magnitudes()
    return -((a1, a2, a3)[j - 1] ** 2)


def harmonicity_residual(f: SpatialField, r: ScaleTriple, j: int, dr: float) -> float:
    """L2 size of Delta_{spatial,j} U + second difference of U in r_j."""
    rj = r.entry(j)
    if rj is None:
        raise ValueError(f"block {j} is at the boundary")
    if not dr < rj / 4.0:
        raise ValueError(f"step {dr} too large for r_{j} = {rj}")
    spec = f.spec
    F = forward_transform(f).coefficients

    def u(rr: ScaleTriple) -> np.ndarray:
        return np.fft.ifftn(F * multiplier_lattice(spec, rr)) / spec.cell_measure

    u0 = u(r)
    up = u(r.replace(j, rj + dr))
    um = u(r.replace(j, rj - dr))
    lap_sp = np.fft.ifftn(
        F * multiplier_lattice(spec, r) * _spatial_laplacian_factor(spec, j)
    ) / spec.cell_measure
    resid = lap_sp + (up - 2.0 * u0 + um) / dr ** 2
    return lp_norm(SpatialField(spec, resid), 2)


def square_identity_residual(
    f: SpatialField, r: ScaleTriple, j: int, dr: float
) -> float:
    """L2 residual of Delta_j(U^2) = 2 |nabla_j U|^2 with discrete d^2/dr^2."""
    if not f.is_real:
        raise ValueError("square identity diagnostic needs a real field")
    rj = r.entry(j)
    if rj is None:
        raise ValueError(f"block {j} is at the boundary")
    if not dr < rj / 4.0:
        raise ValueError(f"step {dr} too large for r_{j} = {rj}")
    spec = f.spec

    def usq(rr: ScaleTriple) -> np.ndarray:
        return extend(f, rr).values ** 2

    w0 = usq(r)
    wp = usq(r.replace(j, rj + dr))
    wm = usq(r.replace(j, rj - dr))
    W = np.fft.fftn(w0)
    lap_sp = np.fft.ifftn(W * _spatial_laplacian_factor(spec, j)).real
    lhs = lap_sp + (wp - 2.0 * w0 + wm) / dr ** 2
    rhs = 2.0 * mixed_gradient_sq(f, r, [j]).values
    return lp_norm(SpatialField(spec, lhs - rhs), 2)
