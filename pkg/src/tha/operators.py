"""Maximal and square-function operators on the periodic grid.

Tube averages go through FFT convolution with rasterized tube indicators.
Sliding maxima over tube shapes use separable 1-D passes, shearing the grid
first when the tube is a parallelogram.  Area functions sum a geometric
scale ladder with logarithmic weights; their L^2 constants admit an exact
frequency-side evaluation used as the fast path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter1d

from .grid import (
    GridSpec, SpatialField, ConfigurationError,
    forward_transform, lp_norm, distribution_measure, llogl_functional,
)
from .kernels import ScaleGrid, ScaleTriple, extend, mixed_gradient_sq
from .geometry import classify_regime, RECT, PARA_FIRST, PARA_SECOND, _shear_view, _unshear_view

ALL_BLOCKS = frozenset({1, 2, 3})


@dataclass(frozen=True)
class ConeSpec:
    """Cone aperture, scale ladder, and which scale blocks are active."""

    beta: float
    scales: ScaleGrid
    blocks: frozenset = ALL_BLOCKS

    def __post_init__(self):
        if not self.beta >= 1:
            raise ConfigurationError("cone aperture must satisfy beta >= 1")
        blocks = frozenset(self.blocks)
        if not blocks or not blocks <= ALL_BLOCKS:
            raise ConfigurationError("active blocks must be a nonempty subset of {1,2,3}")
        object.__setattr__(self, "blocks", blocks)


@dataclass
class OperatorOutput:
    field: SpatialField
    operator: str
    cone: Optional[ConeSpec] = None

    @property
    def values(self) -> np.ndarray:
        return self.field.values


# ---------------------------------------------------------------------------
# tube stencils (m = 1)


def _halfwidth(r: float, spacing: float, n: int) -> int:
    """Number of positive offsets k with |k|*spacing < r, capped at n//2."""
    h = int(math.ceil(r / spacing)) - 1
    return max(0, min(h, n // 2))


def stencil_key(spec: GridSpec, r: ScaleTriple, blocks: frozenset):
    """(shape label, halfwidths) identifying the rasterized tube at scale r."""
    d, n = spec.spacing, spec.n
    b = frozenset(blocks)
    if b == ALL_BLOCKS:
        reg = classify_regime(r.r1, r.r2, r.r3)
        if reg == RECT:
            return ("rect", _halfwidth(r.r1, d, n), _halfwidth(r.r2, d, n))
        if reg == PARA_FIRST:
            return ("para-first", _halfwidth(r.r1, d, n), _halfwidth(r.r3, d, n))
        return ("para-second", _halfwidth(r.r2, d, n), _halfwidth(r.r3, d, n))
    if b == frozenset({1, 2}):
        return ("rect", _halfwidth(r.r1, d, n), _halfwidth(r.r2, d, n))
    if b == frozenset({1, 3}):
        return ("para-first", _halfwidth(r.r1, d, n), _halfwidth(r.r3, d, n))
    if b == frozenset({2, 3}):
        return ("para-second", _halfwidth(r.r2, d, n), _halfwidth(r.r3, d, n))
    if b == frozenset({1}):
        return ("seg1", _halfwidth(r.r1, d, n), 0)
    if b == frozenset({2}):
        return ("seg2", _halfwidth(r.r2, d, n), 0)
    return ("diag", _halfwidth(r.r3, d, n), 0)


def _build_stencil(n: int, shape: str, ha: int, hb: int) -> np.ndarray:
    k = np.arange(n)
    off = (k + n // 2) % n - n // 2
    O1, O2 = off[:, None], off[None, :]
    dwrap = ((k[:, None] - k[None, :]) + n // 2) % n - n // 2
    if shape == "rect":
        return (np.abs(O1) <= ha) & (np.abs(O2) <= hb)
    if shape == "para-first":
        return (np.abs(dwrap) <= ha) & (np.abs(O2) <= hb)
    if shape == "para-second":
        return (np.abs(-dwrap) <= ha) & (np.abs(O1) <= hb)
    if shape == "seg1":
        return (np.abs(O1) <= ha) & (O2 == 0)
    if shape == "seg2":
        return (O1 == 0) & (np.abs(O2) <= ha)
    if shape == "diag":
        return (O1 == O2) & (np.abs(O1) <= ha)
    raise ValueError(f"unknown stencil shape {shape}")


_MEAN_CACHE: dict = {}


def _stencil_mean(values: np.ndarray, n: int, key) -> np.ndarray:
    """Average of values over the tube stencil centered at each grid point."""
    entry = _MEAN_CACHE.get((n, key))
    if entry is None:
        st = _build_stencil(n, *key)
        entry = (int(st.sum()), np.fft.fft2(st.astype(float)))
        if len(_MEAN_CACHE) > 4096:
            _MEAN_CACHE.clear()
        _MEAN_CACHE[(n, key)] = entry
    count, shat = entry
    # stencils are symmetric under negation, so correlation equals convolution
    return np.fft.ifft2(np.fft.fft2(values) * shat).real / count


def _size(h: int, n: int) -> int:
    return min(2 * h + 1, n)


def tube_max_filter(values: np.ndarray, shape: str, ha: int, hb: int) -> np.ndarray:
    """Sliding maximum over the tube stencil, via separable wrap-mode passes."""
    n = values.shape[0]
    if shape == "rect":
        out = maximum_filter1d(values, _size(ha, n), axis=0, mode="wrap")
        return maximum_filter1d(out, _size(hb, n), axis=1, mode="wrap")
    if shape == "para-first":
        v = _shear_view(values, "first")
        v = maximum_filter1d(v, _size(ha, n), axis=0, mode="wrap")
        v = maximum_filter1d(v, _size(hb, n), axis=1, mode="wrap")
        return _unshear_view(v, "first")
    if shape == "para-second":
        v = _shear_view(values, "second")
        v = maximum_filter1d(v, _size(hb, n), axis=0, mode="wrap")
        v = maximum_filter1d(v, _size(ha, n), axis=1, mode="wrap")
        return _unshear_view(v, "second")
    if shape == "seg1":
        return maximum_filter1d(values, _size(ha, n), axis=0, mode="wrap")
    if shape == "seg2":
        return maximum_filter1d(values, _size(ha, n), axis=1, mode="wrap")
    if shape == "diag":
        v = _shear_view(values, "first")
        v = maximum_filter1d(v, _size(ha, n), axis=1, mode="wrap")
        return _unshear_view(v, "first")
    raise ValueError(f"unknown stencil shape {shape}")


def _require_m1(spec: GridSpec) -> None:
    if spec.m != 1:
        raise NotImplementedError("tube rasterization is implemented for m = 1")


# ---------------------------------------------------------------------------
# maximal operators


def tube_maximal(f: SpatialField, scales: ScaleGrid,
                 restrict: Optional[str] = None) -> OperatorOutput:
    """Pointwise sup over the scale ladder of tube averages of |f|.

    restrict limits the sup to tubes of one regime ('rect', 'para-first',
    'para-second'), giving the per-family restricted maximal operators.
    """
    _require_m1(f.spec)
    n = f.spec.n
    absf = np.abs(f.values)
    keys = set()
    for r in scales.triples(ALL_BLOCKS):
        if restrict is not None and classify_regime(r.r1, r.r2, r.r3) != restrict:
            continue
        keys.add(stencil_key(f.spec, r, ALL_BLOCKS))
    if not keys:
        raise ConfigurationError("scale ladder produced no tubes")
    out = np.zeros_like(absf)
    for key in sorted(keys):
        np.maximum(out, _stencil_mean(absf, n, key), out=out)
    return OperatorOutput(SpatialField(f.spec, out), "tube_maximal")


def tube_maximal_indicator(mask: np.ndarray, spec: GridSpec,
                           scales: ScaleGrid) -> np.ndarray:
    """tube_maximal specialized to an indicator, returning the raw array."""
    return tube_maximal(SpatialField(spec, mask.astype(float)), scales).values


def nontangential_max(f: SpatialField, cone: ConeSpec) -> OperatorOutput:
    """sup of |U_f(y, r)| over y in the tube T(x, beta*r), r in the ladder."""
    _require_m1(f.spec)
    out = np.zeros(f.spec.shape)
    for r in cone.scales.triples(cone.blocks):
        U = extend(f, r)
        scaled = ScaleTriple(
            *(None if v is None else cone.beta * v for v in (r.r1, r.r2, r.r3)))
        shape, ha, hb = stencil_key(f.spec, scaled, cone.blocks)
        np.maximum(out, tube_max_filter(np.abs(U.values), shape, ha, hb), out=out)
    return OperatorOutput(SpatialField(f.spec, out), "nontangential_max", cone)


# ---------------------------------------------------------------------------
# area functions


def _area_sq(f: SpatialField, scales: ScaleGrid, blocks: frozenset) -> np.ndarray:
    _require_m1(f.spec)
    if scales.points_per_decade < 4:
        warnings.warn("scale ladder below 4 points per decade; area quadrature is coarse")
    n = f.spec.n
    w = scales.dlog ** len(blocks)
    S2 = np.zeros(f.spec.shape)
    for r in scales.triples(blocks):
        rprod = 1.0
        for j in sorted(blocks):
            rprod *= r.entry(j)
        G = (rprod ** 2) * mixed_gradient_sq(f, r, blocks).values
        key = stencil_key(f.spec, r, blocks)
        S2 += w * _stencil_mean(G, n, key)
    return S2


def area_function(f: SpatialField, cone: ConeSpec) -> OperatorOutput:
    """Full twisted area function; the cone must have all three blocks."""
    if cone.blocks != ALL_BLOCKS:
        raise ConfigurationError("area_function requires all three active blocks")
    S2 = _area_sq(f, cone.scales, ALL_BLOCKS)
    return OperatorOutput(SpatialField(f.spec, np.sqrt(np.maximum(S2, 0.0))),
                          "area_function", cone)


def partial_area(f: SpatialField, blocks, cone: ConeSpec) -> OperatorOutput:
    """Area function over a proper subset of the scale blocks; the inactive
    blocks sit at the boundary (their extension factor is the identity)."""
    blocks = frozenset(blocks)
    if blocks == ALL_BLOCKS:
        raise ConfigurationError("use area_function for the full block set")
    if not blocks or not blocks <= ALL_BLOCKS:
        raise ConfigurationError("blocks must be a nonempty proper subset of {1,2,3}")
    S2 = _area_sq(f, cone.scales, blocks)
    return OperatorOutput(SpatialField(f.spec, np.sqrt(np.maximum(S2, 0.0))),
                          "partial_area", ConeSpec(cone.beta, cone.scales, blocks))


def area_l2_ratio(f: SpatialField, scales: ScaleGrid, blocks=ALL_BLOCKS) -> float:
    """Exact frequency-side evaluation of the squared L2 ratio of the area
    function to its input.

    Tube averaging preserves the torus integral, so integrating the ladder
    sum termwise and applying the Parseval identity per derivative factor
    gives the same number as the spatial route, at far lower cost.  The
    limit as the ladder refines and widens is (1/2)^{#blocks} away from the
    degenerate frequency sets.
    """
    blocks = frozenset(blocks)
    if not blocks or not blocks <= ALL_BLOCKS:
        raise ConfigurationError("blocks must be a nonempty subset of {1,2,3}")
    coeffs = forward_transform(f)
    power = np.abs(coeffs.coefficients) ** 2
    total = float(power.sum())
    if total == 0.0:
        raise ConfigurationError("zero input field")
    mags = f.spec.block_freq_magnitudes()
    ladder = scales.ladder()
    weighted = power.copy()
    for j in sorted(blocks):
        a = mags[j - 1]
        factor = np.zeros_like(a)
        for s in ladder:
            sa = s * a
            factor += 2.0 * sa * sa * np.exp(-2.0 * sa)
        weighted *= scales.dlog * factor
    return float(weighted.sum()) / total


# ---------------------------------------------------------------------------
# inequality sweeps and checks


@dataclass
class GoodLambdaReport:
    """Distribution-level comparison of the area and non-tangential maximal
    functions: per threshold, |{S > lam}| against |{U* > lam}| plus the
    truncated quadratic tail."""

    rows: list = field(default_factory=list)
    constant: float = 0.0

    def append(self, lam, lhs, term1, term2):
        denom = term1 + term2
        if lhs == 0.0:
            c = 0.0
        elif denom == 0.0:
            c = math.inf
        else:
            c = lhs / denom
        self.rows.append({"lambda": lam, "lhs": lhs, "term1": term1,
                          "term2": term2, "constant": c})
        if c > self.constant:
            self.constant = c

    def write_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "lhs", "term1", "term2", "constant"])
            for row in self.rows:
                w.writerow(["%.17g" % row[k]
                            for k in ("lambda", "lhs", "term1", "term2", "constant")])


def good_lambda_sweep(f: SpatialField, beta: float, lambdas,
                      scales: ScaleGrid) -> GoodLambdaReport:
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas) or sorted(lambdas) != lambdas:
        raise ConfigurationError("lambda grid must be positive and increasing")
    S = area_function(f, ConeSpec(1.0, scales)).values
    U = nontangential_max(f, ConeSpec(beta, scales)).values
    cell = f.spec.cell_measure
    report = GoodLambdaReport()
    for lam in lambdas:
        lhs = distribution_measure(SpatialField(f.spec, S), lam)
        term1 = distribution_measure(SpatialField(f.spec, U), lam)
        below = U <= lam
        term2 = float((U[below] ** 2).sum()) * cell / lam ** 2
        report.append(lam, lhs, term1, term2)
    return report


def _extended_scales(scales: ScaleGrid, beta: float) -> ScaleGrid:
    """Widen a cone ladder so tube averages reach the scales the cone sees.

    A point of the cone at aperture beta and scale r sits inside a tube of
    comparable radius about 3*beta*r, so the maximal function that is meant
    to dominate the cone needs scales up to that factor beyond the ladder."""
    extra = int(math.ceil(math.log10(3.0 * beta)))
    return ScaleGrid(scales.r_min, scales.decades + extra, scales.points_per_decade)


def domination_constant(f: SpatialField, beta: float, scales: ScaleGrid) -> dict:
    """Measured pointwise constant in U_f* <= C0 * M_tube(f)."""
    U = nontangential_max(f, ConeSpec(beta, scales)).values
    M = tube_maximal(f, _extended_scales(scales, beta)).values
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(M > 0, U / np.where(M > 0, M, 1.0), np.where(U > 0, np.inf, 0.0))
    k = np.unravel_index(np.argmax(ratio), ratio.shape)
    return {"c0": float(ratio[k]), "argmax": tuple(int(v) for v in k),
            "beta": beta}


def separation_check(f: SpatialField, lam: float, beta: float,
                     scales: ScaleGrid, c0: float) -> dict:
    """Lattice check that the extension of the good-set indicator exceeds
    9/10 over the tent of the calm region and stays below the measured
    exterior maximum off the tent of the good set."""
    if lam <= 0 or c0 <= 0:
        raise ConfigurationError("lambda and c0 must be positive")
    spec = f.spec
    Ustar = nontangential_max(f, ConeSpec(beta, scales)).values
    E = Ustar <= lam
    if not E.any():
        raise ConfigurationError("empty good set at this threshold")
    M_bad = tube_maximal_indicator(~E, spec, _extended_scales(scales, beta))
    A = M_bad <= 1.0 / (10.0 * c0)
    g = SpatialField(spec, E.astype(float))
    report = {"lambda": lam, "beta": beta, "c0": c0,
              "good_measure": float(E.mean()), "calm_measure": float(A.mean()),
              "min_inner": math.inf, "max_outer": 0.0,
              "inner_violations": 0, "outer_violations": 0,
              "inner_cells": 0, "outer_cells": 0}
    Af = A.astype(float)
    Ef = E.astype(float)
    for r in scales.triples(ALL_BLOCKS):
        Ug = extend(f=g, r=r).values.real
        scaled = ScaleTriple(beta * r.r1, beta * r.r2, beta * r.r3)
        shape, ha, hb = stencil_key(spec, scaled, ALL_BLOCKS)
        W = tube_max_filter(Af, shape, ha, hb) > 0.5
        Wt = tube_max_filter(Ef, shape, ha, hb) > 0.5
        if W.any():
            vals = Ug[W]
            report["min_inner"] = min(report["min_inner"], float(vals.min()))
            report["inner_violations"] += int((vals <= 0.9).sum())
            report["inner_cells"] += int(W.sum())
        if not Wt.all():
            vals = Ug[~Wt]
            report["max_outer"] = max(report["max_outer"], float(vals.max()))
            report["outer_violations"] += int((vals >= 0.9).sum())
            report["outer_cells"] += int((~Wt).sum())
    report["c1"] = report["max_outer"]
    return report


def dyadic_domination_check(a: float, samples: int = 4096, m: int = 1) -> dict:
    """Empirical constant in the pointwise bound of the Poisson kernel by a
    lacunary sum of normalized ball indicators.

    Both sides are homogeneous of degree -m in (a, v), so the ratio depends
    only on t = |v|/a; the sweep covers t in [0, 2^16] on a log grid."""
    if a <= 0:
        raise ConfigurationError("scale must be positive")
    if m != 1:
        raise NotImplementedError("closed-form series is implemented for m = 1")
    t = np.concatenate([[0.0], np.logspace(-4, 16 * math.log10(2.0), samples - 1)])
    v = a * t
    poi = (1.0 / math.pi) * a / (a * a + v * v)
    # smallest nu >= 0 with |v| < 2^nu a, then the tail of the 4^{-nu} series
    nu0 = np.where(t < 1.0, 0, np.floor(np.log2(np.maximum(t, 1e-300))).astype(int) + 1)
    series = (1.0 / (2.0 * a)) * (4.0 / 3.0) * np.power(4.0, -nu0.astype(float))
    ratio = poi / series
    k = int(np.argmax(ratio))
    return {"constant": float(ratio[k]), "argmax_t": float(t[k]),
            "ratio_at_zero": float(ratio[0]), "samples": samples, "a": a}


def lp_operator_norm(op: str, p: float, suite, scales: ScaleGrid,
                     beta: float = 16.0) -> float:
    """Empirical lower bound max ||T f||_p / ||f||_p over the suite."""
    if not p > 1:
        raise ConfigurationError("p must exceed 1")
    best = 0.0
    for f in suite:
        if op == "tube_maximal":
            out = tube_maximal(f, scales)
        elif op == "nontangential_max":
            out = nontangential_max(f, ConeSpec(beta, scales))
        else:
            raise ConfigurationError(f"unknown operator {op}")
        denom = lp_norm(f, p)
        if denom == 0:
            continue
        best = max(best, lp_norm(out.field, p) / denom)
    return best


def degenerate_mass_fraction(f: SpatialField) -> float:
    """Fraction of spectral energy on the degenerate frequency sets."""
    coeffs = forward_transform(f)
    power = np.abs(coeffs.coefficients) ** 2
    a1, a2, a3 = f.spec.block_freq_magnitudes()
    deg = (a1 == 0) | (a2 == 0) | (a3 == 0)
    total = float(power.sum())
    if total == 0:
        return 1.0
    return float(power[deg].sum()) / total


def reproducing_residual(f: SpatialField, ladder: ScaleGrid,
                         degenerate_tol: float = 1e-10) -> float:
    """Relative L2 error of the discrete twisted reproducing formula.

    The reconstruction applies 64 times the cube of the per-block profile
    sum_s w (s a e^{-s a})^2 with central Riemann weights w = sinh(dlog);
    the continuum profile integrates to 1/4 per block, hence the 64.
    """
    frac = degenerate_mass_fraction(f)
    if frac > degenerate_tol:
        raise ConfigurationError(
            f"input has relative mass {frac:.3e} on degenerate frequencies; "
            "those modes cannot be reconstructed")
    coeffs = forward_transform(f).coefficients
    power = np.abs(coeffs) ** 2
    total = float(power.sum())
    w = math.sinh(ladder.dlog)
    mult = np.full(f.spec.shape, 64.0)
    for a in f.spec.block_freq_magnitudes():
        prof = np.zeros_like(a)
        for s in ladder.ladder():
            sa = s * a
            prof += (sa * np.exp(-sa)) ** 2
        mult *= w * prof
    err = float((power * (mult - 1.0) ** 2).sum())
    return math.sqrt(err / total)


def llogl_endpoint_sweep(f: SpatialField, lambdas, scales: ScaleGrid) -> dict:
    """Ratios of the area-function distribution to the L log L functional."""
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas):
        raise ConfigurationError("lambda grid must be positive")
    S = area_function(f, ConeSpec(1.0, scales)).field
    rows = []
    best = 0.0
    for lam in lambdas:
        lhs = distribution_measure(S, lam)
        rhs = llogl_functional(f, lam)
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        rows.append({"lambda": lam, "lhs": lhs, "rhs": rhs, "ratio": ratio})
        best = max(best, ratio)
    return {"rows": rows, "max_ratio": best}
