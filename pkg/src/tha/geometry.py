"""Tube geometry: continuous tubes, the projection, and dyadic tube systems.

A tube with radii (r1, r2, r3) is a rectangle when r1, r2 dominate and a
sheared parallelogram otherwise.  Dyadic tubes come in five types: standard
rectangles (I) and two slant families, keyed by which pair of scales defines
the product.  Open sets are rasterized masks at the finest grid scale, which
makes maximality and covering sums decidable by finite search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridSpec, ConfigurationError

RECT = "rect"
PARA_FIRST = "para-first"
PARA_SECOND = "para-second"

TYPE_I, TYPE_II, TYPE_III, TYPE_IV, TYPE_V = "I", "II", "III", "IV", "V"

# slant family of each type: rectangles, first-direction shear, second-direction shear
FAMILY = {TYPE_I: "axis", TYPE_II: "first", TYPE_III: "first",
          TYPE_IV: "second", TYPE_V: "second"}


def unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


def classify_regime(r1: float, r2: float, r3: float) -> str:
    """Regime trichotomy with tie-break priority rect > para-first > para-second."""
    if r1 >= r3 and r2 >= r3:
        return RECT
    if r1 >= r2:
        return PARA_FIRST
    return PARA_SECOND


@dataclass(frozen=True)
class TubeSpec:
    """Continuous tube T(center, radii) in R^{2m}."""

    center: tuple
    radii: tuple
    m: int = 1

    def __post_init__(self):
        if len(self.center) != 2 * self.m:
            raise ValueError("center must have 2m components")
        if len(self.radii) != 3 or any(not r > 0 for r in self.radii):
            raise ValueError("need three positive radii")

    @property
    def regime(self) -> str:
        return classify_regime(*self.radii)

    @property
    def defining_pair(self) -> tuple:
        r1, r2, r3 = self.radii
        return {RECT: (r1, r2), PARA_FIRST: (r1, r3), PARA_SECOND: (r2, r3)}[self.regime]

    def scaled(self, lam: float) -> "TubeSpec":
        return TubeSpec(self.center, tuple(lam * r for r in self.radii), self.m)


def tube_contains(T: TubeSpec, p) -> bool:
    """Membership test; norms are Euclidean in each m-block."""
    p = np.asarray(p, dtype=float)
    c = np.asarray(T.center, dtype=float)
    m = T.m
    s1 = p[:m] - c[:m]
    s2 = p[m:] - c[m:]
    r1, r2, r3 = T.radii
    reg = T.regime
    if reg == RECT:
        return bool(np.linalg.norm(s1) < r1 and np.linalg.norm(s2) < r2)
    if reg == PARA_FIRST:
        return bool(np.linalg.norm(s1 - s2) < r1 and np.linalg.norm(s2) < r3)
    return bool(np.linalg.norm(s2 - s1) < r2 and np.linalg.norm(s1) < r3)


def tube_volume(T: TubeSpec) -> float:
    """Exact Lebesgue volume v_m^2 (ra rb)^m of the membership region."""
    ra, rb = T.defining_pair
    return unit_ball_volume(T.m) ** 2 * (ra * rb) ** T.m


def tube_bounding_box(T: TubeSpec) -> tuple:
    """Tight per-block bounds (lo, hi) on the membership region."""
    c = np.asarray(T.center, dtype=float)
    r1, r2, r3 = T.radii
    reg = T.regime
    if reg == RECT:
        half = (r1, r2)
    elif reg == PARA_FIRST:
        half = (r1 + r3, r3)
    else:
        half = (r3, r2 + r3)
    h = np.concatenate([np.full(T.m, half[0]), np.full(T.m, half[1])])
    return c - h, c + h


def pi_project(q) -> np.ndarray:
    """pi(x1, x2, x3) = (x1 + x3, x2 + x3), blockwise in R^m."""
    q = np.asarray(q, dtype=float)
    if q.size % 3 != 0:
        raise ValueError("point must lie in R^{3m}")
    m = q.size // 3
    x1, x2, x3 = q[:m], q[m:2 * m], q[2 * m:]
    return np.concatenate([x1 + x3, x2 + x3])


# ---------------------------------------------------------------------------
# containment of the projected product ball between scaled tubes


def _sample_ball(rng, m: int, radius: float, size: int) -> np.ndarray:
    v = rng.standard_normal((size, m))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    u = rng.random(size) ** (1.0 / m)
    return v * (radius * u)[:, None]


def _sample_tube(rng, T: TubeSpec, size: int) -> np.ndarray:
    m = T.m
    r1, r2, r3 = T.radii
    reg = T.regime
    if reg == RECT:
        s1 = _sample_ball(rng, m, r1, size)
        s2 = _sample_ball(rng, m, r2, size)
    elif reg == PARA_FIRST:
        s2 = _sample_ball(rng, m, r3, size)
        s1 = s2 + _sample_ball(rng, m, r1, size)
    else:
        s1 = _sample_ball(rng, m, r3, size)
        s2 = s1 + _sample_ball(rng, m, r2, size)
    return np.asarray(T.center, dtype=float) + np.hstack([s1, s2])


def _in_projected_ball(p, x, radii, m: int) -> bool:
    """Feasibility: exists u in B(0, r3) with p - pi-shift inside B1 x B2."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    r1, r2, r3 = radii
    v1 = p[:m] - x[:m]
    v2 = p[m:] - x[m:]
    if m == 1:
        lo = max(v1[0] - r1, v2[0] - r2, -r3)
        hi = min(v1[0] + r1, v2[0] + r2, r3)
        return lo < hi
    from scipy.optimize import minimize

    def worst(u):
        return max(
            np.linalg.norm(v1 - u) - r1,
            np.linalg.norm(v2 - u) - r2,
            np.linalg.norm(u) - r3,
        )

    res = minimize(worst, 0.5 * (v1 + v2), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12})
    return bool(res.fun < 0)


def containment_check(
    x, r, samples: int, rng=None, inner_scale: float = 0.5, outer_scale: float = 2.0,
    m: int = 1,
):
    """Sampled verification of T(x, inner*r) within pi(product ball) within
    T(x, outer*r).  Returns violation counts (expected zero at the default
    scales 1/2 and 2)."""
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    radii = tuple(float(v) for v in r)
    inner = TubeSpec(tuple(x), tuple(inner_scale * v for v in radii), m)
    outer = TubeSpec(tuple(x), tuple(outer_scale * v for v in radii), m)

    inner_viol = 0
    for p in _sample_tube(rng, inner, samples):
        if not _in_projected_ball(p, x, radii, m):
            inner_viol += 1

    outer_viol = 0
    v1 = _sample_ball(rng, m, radii[0], samples)
    v2 = _sample_ball(rng, m, radii[1], samples)
    v3 = _sample_ball(rng, m, radii[2], samples)
    for k in range(samples):
        p = x + np.concatenate([v1[k] + v3[k], v2[k] + v3[k]])
        if not tube_contains(outer, p):
            outer_viol += 1
    return {"samples": samples, "inner_violations": inner_viol,
            "outer_violations": outer_viol}


# ---------------------------------------------------------------------------
# dyadic tubes (lattice machinery is specialized to m = 1)


def classify_scale(j) -> tuple:
    """Map a scale triple to (type, defining scale pair).

    Type I when j1, j2 >= j3; otherwise the first/second slant family by
    which of j1, j2 is smallest, with the tie broken toward the first
    family.  The defining scales are those of the two dominant blocks.
    """
    j1, j2, j3 = j
    if j1 >= j3 and j2 >= j3:
        return TYPE_I, (j1, j2)
    if j1 >= j2:
        return (TYPE_II if j1 <= j3 else TYPE_III), (j1, j3)
    return (TYPE_IV if j2 <= j3 else TYPE_V), (j2, j3)


@dataclass(frozen=True)
class DyadicTube:
    """Lattice dyadic tube on an n x n cell grid.

    Scales are log2 side lengths in cells; offsets are cell indices of the
    two defining intervals.  For the slant families the intervals live in
    sheared coordinates: type II/III uses (x1 - x2, x2), type IV/V uses
    (x1, x2 - x1), both mod n.
    """

    type: str
    j1: int
    j2: int
    k1: int
    k2: int

    def __post_init__(self):
        if self.type not in FAMILY:
            raise ValueError(f"unknown type {self.type}")
        if self.j1 < 0 or self.j2 < 0:
            raise ValueError("scales must be nonnegative")
        if self.type in (TYPE_II, TYPE_IV) and not self.j1 <= self.j2:
            raise ValueError(f"type {self.type} requires j1 <= j2")
        if self.type in (TYPE_III, TYPE_V) and not self.j1 > self.j2:
            raise ValueError(f"type {self.type} requires j1 > j2")
        for k, jj in ((self.k1, self.j1), (self.k2, self.j2)):
            if k % (1 << jj) != 0:
                raise ValueError("offset not on the scale lattice")

    @property
    def family(self) -> str:
        return FAMILY[self.type]

    @property
    def len1(self) -> int:
        return 1 << self.j1

    @property
    def len2(self) -> int:
        return 1 << self.j2

    @property
    def cell_count(self) -> int:
        return self.len1 * self.len2

    def cell_mask(self, n: int) -> np.ndarray:
        """Boolean membership over the n x n cell grid."""
        i1, i2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        if self.family == "axis":
            a, b = i1, i2
        elif self.family == "first":
            a, b = (i1 - i2) % n, i2
        else:
            a, b = i1, (i2 - i1) % n
        return ((a >= self.k1) & (a < self.k1 + self.len1)
                & (b >= self.k2) & (b < self.k2 + self.len2))

    def with_interval(self, which: int, j: int, k: int) -> "DyadicTube":
        """Replace one defining interval, relabeling the type in-family."""
        j1, j2, k1, k2 = self.j1, self.j2, self.k1, self.k2
        if which == 1:
            j1, k1 = j, k
        else:
            j2, k2 = j, k
        fam = self.family
        if fam == "axis":
            typ = TYPE_I
        elif fam == "first":
            typ = TYPE_II if j1 <= j2 else TYPE_III
        else:
            typ = TYPE_IV if j1 <= j2 else TYPE_V
        return DyadicTube(typ, j1, j2, k1, k2)


@dataclass
class OpenSetMask:
    """Rasterized open set on the finest dyadic cells of the grid."""

    spec: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        if self.spec.m != 1:
            raise NotImplementedError("dyadic masks are implemented for m = 1")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.spec.n, self.spec.n):
            raise ConfigurationError("mask shape does not match grid")

    @property
    def n(self) -> int:
        return self.spec.n

    def measure(self) -> float:
        return int(np.count_nonzero(self.mask)) * self.spec.cell_measure

    def is_empty(self) -> bool:
        return not self.mask.any()

    # -- PBM-style persistence ------------------------------------------------

    def save(self, path) -> None:
        path = str(path)
        with open(path, "w") as fh:
            fh.write(f"P1\n{self.n} {self.n}\n")
            for row in self.mask.astype(int):
                fh.write(" ".join(map(str, row)) + "\n")
        with open(path + ".json", "w") as fh:
            json.dump({"m": self.spec.m, "n": self.spec.n, "L": self.spec.period}, fh)

    @classmethod
    def load(cls, path) -> "OpenSetMask":
        path = str(path)
        with open(path + ".json") as fh:
            meta = json.load(fh)
        spec = GridSpec(m=meta["m"], n=meta["n"], period=meta["L"])
        with open(path) as fh:
            tokens = fh.read().split()
        if tokens[0] != "P1":
            raise ConfigurationError("not an ASCII PBM file")
        w, h = int(tokens[1]), int(tokens[2])
        bits = np.array(tokens[3:3 + w * h], dtype=int).reshape(h, w)
        return cls(spec, bits.astype(bool))


def _shear_view(mask: np.ndarray, family: str) -> np.ndarray:
    """Reindex so every tube of the family becomes an axis-aligned box."""
    n = mask.shape[0]
    if family == "axis":
        return mask
    idx = np.arange(n)
    if family == "first":
        # rows indexed by d = x1 - x2, columns by x2
        return mask[(idx[:, None] + idx[None, :]) % n, idx[None, :]]
    # rows indexed by x1, columns by d = x2 - x1
    return mask[idx[:, None], (idx[None, :] + idx[:, None]) % n]


def _unshear_view(arr: np.ndarray, family: str) -> np.ndarray:
    n = arr.shape[0]
    if family == "axis":
        return arr
    idx = np.arange(n)
    if family == "first":
        return arr[(idx[:, None] - idx[None, :]) % n, idx[None, :]]
    return arr[idx[:, None], (idx[None, :] - idx[:, None]) % n]


def _integral_image(a: np.ndarray) -> np.ndarray:
    p = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    p[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    return p


def _box_sum(p: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> int:
    return int(p[r1, c1] - p[r0, c1] - p[r1, c0] + p[r0, c0])


def _type_scale_pairs(typ: str, jmax: int):
    for j1 in range(jmax + 1):
        for j2 in range(jmax + 1):
            if typ in (TYPE_II, TYPE_IV) and j1 > j2:
                continue
            if typ in (TYPE_III, TYPE_V) and j1 <= j2:
                continue
            yield j1, j2


def enumerate_scale(j, omega: OpenSetMask) -> list:
    """All dyadic tubes of scale triple j; they tile the grid exactly."""
    n = omega.n
    typ, (p, q) = classify_scale(j)
    if p < 0 or q < 0 or (1 << p) > n or (1 << q) > n:
        raise ConfigurationError(f"scale {j} not resolvable on an {n}-cell grid")
    tubes = []
    for k1 in range(0, n, 1 << p):
        for k2 in range(0, n, 1 << q):
            tubes.append(DyadicTube(typ, p, q, k1, k2))
    return tubes


def _contained(sheared_integral, t: DyadicTube) -> bool:
    full = _box_sum(sheared_integral, t.k1, t.k1 + t.len1, t.k2, t.k2 + t.len2)
    return full == t.cell_count


def maximal_tubes(omega: OpenSetMask, typ: str, axis: int) -> list:
    """Dyadic tubes of the given type inside Omega, maximal in one direction.

    A tube qualifies when it is contained in Omega but doubling the
    designated interval (axis 1 = first defining interval, axis 2 = second)
    exits Omega; tubes at the maximal resolvable scale qualify outright.
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    n = omega.n
    if omega.is_empty():
        return []
    jmax = int(math.log2(n))
    sheared = _shear_view(omega.mask, FAMILY[typ]).astype(np.int64)

    def block_full(j1, j2):
        l1, l2 = 1 << j1, 1 << j2
        sums = sheared.reshape(n // l1, l1, n // l2, l2).sum(axis=(1, 3))
        return sums == l1 * l2

    out = []
    for j1, j2 in _type_scale_pairs(typ, jmax):
        contained = block_full(j1, j2)
        jj = (j1, j2)[axis - 1]
        if jj < jmax:
            if axis == 1:
                parent = np.repeat(block_full(j1 + 1, j2), 2, axis=0)
            else:
                parent = np.repeat(block_full(j1, j2 + 1), 2, axis=1)
            qualify = contained & ~parent
        else:
            qualify = contained
        for i1, i2 in np.argwhere(qualify):
            out.append(DyadicTube(typ, j1, j2, int(i1) << j1, int(i2) << j2))
    return out


def family_tube_maximal(omega: OpenSetMask, family: str) -> np.ndarray:
    """max over dyadic tubes of a slant family containing each cell of the
    average of the mask over the tube."""
    n = omega.n
    jmax = int(math.log2(n))
    sheared = _shear_view(omega.mask, family).astype(np.int64)
    best = np.zeros((n, n))
    for j1 in range(jmax + 1):
        for j2 in range(jmax + 1):
            l1, l2 = 1 << j1, 1 << j2
            block = sheared.reshape(n // l1, l1, n // l2, l2).sum(axis=(1, 3))
            avg = block / (l1 * l2)
            np.maximum(best, np.repeat(np.repeat(avg, l1, axis=0), l2, axis=1),
                       out=best)
    return _unshear_view(best, family)


def journe_enlarge(R: DyadicTube, omega: OpenSetMask, which: int = 1,
                   level: float = 0.5, enlarged_set: Optional[np.ndarray] = None
                   ) -> DyadicTube:
    """Widen one defining interval to the largest dyadic ancestor keeping the
    tube inside {M_tube(chi_Omega) > level}.

    enlarged_set lets callers working over many tubes of one family reuse
    that level set."""
    n = omega.n
    jmax = int(math.log2(n))
    if enlarged_set is None:
        enlarged_set = family_tube_maximal(omega, R.family) > level
    P = _integral_image(_shear_view(enlarged_set, R.family))
    j = (R.j1, R.j2)[which - 1]
    k = (R.k1, R.k2)[which - 1]
    best = R
    for jj in range(j + 1, jmax + 1):
        kk = (k >> jj) << jj
        cand = R.with_interval(which, jj, kk)
        if _contained(P, cand):
            best = cand
        else:
            break
    return best


def covering_terms(omega: OpenSetMask, typ: str, maximal_axis: int = 2,
                   level: float = 0.5) -> list:
    """Per maximal tube, (cell count, enlarged-axis length, widened length).

    The level set of the family maximal function and its integral image are
    built once and shared across tubes.
    """
    if maximal_axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if omega.is_empty():
        raise ValueError("empty open set")
    enlarge_axis = 2 if maximal_axis == 1 else 1
    enlarged_set = family_tube_maximal(omega, FAMILY[typ]) > level
    P = _integral_image(_shear_view(enlarged_set, FAMILY[typ]))
    jmax = int(math.log2(omega.n))
    terms = []
    for R in maximal_tubes(omega, typ, maximal_axis):
        j = (R.j1, R.j2)[enlarge_axis - 1]
        k = (R.k1, R.k2)[enlarge_axis - 1]
        jhat = j
        for jj in range(j + 1, jmax + 1):
            cand = R.with_interval(enlarge_axis, jj, (k >> jj) << jj)
            if not _contained(P, cand):
                break
            jhat = jj
        terms.append((R.cell_count, 1 << j, 1 << jhat))
    return terms


def covering_sum(omega: OpenSetMask, typ: str, kappa: float,
                 maximal_axis: int = 2) -> tuple:
    """Journe covering sum over maximal tubes, normalized by |Omega|.

    Tubes maximal in the designated direction get the other interval
    enlarged; returns (sum of |R| (l/l_hat)^kappa, ratio to |Omega|).
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    cell = omega.spec.cell_measure
    total = 0.0
    for cells, ell, ell_hat in covering_terms(omega, typ, maximal_axis):
        total += cells * cell * (ell / ell_hat) ** kappa
    return total, total / omega.measure()


def export_tubes_csv(tubes, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["type", "j1", "j2", "k1", "k2"])
        for t in tubes:
            w.writerow([t.type, t.j1, t.j2, t.k1, t.k2])
