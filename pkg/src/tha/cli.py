"""Scenario runner: binds INI config files to the library operations and
writes deterministic CSV reports plus a human-readable summary.

Exit codes: 0 all must-pass checks hold, 1 a check failed, 2 usage or
config error.  CSV content contains no timestamps, so a fixed config and
seed reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
import time

import numpy as np

from .grid import (
    GridSpec, SpatialField, ConfigurationError, make_grid,
    forward_transform, inverse_transform, lp_norm, save_field, export_csv,
)
from .kernels import (
    ScaleGrid, ScaleTriple, multiplier_lattice, twisted_kernel_physical,
    extend, harmonicity_residual, square_identity_residual,
)
from .geometry import (
    OpenSetMask, containment_check, tube_volume, TubeSpec, enumerate_scale,
    covering_sum, TYPE_I, TYPE_II, TYPE_III, TYPE_IV, TYPE_V,
)
from .operators import (
    ConeSpec, tube_maximal, nontangential_max, area_l2_ratio,
    good_lambda_sweep, separation_check, domination_constant,
    dyadic_domination_check, lp_operator_norm, reproducing_residual,
    llogl_endpoint_sweep, degenerate_mass_fraction,
)

SCENARIOS = ("verify-kernel", "verify-identities", "verify-geometry",
             "maximal-suite", "good-lambda", "separation", "covering",
             "reproducing", "llogl")

GENERATORS = ("bump", "mode", "checkerboard", "spike", "random-bandlimited")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


# ---------------------------------------------------------------------------
# test-function suites


def generate_suite(name: str, seed: int, spec: GridSpec, count: int = 5,
                   avoid_degenerate: bool = False):
    """Deterministic families of test fields on the grid."""
    if name not in GENERATORS:
        raise ConfigurationError(f"unknown generator {name!r}")
    rng = np.random.default_rng(seed)
    n = spec.n
    x1, x2 = spec.coords(0), spec.coords(1)
    out = []
    if name == "bump":
        for _ in range(count):
            c1, c2 = rng.uniform(0, spec.period, 2)
            w = rng.uniform(0.3, 1.0) * spec.period / (2 * np.pi)
            vals = np.exp((np.cos(2 * np.pi * (x1 - c1) / spec.period)
                           + np.cos(2 * np.pi * (x2 - c2) / spec.period) - 2.0)
                          / w ** 2)
            out.append(SpatialField(spec, vals))
    elif name == "mode":
        base = 2 * np.pi / spec.period
        for _ in range(count):
            while True:
                k1, k2 = rng.integers(-n // 4, n // 4 + 1, 2)
                if k1 != 0 and k2 != 0 and k1 + k2 != 0:
                    break
            out.append(SpatialField(
                spec, np.exp(1j * base * (k1 * x1 + k2 * x2))))
    elif name == "checkerboard":
        for _ in range(count):
            block = 1 << int(rng.integers(1, max(2, int(math.log2(n)) - 1)))
            i1, i2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            vals = np.where(((i1 // block) + (i2 // block)) % 2 == 0, 1.0, -1.0)
            out.append(SpatialField(spec, vals))
    elif name == "spike":
        for _ in range(count):
            vals = np.zeros((n, n))
            for _ in range(int(rng.integers(1, 4))):
                i, j = rng.integers(0, n, 2)
                vals[i, j] += float(rng.uniform(10.0, 100.0))
            out.append(SpatialField(spec, vals))
    else:
        kmax = max(2, n // 8)
        idx = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        band = (np.abs(idx[:, None]) <= kmax) & (np.abs(idx[None, :]) <= kmax)
        k1 = np.broadcast_to(idx[:, None], (n, n))
        k2 = np.broadcast_to(idx[None, :], (n, n))
        degenerate = (k1 == 0) | (k2 == 0) | (k1 + k2 == 0)
        for _ in range(count):
            coeffs = np.zeros((n, n), dtype=complex)
            z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            coeffs[band] = z[band]
            if avoid_degenerate:
                coeffs[degenerate] = 0.0
            # the real part keeps the degenerate lines empty: the set is
            # stable under frequency negation
            out.append(SpatialField(spec, np.fft.ifftn(coeffs).real * spec.size))
    return out


# ---------------------------------------------------------------------------
# config plumbing


class ScenarioConfig:
    """Parsed INI config with typed accessors and defaults."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        try:
            self.scenario = parser.get("scenario", "id")
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise ConfigurationError("config must set [scenario] id")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")

    @classmethod
    def load(cls, path: str) -> "ScenarioConfig":
        parser = configparser.ConfigParser()
        try:
            read = parser.read(path)
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse config {path!r}: {exc}")
        if not read:
            raise ConfigurationError(f"cannot read config {path!r}")
        return cls(parser)

    def _get(self, section, key, cast, default):
        try:
            raw = self.parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            return default
        try:
            return cast(raw)
        except ValueError:
            raise ConfigurationError(f"bad value for [{section}] {key}: {raw!r}")

    def grid(self) -> GridSpec:
        m = self._get("grid", "m", int, 1)
        n = self._get("grid", "n", int, 64)
        L = self._get("grid", "L", float, 2 * math.pi)
        if n > 4096:
            raise ConfigurationError(f"n={n} exceeds the desk-scale limit 4096")
        return make_grid(m, n, L)

    def ladder(self) -> ScaleGrid:
        return ScaleGrid(
            self._get("ladder", "r_min", float, 0.02),
            self._get("ladder", "decades", int, 1),
            self._get("ladder", "points_per_decade", int, 8))

    def beta(self) -> float:
        return self._get("sweep", "beta", float, 16.0)

    def lambdas(self):
        lo = self._get("sweep", "lambda_min", float, 1e-3)
        hi = self._get("sweep", "lambda_max", float, 10.0)
        k = self._get("sweep", "lambda_count", int, 24)
        return np.geomspace(lo, hi, k)

    def suite(self, spec: GridSpec, avoid_degenerate=False):
        names = self._get("suite", "generators", str, "bump").split(",")
        seed = self._get("suite", "seed", int, 7)
        count = self._get("suite", "count", int, 5)
        fields = []
        for name in names:
            fields.extend(generate_suite(name.strip(), seed, spec, count,
                                         avoid_degenerate=avoid_degenerate))
        return fields

    def out_dir(self) -> str:
        return self._get("output", "dir", str, "tha_out")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# scenarios; each returns (ok, rows, header, summary_lines)


def _scenario_verify_kernel(cfg: ScenarioConfig):
    spec = cfg.grid()
    r = ScaleTriple(
        cfg._get("kernel", "r1", float, 0.5),
        cfg._get("kernel", "r2", float, 0.5),
        cfg._get("kernel", "r3", float, 0.5))
    t0 = time.perf_counter()
    mult = multiplier_lattice(spec, r)
    spectral = np.fft.ifftn(mult).real / spec.cell_measure
    physical = twisted_kernel_physical(spec, r)
    err = float(np.abs(spectral - physical.values).max()
                / np.abs(physical.values).max())
    dt = time.perf_counter() - t0
    tol = cfg._get("kernel", "tol", float, 1e-3)
    ok = err <= tol
    rows = [[r.r1, r.r2, r.r3, err, tol, int(ok)]]
    lines = [f"multiplier vs quadrature kernel: rel sup err {err:.3e} "
             f"(tol {tol:.1e}) in {dt:.2f}s -> {'pass' if ok else 'FAIL'}"]
    return ok, rows, ["r1", "r2", "r3", "rel_sup_err", "tol", "pass"], lines


def _scenario_verify_identities(cfg: ScenarioConfig):
    spec = cfg.grid()
    suite = cfg.suite(spec, avoid_degenerate=True)
    ladder = cfg.ladder()
    rows, lines, ok = [], [], True

    # mean-zero smooth bump for the finite-difference convergence ratios
    x1, x2 = spec.coords(0), spec.coords(1)
    w = spec.period / (2 * np.pi)
    vals = np.exp((np.cos(2 * np.pi * x1 / spec.period)
                   + np.cos(2 * np.pi * x2 / spec.period) - 2.0) / (0.7 * w) ** 2)
    f = SpatialField(spec, vals - vals.mean())
    r = ScaleTriple(0.4, 0.5, 0.3)
    for j in (1, 2, 3):
        ratios = []
        for res in (harmonicity_residual, square_identity_residual):
            coarse = res(f, r, j, dr=0.02)
            fine = res(f, r, j, dr=0.01)
            ratios.append(coarse / fine)
        good = all(abs(q - 4.0) <= 0.5 for q in ratios)
        ok = ok and good
        rows.append([f"harmonicity_block_{j}", ratios[0], 4.0, 0.5, int(good)])
        rows.append([f"square_identity_block_{j}", ratios[1], 4.0, 0.5, int(good)])
        lines.append(f"block {j}: residual convergence ratios "
                     f"{ratios[0]:.3f}, {ratios[1]:.3f} (want 4 +- 0.5) "
                     f"-> {'pass' if good else 'FAIL'}")

    targets = {frozenset({3}): (0.5, 0.02), frozenset({1, 2}): (0.25, 0.02),
               frozenset({1, 2, 3}): (0.125, 0.03)}
    for blocks, (target, tol) in sorted(targets.items(), key=lambda kv: sorted(kv[0])):
        worst = 0.0
        for f2 in suite:
            ratio = area_l2_ratio(f2, ladder, blocks)
            worst = max(worst, abs(ratio - target) / target)
        good = worst <= tol
        ok = ok and good
        label = "S_" + "".join(str(b) for b in sorted(blocks))
        rows.append([label, worst, target, tol, int(good)])
        lines.append(f"{label}: worst relative deviation {worst:.2e} from "
                     f"{target} (tol {tol}) -> {'pass' if good else 'FAIL'}")
    return ok, rows, ["check", "value", "target", "tol", "pass"], lines


def _scenario_verify_geometry(cfg: ScenarioConfig):
    spec = cfg.grid()
    seed = cfg._get("suite", "seed", int, 7)
    rng = np.random.default_rng(seed)
    rows, lines, ok = [], [], True

    samples = cfg._get("geometry", "containment_samples", int, 2000)
    cases = cfg._get("geometry", "containment_cases", int, 50)
    viol = 0
    for _ in range(cases):
        x = rng.uniform(-1, 1, 2)
        r = np.exp(rng.uniform(-1.5, 0.5, 3))
        rep = containment_check(x, r, samples, rng=rng)
        viol += rep["inner_violations"] + rep["outer_violations"]
    good = viol == 0
    ok = ok and good
    rows.append(["containment_violations", viol, 0, 0, int(good)])
    lines.append(f"containment: {viol} violations over {cases} tubes x "
                 f"{samples} samples -> {'pass' if good else 'FAIL'}")

    worst = 0.0
    mc = cfg._get("geometry", "volume_samples", int, 200000)
    from .geometry import tube_contains, tube_bounding_box
    for _ in range(cfg._get("geometry", "volume_cases", int, 20)):
        r = np.exp(rng.uniform(-1.5, 0.5, 3))
        T = TubeSpec((0.0, 0.0), tuple(r))
        vol = tube_volume(T)
        lo, hi = tube_bounding_box(T)
        pts = rng.uniform(lo, hi, size=(mc, 2))
        hits = sum(tube_contains(T, p) for p in pts)
        est = hits / mc * float(np.prod(hi - lo))
        worst = max(worst, abs(est - vol) / vol)
    good = worst <= 0.01
    ok = ok and good
    rows.append(["volume_worst_rel_err", worst, 0.0, 0.01, int(good)])
    lines.append(f"tube volume vs Monte Carlo: worst rel err {worst:.4f} "
                 f"-> {'pass' if good else 'FAIL'}")

    window = min(spec.n, 64)
    wspec = make_grid(1, window, spec.period)
    om = OpenSetMask(wspec, np.ones((window, window), bool))
    triples = [(2, 0, 3), (0, 5, 2), (1, 1, 0), (0, 0, 0), (3, 2, 1),
               (1, 4, 4), (4, 0, 2), (0, 3, 5), (2, 2, 4), (5, 1, 1),
               (0, 2, 2), (2, 0, 0), (0, 0, 4), (4, 4, 0), (1, 3, 2)]
    bad = 0
    for j in triples:
        cover = np.zeros((window, window), int)
        for t in enumerate_scale(j, om):
            cover += t.cell_mask(window)
        if not (cover == 1).all():
            bad += 1
    good = bad == 0
    ok = ok and good
    rows.append(["tiling_failures", bad, 0, 0, int(good)])
    lines.append(f"dyadic tiling: {bad} failures over {len(triples)} scale "
                 f"triples on a {window}^2 window -> {'pass' if good else 'FAIL'}")
    return ok, rows, ["check", "value", "target", "tol", "pass"], lines


def _scenario_maximal_suite(cfg: ScenarioConfig):
    spec = cfg.grid()
    suite = cfg.suite(spec)
    ladder = cfg.ladder()
    beta = cfg.beta()
    p = cfg._get("sweep", "p", float, 2.0)
    rows, lines = [], []
    for op in ("tube_maximal", "nontangential_max"):
        val = lp_operator_norm(op, p, suite, ladder, beta)
        rows.append([op, p, val])
        lines.append(f"{op}: empirical L^{p:g} norm lower bound {val:.4f} "
                     f"over {len(suite)} fields")
    dom = domination_constant(suite[0], beta, ladder)
    rows.append(["domination_c0", beta, dom["c0"]])
    lines.append(f"pointwise domination constant C0 = {dom['c0']:.4f} at beta={beta:g}")
    dd = dyadic_domination_check(1.0)
    rows.append(["dyadic_domination", dd["argmax_t"], dd["constant"]])
    lines.append(f"dyadic kernel domination constant {dd['constant']:.4f}")
    ok = all(math.isfinite(row[2]) for row in rows)
    return ok, rows, ["check", "parameter", "value"], lines


def _scenario_good_lambda(cfg: ScenarioConfig):
    spec = cfg.grid()
    suite = cfg.suite(spec)
    ladder = cfg.ladder()
    beta = cfg.beta()
    rows, lines = [], []
    worst = 0.0
    for k, f in enumerate(suite):
        scale = float(np.abs(f.values).max())
        lams = sorted(cfg.lambdas() * scale)
        rep = good_lambda_sweep(f, beta, lams, ladder)
        for row in rep.rows:
            rows.append([k, row["lambda"], row["lhs"], row["term1"],
                         row["term2"], row["constant"]])
        worst = max(worst, rep.constant)
        lines.append(f"field {k}: max C_lambda = {rep.constant:.4f}")
    ok = math.isfinite(worst)
    lines.append(f"suite maximum C = {worst:.4f} "
                 f"-> {'finite' if ok else 'DIVERGENT'}")
    return ok, rows, ["field", "lambda", "lhs", "term1", "term2", "constant"], lines


def _scenario_separation(cfg: ScenarioConfig):
    spec = cfg.grid()
    ladder = cfg.ladder()
    beta = cfg.beta()
    q = cfg._get("sweep", "quantile", float, 0.99)
    x1, x2 = spec.coords(0), spec.coords(1)
    w = 0.3 * spec.period / (2 * np.pi)
    vals = np.exp((np.cos(2 * np.pi * (x1 / spec.period - 0.5))
                   + np.cos(2 * np.pi * (x2 / spec.period - 0.5)) - 2.0) / w ** 2)
    f = SpatialField(spec, vals)
    c0 = domination_constant(f, beta, ladder)["c0"]
    U = nontangential_max(f, ConeSpec(beta, ladder)).values
    lam = float(np.quantile(U, q))
    rep = separation_check(f, lam, beta, ladder, c0)
    viol = rep["inner_violations"] + rep["outer_violations"]
    ok = viol == 0 and rep["c1"] < 0.9
    rows = [[lam, beta, c0, rep["min_inner"], rep["c1"],
             rep["inner_cells"], rep["outer_cells"],
             rep["inner_violations"], rep["outer_violations"], int(ok)]]
    lines = [f"lambda={lam:.4f} (quantile {q}), C0={c0:.3f}",
             f"min U_g on the calm tent: {rep['min_inner']:.4f} over "
             f"{rep['inner_cells']} lattice points (want > 0.9)",
             f"max U_g off the good tent: C1 = {rep['c1']:.4f} over "
             f"{rep['outer_cells']} lattice points (want < 0.9)",
             f"violations: {viol} -> {'pass' if ok else 'FAIL'}"]
    return ok, rows, ["lambda", "beta", "c0", "min_inner", "c1",
                      "inner_cells", "outer_cells", "inner_violations",
                      "outer_violations", "pass"], lines


def _scenario_covering(cfg: ScenarioConfig):
    spec = cfg.grid()
    seed = cfg._get("suite", "seed", int, 7)
    masks = cfg._get("covering", "masks", int, 20)
    kappas = [float(v) for v in
              cfg._get("covering", "kappas", str, "1,2").split(",")]
    density = cfg._get("covering", "density", float, 0.5)
    rng = np.random.default_rng(seed)
    rows, lines = [], []
    ok = True
    for typ in (TYPE_I, TYPE_II, TYPE_III, TYPE_IV, TYPE_V):
        for kappa in kappas:
            worst = 0.0
            for _ in range(masks):
                m = rng.random((spec.n, spec.n)) < density
                if not m.any():
                    continue
                _, ratio = covering_sum(OpenSetMask(spec, m), typ, kappa)
                worst = max(worst, ratio)
            rows.append([typ, kappa, worst])
            lines.append(f"type {typ}, kappa={kappa:g}: covering constant {worst:.4f}")
            ok = ok and math.isfinite(worst)
    return ok, rows, ["type", "kappa", "constant"], lines


def _scenario_reproducing(cfg: ScenarioConfig):
    spec = cfg.grid()
    ladder = ScaleGrid(
        cfg._get("ladder", "r_min", float, 1e-4),
        cfg._get("ladder", "decades", int, 6),
        cfg._get("ladder", "points_per_decade", int, 64))
    suite = cfg.suite(spec, avoid_degenerate=True)
    tol = cfg._get("sweep", "tol", float, 1e-2)
    rows, lines, ok = [], [], True
    for k, f in enumerate(suite):
        res = reproducing_residual(f, ladder)
        res2 = reproducing_residual(f, ladder.refine())
        halves = res2 <= 0.5 * res + 1e-15
        good = res <= tol and halves
        ok = ok and good
        rows.append([k, res, res2, tol, int(good)])
        lines.append(f"field {k}: residual {res:.3e} -> {res2:.3e} on "
                     f"refinement (tol {tol:.0e}) -> {'pass' if good else 'FAIL'}")
    return ok, rows, ["field", "residual", "residual_refined", "tol", "pass"], lines


def _scenario_llogl(cfg: ScenarioConfig):
    spec = cfg.grid()
    ladder = cfg.ladder()
    seed = cfg._get("suite", "seed", int, 7)
    suite = generate_suite("spike", seed, spec,
                           cfg._get("suite", "count", int, 5))
    rows, lines = [], []
    worst = 0.0
    for k, f in enumerate(suite):
        scale = float(np.abs(f.values).max())
        rep = llogl_endpoint_sweep(f, cfg.lambdas() * scale, ladder)
        for row in rep["rows"]:
            rows.append([k, row["lambda"], row["lhs"], row["rhs"], row["ratio"]])
        worst = max(worst, rep["max_ratio"])
        lines.append(f"spike field {k}: max ratio {rep['max_ratio']:.4f}")
    ok = math.isfinite(worst)
    lines.append(f"suite maximum ratio = {worst:.4f}")
    return ok, rows, ["field", "lambda", "lhs", "rhs", "ratio"], lines


_DISPATCH = {
    "verify-kernel": _scenario_verify_kernel,
    "verify-identities": _scenario_verify_identities,
    "verify-geometry": _scenario_verify_geometry,
    "maximal-suite": _scenario_maximal_suite,
    "good-lambda": _scenario_good_lambda,
    "separation": _scenario_separation,
    "covering": _scenario_covering,
    "reproducing": _scenario_reproducing,
    "llogl": _scenario_llogl,
}


def run(cfg: ScenarioConfig, out_dir=None) -> int:
    out_dir = out_dir or cfg.out_dir()
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    ok, rows, header, lines = _DISPATCH[cfg.scenario](cfg)
    dt = time.perf_counter() - t0
    base = cfg.scenario.replace("-", "_")
    _write_csv(os.path.join(out_dir, base + ".csv"), header, rows)
    with open(os.path.join(out_dir, base + "_summary.txt"), "w") as fh:
        fh.write(f"scenario: {cfg.scenario}\n")
        fh.write(f"finished: {time.strftime('%Y-%m-%dT%H:%M:%S')}  "
                 f"({dt:.2f}s)\n")
        for line in lines:
            fh.write(line + "\n")
        fh.write(("PASS" if ok else "FAIL") + "\n")
    for line in lines:
        print(line)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# entry points


def _cmd_selftest(args) -> int:
    """Run the must-pass subset on small built-in configurations."""
    out_dir = args.out or "selftest_out"
    status = 0
    small = {
        "verify-kernel": {"scenario": {"id": "verify-kernel"},
                          "grid": {"m": "1", "n": "128", "L": "16"}},
        "verify-identities": {"scenario": {"id": "verify-identities"},
                              "grid": {"n": "64"},
                              "ladder": {"r_min": "1e-3", "decades": "5",
                                         "points_per_decade": "32"},
                              "suite": {"generators": "random-bandlimited",
                                        "seed": "7", "count": "3"}},
        "verify-geometry": {"scenario": {"id": "verify-geometry"},
                            "grid": {"n": "64"},
                            "geometry": {"containment_cases": "10",
                                         "containment_samples": "500",
                                         "volume_cases": "5",
                                         "volume_samples": "50000"}},
        "separation": {"scenario": {"id": "separation"},
                       "grid": {"n": "64"},
                       "ladder": {"r_min": "0.005", "decades": "1",
                                  "points_per_decade": "8"}},
        "reproducing": {"scenario": {"id": "reproducing"},
                        "grid": {"n": "64"},
                        "suite": {"generators": "random-bandlimited",
                                  "seed": "7", "count": "3"}},
    }
    for name, raw in small.items():
        parser = configparser.ConfigParser()
        parser.read_dict(raw)
        cfg = ScenarioConfig(parser)
        print(f"== {name} ==")
        status = max(status, run(cfg, out_dir=out_dir))
    return status


def _cmd_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    return run(cfg, out_dir=args.out)


def _cmd_dump_kernel(args) -> int:
    try:
        r = [float(v) for v in args.r.split(",")]
        if len(r) != 3:
            raise ValueError
    except ValueError:
        raise ConfigurationError(f"--r expects three comma-separated scales, got {args.r!r}")
    spec = make_grid(args.m, args.n, args.L)
    triple = ScaleTriple(*r)
    if args.mode == "multiplier":
        vals = np.fft.ifftn(multiplier_lattice(spec, triple)).real / spec.cell_measure
        field = SpatialField(spec, vals)
    else:
        field = twisted_kernel_physical(spec, triple)
    if args.out.endswith(".csv"):
        export_csv(field, args.out)
    else:
        save_field(field, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    top = argparse.ArgumentParser(prog="tha")
    top.add_argument("--threads", type=int,
                     default=int(os.environ.get("THA_THREADS", "0")))
    sub = top.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)

    p_dump = sub.add_parser("dump-kernel", help="write the twisted kernel at one scale")
    p_dump.add_argument("--r", required=True)
    p_dump.add_argument("--m", type=int, default=1)
    p_dump.add_argument("--n", type=int, default=128)
    p_dump.add_argument("--L", type=float, default=2 * math.pi)
    p_dump.add_argument("--mode", choices=("multiplier", "physical"),
                        default="physical")
    p_dump.add_argument("--out", default="kernel.bin")

    p_self = sub.add_parser("selftest", help="run the must-pass subset")
    p_self.add_argument("--out", default=None)

    try:
        args = top.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "dump-kernel":
            return _cmd_dump_kernel(args)
        return _cmd_selftest(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
