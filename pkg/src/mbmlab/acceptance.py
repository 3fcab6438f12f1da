"""End-to-end acceptance checks with deterministic report files.

Each check writes one CSV under the report directory and returns a
:class:`CheckResult`.  ``validate`` runs the whole suite twice and compares
the reports byte for byte.
"""
from __future__ import annotations

import csv
import filecmp
import logging
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from . import __version__
from .analysis import (DEFAULT_LAGS, estimate_pointwise_holder, fbm_constant, fbm_covariance, loglog_slope,
                       mean_variogram, non_increasing_within, oracle_fbm, smoothness_exponent,
                       tangent_convergence, truncated_A_n, truncated_G_n)
from .hurst import HurstFunction
from .noise import NoiseLattice, envelope_exceedances
from .psi import cached_psi_table
from .synthesis import SynthesisConfig, synthesize_field, synthesize_residual
from .theory import exponent_bound, region_raster, smoothing_condition, smoothing_threshold
from .wavelet import MeyerWindow, dyadic_energy

log = logging.getLogger("mbmlab.acceptance")

REPLICATES = 2000
FIELD_THETAS = (0.3, 0.5, 0.7)
COV_PAIRS = ((0.25, 0.25), (0.25, 0.5), (0.25, 0.75), (0.25, 1.0), (0.5, 0.5),
             (0.5, 0.75), (0.5, 1.0), (0.75, 0.75), (0.75, 1.0), (1.0, 1.0))
HOLDER_TIMES = (0.1, 0.25, 0.4, 0.6, 0.9)
TANGENT_RHOS = tuple(2.0 ** -p for p in range(4, 9))
TANGENT_U = (-1.0, -0.5, 0.5, 1.0)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:02d} {self.name}: {self.summary}"


def _g(v) -> str:
    return f"{v:.17g}"


def _s(v) -> str:
    return f"{v:.6g}"


class Suite:
    """Shared state for one pass over the checks (tables, lattice, cached paths)."""

    def __init__(self, out_dir, seed: int = 0, cache_dir=None, replicates: int = REPLICATES):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.cache_dir = cache_dir
        self.replicates = replicates
        self.lattice = NoiseLattice(seed)
        self._table = None
        self._fields = {}

    @property
    def table(self):
        if self._table is None:
            self._table = cached_psi_table(self.cache_dir)
        return self._table

    def config(self, t_grid=None) -> SynthesisConfig:
        cfg = SynthesisConfig(replicates=self.replicates, seed=self.seed)
        return cfg if t_grid is None else cfg.with_grid(t_grid)

    def field(self, theta):
        if theta not in self._fields:
            self._fields[theta] = synthesize_field(theta, self.config(), self.lattice, self.table)
        return self._fields[theta]

    def write(self, name, header, rows):
        path = self.out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# mbmlab {__version__} acceptance report {name}\n# seed = {self.seed}\n")
            fh.write(f"# replicates = {self.replicates}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, (int, str)) else _g(v) for v in row])
        return path

    # checks --------------------------------------------------------------

    def partition_of_unity(self):
        xi = np.logspace(-3, 3, 1000)
        err = np.abs(dyadic_energy(MeyerWindow(), xi) - 1.0)
        self.write("01_partition_of_unity", ["xi", "abs_error"], zip(xi, err))
        worst = float(err.max())
        return worst < 1e-10, f"max |sum chi^2 - 1| = {_s(worst)} (< 1e-10)"

    def kernel_symmetry_and_decay(self):
        table = self.table
        wide = cached_psi_table(self.cache_dir, x_max=2 * table.x_max, max_dtheta_order=0)
        rows, ok, parts = [], True, []
        for theta in (0.2, 0.5, 0.8):
            x = table.x_grid
            x = x[x <= table.x_max - 1.0]
            asym = float(np.max(np.abs(table.value(x, theta) - table.value(-1.0 - x, theta))))
            sups = []
            for t in (table, wide):
                xg = t.x_grid
                sups.append(float(np.max((2.0 + np.abs(xg)) ** 4 * np.abs(t.value(xg, theta)))))
            ratio = sups[1] / sups[0]
            good = asym < 1e-10 and 0.5 < ratio < 2.0 and np.isfinite(sups).all()
            ok &= good
            rows.append((theta, asym, sups[0], sups[1], ratio))
            parts.append(f"theta={theta}: asym={_s(asym)} sup_ratio={_s(ratio)}")
        self.write("02_kernel_symmetry_and_decay", ["theta", "max_asymmetry", "sup_weighted_xmax",
                                                    "sup_weighted_2xmax", "ratio"], rows)
        return ok, "; ".join(parts)

    def fbm_covariance_reproduction(self):
        rows, ok, worst = [], True, 0.0
        for theta in FIELD_THETAS:
            bundle = self.field(theta)
            B, t = bundle["B"], bundle.t
            c = fbm_constant(theta)
            for s_, t_ in COV_PAIRS:
                i, j = np.searchsorted(t, s_), np.searchsorted(t, t_)
                emp = float(np.cov(B[:, i], B[:, j])[0, 1])
                ref = fbm_covariance(s_, t_, theta)
                rel = abs(emp - ref) / abs(ref)
                used = abs(ref) >= 0.1 * c
                rows.append((theta, s_, t_, emp, ref, rel, int(used)))
                if used:
                    worst = max(worst, rel)
                    ok &= rel < 0.05
        B = self.field(0.5)["B"]
        var1 = float(np.var(B[:, -1], ddof=1))
        rel_var = abs(var1 - 2 * np.pi) / (2 * np.pi)
        ok &= rel_var < 0.05
        rows.append((0.5, 1.0, 1.0, var1, 2 * np.pi, rel_var, 1))
        self.write("03_fbm_covariance", ["theta", "s", "t", "empirical", "target", "rel_error", "used"], rows)
        return ok, f"worst rel error = {_s(worst)} (< 0.05); Var B(1,0.5) = {_s(var1)} vs 2pi ({_s(rel_var)})"

    def oracle_cross_validation(self):
        rows, ok, parts = [], True, []
        for theta in FIELD_THETAS:
            bundle = self.field(theta)
            oracle = oracle_fbm(theta, bundle.t, self.replicates, seed=self.seed)
            _, _, s_w = mean_variogram(bundle["B"], bundle.t)
            _, _, s_o = mean_variogram(oracle, bundle.t)
            ks = stats.ks_2samp(bundle["B"][:, -1], oracle[:, -1])
            good = abs(s_w - s_o) <= 0.03 and ks.pvalue >= 0.01
            ok &= good
            rows.append((theta, s_w, s_o, abs(s_w - s_o), float(ks.statistic), float(ks.pvalue)))
            parts.append(f"theta={theta}: dslope={_s(abs(s_w - s_o))} ks_p={_s(ks.pvalue)}")
        self.write("04_oracle_cross_validation", ["theta", "slope_wavelet", "slope_oracle", "slope_diff",
                                                  "ks_statistic", "ks_pvalue"], rows)
        return ok, "; ".join(parts)

    def constant_hurst_identity(self):
        bundle = synthesize_residual(HurstFunction.constant(0.6), self.config(), self.lattice, self.table)
        gap = float(np.max(np.abs(bundle["Z"] - bundle["X"])))
        self.write("05_constant_hurst_identity", ["max_abs_z_minus_x"], [(gap,)])
        return gap < 1e-12, f"max |Z - X| = {_s(gap)} (< 1e-12)"

    def pointwise_exponents(self):
        H = HurstFunction.sine(0.5, 0.3)
        grid = np.unique(np.concatenate([[t] + [t + h for h in DEFAULT_LAGS] for t in HOLDER_TIMES]))
        bundle = synthesize_residual(H, self.config(grid), self.lattice, self.table)
        rows, ok, worst = [], True, {"X": 0.0, "Z": 0.0}
        for t in HOLDER_TIMES:
            target = float(H(t))
            for proc in ("X", "Z"):
                est = estimate_pointwise_holder(bundle[proc], grid, t).exponent
                err = abs(est - target)
                worst[proc] = max(worst[proc], err)
                ok &= err <= 0.07
                rows.append((proc, t, target, est, err))
        self.write("06_pointwise_exponents", ["process", "t", "H", "estimate", "abs_error"], rows)
        return ok, f"worst |alpha - H|: X {_s(worst['X'])}, Z {_s(worst['Z'])} (<= 0.07)"

    def residual_smoothness(self):
        a, b = 0.45, 0.55
        H = HurstFunction.sine((a + b) / 2, (b - a) / 2)
        bundle = synthesize_residual(H, self.config(), self.lattice, self.table)
        rR = smoothness_exponent(bundle["R"], bundle.t)
        rX = smoothness_exponent(bundle["X"], bundle.t)
        d = exponent_bound(a, b, beta=1.0, ell=4).d
        ok = (not rR.zero_variance) and rR.exponent >= b + 0.05 and rR.exponent > rX.exponent \
            and rR.exponent >= d - 0.05
        rows = [("R", h, m) for h, m in zip(rR.lags, rR.mean_sup_increment)]
        rows += [("X", h, m) for h, m in zip(rX.lags, rX.mean_sup_increment)]
        rows += [("R_exponent", 0.0, rR.exponent), ("X_exponent", 0.0, rX.exponent), ("d_bound", 0.0, d)]
        self.write("07_residual_smoothness", ["series", "lag", "value"], rows)
        return ok, (f"exponent R = {_s(rR.exponent)}, X = {_s(rX.exponent)}, need >= {_s(b + 0.05)} "
                    f"and >= d - 0.05 = {_s(d - 0.05)}")

    def tangent_process(self):
        H = HurstFunction.sine(0.5, 0.3)
        tol = 2.0 * np.sqrt(2.0 / self.replicates)
        rows, ok, parts = [], True, []
        for proc in ("X", "Z"):
            rep = tangent_convergence(H, 0.4, TANGENT_RHOS, TANGENT_U, self.config(), self.lattice, self.table,
                                      process=proc, domain=(0.0, 1.0))
            mono = non_increasing_within(rep.errors, tol)
            final = float(rep.errors[-1])
            ok &= mono and final < 0.10
            rows += [(proc, r, e) for r, e in zip(rep.rhos, rep.errors)]
            parts.append(f"{proc}: errors {' '.join(_s(e) for e in rep.errors)} (monotone={mono})")
        self.write("08_tangent_process", ["process", "rho", "frobenius_rel_error"], rows)
        return ok, "; ".join(parts) + f"; noise tolerance {_s(tol)}, final < 0.1"

    def theory_consistency(self):
        centers = (np.arange(50) + 0.5) / 50
        mismatches = []
        for a in centers:
            for b in centers:
                if a <= b and exponent_bound(a, b, ell=64).feasible != smoothing_condition(a, b):
                    mismatches.append((a, b))
        res = 101
        ra, rb, feas = region_raster(res)
        row = feas[int(np.argmin(np.abs(ra - 0.5)))]
        last_in = rb[row & (rb >= 0.5)].max()
        first_out = rb[(~row) & (rb >= 0.5)].min()
        root = optimize.bisect(lambda b: (1 - b) - 0.5 * (1 - 0.5 / b), 0.5, 0.999, xtol=1e-14)
        flip = 0.5 * (last_in + first_out)
        flip_ok = abs(flip - root) <= 1.0 / res and abs(root - smoothing_threshold(0.5)) < 1e-10
        diag_ok = bool(np.all(np.diag(feas)))
        widths = feas.sum(axis=0)
        top = widths[rb >= 0.75]
        shrink_ok = bool(np.all(np.diff(top) <= 0) and widths[-1] < 0.5 * widths.max())
        ok = not mismatches and flip_ok and diag_ok and shrink_ok
        rows = [("mismatch", a, b) for a, b in mismatches]
        rows += [("flip_a_0.5", flip, root), ("diagonal_feasible", int(diag_ok), 0.0),
                 ("shrinks_near_b_1", int(shrink_ok), 0.0)]
        self.write("09_theory_consistency", ["item", "value1", "value2"], rows)
        return ok, (f"{len(mismatches)} grid mismatches at ell=64; flip at b={_s(flip)} vs {_s(root)}; "
                    f"diagonal={diag_ok}; shrinking={shrink_ok}")

    def series_diagnostics(self):
        table = self.table
        rows, ok, parts = [], True, []
        for n in (0, 1, 2):
            a20 = truncated_A_n(0.3, 0.5, n, 20, 50, table)
            a24 = truncated_A_n(0.3, 0.5, n, 24, 50, table)
            rel = abs(a24 - a20) / abs(a24)
            ok &= rel < 1e-3
            rows.append((f"A_{n}", a20, a24, rel))
            parts.append(f"A_{n} change {_s(rel)}")
        H = HurstFunction.sine(0.5, 0.05)
        hs = np.array(TANGENT_RHOS)
        G = [truncated_G_n(0.3, 0.3 + h, 0.5, 1, H, 20, 50, table) for h in hs]
        slope = loglog_slope(hs, G)
        d1 = exponent_bound(0.45, 0.55, beta=1.0, ell=4).d
        ok &= slope >= d1 - 0.05
        rows += [(f"G_1(h={h:g})", h, g, 0.0) for h, g in zip(hs, G)]
        rows.append(("G_1_slope", slope, d1, 0.0))
        self.write("10_series_diagnostics", ["item", "value1", "value2", "value3"], rows)
        parts.append(f"G_1 slope {_s(slope)} vs d_1 - 0.05 = {_s(d1 - 0.05)}")
        return ok, "; ".join(parts) + " (A_n change < 1e-3)"

    def noise_envelope(self):
        count, worst = envelope_exceedances(self.lattice, 4096, c=6.0)
        self.write("11_noise_envelope", ["exceedances", "max_ratio"], [(count, worst)])
        return count == 0, f"{count} exceedances; max |eps|/sqrt(log(3+|j|+|k|)) = {_s(worst)} (< 6)"


CHECKS = (
    (1, "partition_of_unity", Suite.partition_of_unity),
    (2, "kernel_symmetry_and_decay", Suite.kernel_symmetry_and_decay),
    (3, "fbm_covariance_reproduction", Suite.fbm_covariance_reproduction),
    (4, "oracle_cross_validation", Suite.oracle_cross_validation),
    (5, "constant_hurst_identity", Suite.constant_hurst_identity),
    (6, "pointwise_exponents", Suite.pointwise_exponents),
    (7, "residual_smoothness", Suite.residual_smoothness),
    (8, "tangent_process", Suite.tangent_process),
    (9, "theory_consistency", Suite.theory_consistency),
    (10, "series_diagnostics", Suite.series_diagnostics),
    (11, "noise_envelope", Suite.noise_envelope),
)


def run_checks(out_dir, seed: int = 0, cache_dir=None, only=None, replicates: int = REPLICATES):
    """Run checks 1-11 once, writing one report per check; returns the results."""
    suite = Suite(out_dir, seed, cache_dir, replicates)
    results = []
    for number, name, fn in CHECKS:
        if only is not None and number not in only:
            continue
        t0 = time.perf_counter()
        passed, summary = fn(suite)
        res = CheckResult(number, name, bool(passed), summary, time.perf_counter() - t0)
        log.info("%s (%.1f s)", res.line(), res.seconds)
        results.append(res)
    return results


def compare_reports(dir_a, dir_b) -> list[str]:
    """Names of report files that differ (or exist only on one side)."""
    a = {p.name for p in Path(dir_a).glob("*.csv")}
    b = {p.name for p in Path(dir_b).glob("*.csv")}
    diff = sorted(a ^ b)
    diff += sorted(n for n in a & b if not filecmp.cmp(Path(dir_a) / n, Path(dir_b) / n, shallow=False))
    return diff


def write_summary(results, path, seed):
    with open(path, "w", newline="") as fh:
        fh.write(f"# mbmlab {__version__} acceptance summary\n# seed = {seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "name", "passed", "summary"])
        for r in results:
            w.writerow([r.number, r.name, int(r.passed), r.summary])


def validate(out_dir, seed: int = 0, cache_dir=None, only=None, replicates: int = REPLICATES):
    """Run the suite, rerun it in a scratch directory and compare reports (check 12)."""
    out_dir = Path(out_dir)
    results = run_checks(out_dir, seed, cache_dir, only, replicates)
    scratch = Path(tempfile.mkdtemp(prefix="mbmlab-rerun-"))
    try:
        t0 = time.perf_counter()
        run_checks(scratch, seed, cache_dir, only, replicates)
        diff = compare_reports(out_dir, scratch)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    n_files = len(list(out_dir.glob("[0-9]*.csv")))
    summary = f"{n_files} report files compared, {len(diff)} differ" + (f": {', '.join(diff)}" if diff else "")
    det = CheckResult(12, "determinism", not diff, summary, time.perf_counter() - t0)
    log.info("%s (%.1f s)", det.line(), det.seconds)
    results.append(det)
    write_summary(results, out_dir / "summary.csv", seed)
    return results
