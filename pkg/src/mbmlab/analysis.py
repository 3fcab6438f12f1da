"""Statistical checks on synthesized paths and truncated lattice sums."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from math import log
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import ConfigurationError
from .hurst import HurstFunction
from .noise import NoiseLattice
from .psi import PsiTable
from .synthesis import SynthesisConfig, g_jk, synthesize_mbm, synthesize_z

DEFAULT_LAGS = tuple(2.0 ** -p for p in range(4, 10))   # 2^-4 down to 2^-9
EXPONENT_CAP = 1.0
MIN_REPLICATES = 100


# ---------------------------------------------------------------------------
# fBm law


@lru_cache(maxsize=256)
def fbm_constant(theta: float) -> float:
    """``c(theta) = int |exp(i xi) - 1|**2 |xi|**(-2 theta - 1) d xi`` over the real line."""
    theta = float(theta)
    if not 0.0 < theta < 1.0:
        raise ConfigurationError(f"theta must lie in (0, 1), got {theta}")
    # |e^{i xi} - 1|^2 = 2 (1 - cos xi); the integrand is even
    # on [0, 1] write 2 (1 - cos x) = x**2 sinc(x / 2 pi)**2 and let quad handle x**(1 - 2 theta)
    head, _ = integrate.quad(lambda x: np.sinc(x / (2.0 * np.pi)) ** 2, 0.0, 1.0,
                             weight="alg", wvar=(1.0 - 2.0 * theta, 0.0), epsabs=1e-14, epsrel=1e-13)
    osc, _ = integrate.quad(lambda x: x ** (-2.0 * theta - 1.0), 1.0, np.inf, weight="cos", wvar=1.0)
    tail = 2.0 / (2.0 * theta) - 2.0 * osc
    return 2.0 * (head + tail)


def fbm_covariance(s, t, theta: float):
    """``c(theta)/2 (|s|**2theta + |t|**2theta - |s - t|**2theta)``."""
    c = fbm_constant(theta)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h = 2.0 * theta
    out = 0.5 * c * (np.abs(s) ** h + np.abs(t) ** h - np.abs(s - t) ** h)
    if out.ndim == 0:
        return float(out)
    return out


def oracle_fbm(theta: float, t_grid, replicates: int, seed: int = 0) -> np.ndarray:
    """fBm paths on a uniform grid by circulant embedding of the increment covariance.

    The grid must start at a nonnegative multiple of its step; paths are
    scaled so that ``Var B(t) = c(theta) |t|**(2 theta)``.  Returns an array
    of shape ``(replicates, len(t_grid))``.
    """
    if not 0.0 < theta < 1.0:
        raise ConfigurationError(f"theta must lie in (0, 1), got {theta}")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 2:
        raise ConfigurationError("need at least two grid points")
    dt = (t_grid[-1] - t_grid[0]) / (t_grid.size - 1)
    if not np.allclose(np.diff(t_grid), dt, rtol=1e-9, atol=0.0):
        raise ConfigurationError("oracle_fbm needs a uniform grid")
    offset = t_grid[0] / dt
    i0 = int(round(offset))
    if i0 < 0 or abs(offset - i0) > 1e-9:
        raise ConfigurationError("grid start must be a nonnegative multiple of the step")
    n = i0 + t_grid.size - 1          # increments from 0 to the last grid point
    m = 1 << int(np.ceil(np.log2(max(n, 2))))
    h = 2.0 * theta
    lag = np.arange(m + 1, dtype=float)
    gamma = 0.5 * fbm_constant(theta) * dt ** h * (np.abs(lag + 1) ** h - 2 * lag ** h + np.abs(lag - 1) ** h)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise RuntimeError("circulant embedding is not nonnegative definite; increase the embedding size")
    scale = np.sqrt(np.clip(lam, 0.0, None) / row.size)
    rng = np.random.default_rng(seed)
    pairs = (replicates + 1) // 2
    w = rng.standard_normal((pairs, row.size)) + 1j * rng.standard_normal((pairs, row.size))
    y = np.fft.fft(scale * w, axis=1)[:, :n]
    incr = np.concatenate([y.real, y.imag])[:replicates]
    paths = np.concatenate([np.zeros((replicates, 1)), np.cumsum(incr, axis=1)], axis=1)
    return paths[:, i0:]


# ---------------------------------------------------------------------------
# regularity estimators


@dataclass
class VariogramReport:
    t: float
    lags: np.ndarray
    msq_increment: np.ndarray
    slope: float
    intercept: float
    exponent: float
    cap: float = EXPONENT_CAP


@dataclass
class SmoothnessReport:
    lags: np.ndarray
    mean_sup_increment: np.ndarray
    slope: float
    exponent: float
    zero_variance: bool
    cap: float = EXPONENT_CAP


def parse_lags(text: str) -> tuple:
    """``"2^-9..2^-4"`` -> ``(2**-4, ..., 2**-9)``; a comma list of numbers is also accepted."""
    text = text.strip()
    if ".." in text:
        lo, hi = (part.strip() for part in text.split(".."))
        p_lo, p_hi = _dyadic_power(lo), _dyadic_power(hi)
        lo_p, hi_p = sorted((p_lo, p_hi))
        return tuple(2.0 ** p for p in range(hi_p, lo_p - 1, -1))
    values = sorted((float(v) for v in text.split(",") if v.strip()), reverse=True)
    if not values or min(values) <= 0:
        raise ConfigurationError(f"bad lag list {text!r}")
    return tuple(values)


def _dyadic_power(token: str) -> int:
    if not token.startswith("2^"):
        raise ConfigurationError(f"dyadic lag must look like 2^-9, got {token!r}")
    try:
        return int(token[2:])
    except ValueError:
        raise ConfigurationError(f"dyadic lag must look like 2^-9, got {token!r}") from None


def _grid_index(t_grid: np.ndarray, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    idx = np.clip(np.searchsorted(t_grid, t), 0, t_grid.size - 1)
    left = np.clip(idx - 1, 0, t_grid.size - 1)
    idx = np.where(np.abs(t_grid[left] - t) < np.abs(t_grid[idx] - t), left, idx)
    tol = 1e-9 * max(1.0, float(np.abs(t_grid).max()))
    return np.where(np.abs(t_grid[idx] - t) <= tol, idx, -1)


def _fit(log_h, log_v):
    slope, intercept = np.polyfit(log_h, log_v, 1)
    return float(slope), float(intercept)


def estimate_pointwise_holder(paths, t_grid, t: float, lags=DEFAULT_LAGS) -> VariogramReport:
    """Exponent from the log-log slope of ``E (P(t + h) - P(t))**2`` against ``h``.

    Second moments are averaged across replicates; the exponent is half the
    slope, capped at 1.
    """
    paths = np.asarray(paths, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if paths.shape[0] < MIN_REPLICATES:
        raise ConfigurationError(f"need at least {MIN_REPLICATES} replicates, got {paths.shape[0]}")
    i0 = _grid_index(t_grid, t)[0]
    if i0 < 0:
        raise ConfigurationError(f"t = {t} is not a grid point")
    lags = np.sort(np.asarray(lags, dtype=float))[::-1]
    idx = _grid_index(t_grid, t + lags)
    usable = idx >= 0
    if np.count_nonzero(usable) < 3:
        raise ConfigurationError("fewer than 3 usable lags (t + lag must be grid points)")
    lags = lags[usable]
    msq = np.mean((paths[:, idx[usable]] - paths[:, [i0]]) ** 2, axis=0)
    if np.any(msq <= 0):
        raise ConfigurationError("zero mean-squared increment; the paths are constant near t")
    slope, intercept = _fit(np.log(lags), np.log(msq))
    return VariogramReport(float(t), lags, msq, slope, intercept, min(slope / 2.0, EXPONENT_CAP))


def smoothness_exponent(paths, t_grid, window=None, lags=DEFAULT_LAGS) -> SmoothnessReport:
    """Uniform regularity exponent from local sup-increments.

    For each lag ``h`` and anchor ``t0`` in ``window`` the largest of
    ``|P(t0 +- m h / M) - P(t0)|`` for ``m = 1..M`` is averaged over anchors and
    replicates; ``M = h_min / dt`` is the same at every lag, so each lag sees the
    same stencil shape and the log-log slope is not biased by the stencil.
    The exponent is that slope, capped at 1.
    """
    paths = np.asarray(paths, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if paths.shape[0] < MIN_REPLICATES:
        raise ConfigurationError(f"need at least {MIN_REPLICATES} replicates, got {paths.shape[0]}")
    lags = np.sort(np.asarray(lags, dtype=float))[::-1]
    dt = float(np.min(np.diff(t_grid)))
    ratio = lags.min() / dt
    M = int(round(ratio))
    if M < 1 or abs(ratio - M) > 1e-9 or np.any(np.abs(lags / (M * dt) - np.round(lags / (M * dt))) > 1e-9):
        raise ConfigurationError("lags must be integer multiples of the grid step")
    lo, hi = window if window is not None else (t_grid[0], t_grid[-1])
    reach = lags.max()
    anchors = np.nonzero((t_grid >= lo + reach - 1e-12) & (t_grid <= hi - reach + 1e-12))[0]
    if anchors.size == 0:
        raise ConfigurationError("window too short for the largest lag")
    means = np.empty(lags.size)
    for i, h in enumerate(lags):
        step = int(round(h / (M * dt)))
        best = np.zeros((paths.shape[0], anchors.size))
        base = paths[:, anchors]
        for m in range(1, M + 1):
            for sign in (1, -1):
                best = np.maximum(best, np.abs(paths[:, anchors + sign * m * step] - base))
        means[i] = best.mean()
    if np.any(means == 0.0):
        return SmoothnessReport(lags, means, np.nan, EXPONENT_CAP, True)
    slope, _ = _fit(np.log(lags), np.log(means))
    return SmoothnessReport(lags, means, slope, min(slope, EXPONENT_CAP), False)


def mean_variogram(paths, t_grid, lags=DEFAULT_LAGS):
    """Mean-squared increment per lag, averaged over every grid anchor and replicate.

    Suited to processes with stationary increments such as fBm.  Returns
    ``(lags, msq, slope)`` with the log-log slope of ``msq`` against the lag.
    """
    paths = np.asarray(paths, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    lags = np.sort(np.asarray(lags, dtype=float))[::-1]
    dt = (t_grid[-1] - t_grid[0]) / (t_grid.size - 1)
    steps = np.round(lags / dt).astype(int)
    if np.any(steps < 1) or np.any(np.abs(steps * dt - lags) > 1e-9 * lags):
        raise ConfigurationError("lags must be integer multiples of the grid step")
    if steps.max() >= t_grid.size:
        raise ConfigurationError("largest lag exceeds the grid")
    msq = np.array([np.mean((paths[:, s:] - paths[:, :-s]) ** 2) for s in steps])
    slope, _ = _fit(np.log(lags), np.log(msq))
    return lags, msq, slope


# ---------------------------------------------------------------------------
# tangent process


@dataclass
class TangentReport:
    t: float
    theta: float
    rhos: np.ndarray
    u_grid: np.ndarray
    errors: np.ndarray
    process: str = "X"
    covariances: list = field(default_factory=list)


def tangent_convergence(H: HurstFunction, t: float, rho_list, u_grid, cfg: SynthesisConfig,
                        lattice: NoiseLattice, table: PsiTable, process: str = "X",
                        domain=None) -> TangentReport:
    """Frobenius-relative error of the rescaled-increment covariance against fBm(H(t)), per rho.

    The increments ``(P(t + rho u) - P(t)) / rho**H(t)`` are centered in law, so
    the empirical covariance is the uncentered second-moment matrix.
    """
    rhos = np.asarray(rho_list, dtype=float)
    u = np.asarray(u_grid, dtype=float)
    if np.any(u == 0):
        raise ConfigurationError("u_grid must not contain 0")
    if np.any(rhos <= 0):
        raise ConfigurationError("rho values must be positive")
    lo, hi = domain if domain is not None else (cfg.t_grid[0], cfg.t_grid[-1])
    reach = rhos.max() * np.abs(u).max()
    if t - reach < lo or t + reach > hi:
        raise ConfigurationError(f"t + rho u leaves the domain [{lo}, {hi}]")
    synth = {"X": synthesize_mbm, "Z": synthesize_z}[process]
    h = float(H(t))
    target = fbm_covariance(u[:, None], u[None, :], h)
    errors = np.empty(rhos.size)
    covs = []
    for i, rho in enumerate(rhos):
        points = np.sort(np.concatenate([[t], t + rho * u]))
        bundle = synth(H, cfg.with_grid(points), lattice, table)
        P = bundle[process]
        i0 = int(np.searchsorted(points, t))
        cols = np.searchsorted(points, t + rho * u)
        incr = (P[:, cols] - P[:, [i0]]) / rho ** h
        cov = incr.T @ incr / incr.shape[0]
        covs.append(cov)
        errors[i] = np.linalg.norm(cov - target) / np.linalg.norm(target)
    return TangentReport(float(t), h, rhos, u, errors, process, covs)


def non_increasing_within(errors, tolerance: float) -> bool:
    """True when no error exceeds an earlier one by more than ``tolerance``."""
    errors = np.asarray(errors, dtype=float)
    running = np.minimum.accumulate(errors)
    return bool(np.all(errors <= running + tolerance))


# ---------------------------------------------------------------------------
# truncated lattice sums


def _terms(j: int, centers, k_window: int) -> np.ndarray:
    ks = [np.arange(-k_window, k_window + 1)]
    for c in np.atleast_1d(centers):
        ks.append(np.arange(int(np.ceil(c - k_window)), int(np.floor(c + k_window)) + 1))
    return np.unique(np.concatenate(ks))


def truncated_A_n(t: float, theta: float, n: int, j_max: int, k_window: int, table: PsiTable,
                  far_tail: bool = False) -> float:
    """``sum_{j=0}^{j_max} sum_k |d^n g_jk(t, theta)| sqrt(log(3 + j + |k|))``.

    ``k`` runs over ``|k - 2**j t| <= k_window`` together with ``|k| <= k_window``.
    """
    table.check_order(n)
    total = 0.0
    for j in range(j_max + 1):
        k = _terms(j, np.ldexp(t, j), k_window)
        g = g_jk(t, theta, j, k, n, table, far_tail=far_tail)
        total += float(np.sum(np.abs(g) * np.sqrt(np.log(3.0 + j + np.abs(k)))))
    return total


def truncated_G_n(t0: float, t1: float, theta: float, n: int, H: HurstFunction, j_max: int,
                  k_window: int, table: PsiTable, far_tail: bool = False) -> float:
    """Truncated sum of ``|H(k/2**j) - H(t0)|**n sqrt(log(3 + j + |k|)) |d^n g_jk(t1) - d^n g_jk(t0)|``.

    ``k`` runs over the windows around ``2**j t0`` and ``2**j t1`` plus ``|k| <= k_window``.
    """
    if n < 1:
        raise ConfigurationError("G_n needs n >= 1")
    table.check_order(n)
    h0 = float(H(t0))
    total = 0.0
    for j in range(j_max + 1):
        k = _terms(j, [np.ldexp(t0, j), np.ldexp(t1, j)], k_window)
        weight = np.abs(np.asarray(H(np.ldexp(k.astype(float), -j))) - h0) ** n
        weight = weight * np.sqrt(np.log(3.0 + j + np.abs(k)))
        d1 = g_jk(t1, theta, j, k, n, table, far_tail=far_tail)
        d0 = g_jk(t0, theta, j, k, n, table, far_tail=far_tail)
        total += float(np.sum(weight * np.abs(d1 - d0)))
    return total


def loglog_slope(x, y) -> float:
    slope, _ = _fit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)))
    return slope


# ---------------------------------------------------------------------------
# reports


def _write_rows(path, header, rows, preamble=()):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else f"{v:.17g}" for v in row])
    return path


def write_variogram_csv(report: VariogramReport, path, preamble=()):
    return _write_rows(path, ["lag", "msq_increment"], zip(report.lags, report.msq_increment), preamble)


def write_tangent_csv(report: TangentReport, path, preamble=()):
    return _write_rows(path, ["rho", "frobenius_rel_error"], zip(report.rhos, report.errors), preamble)


def write_diagnostics_csv(j_values, values, path, preamble=()):
    return _write_rows(path, ["j_max", "value"], zip((int(j) for j in j_values), values), preamble)
