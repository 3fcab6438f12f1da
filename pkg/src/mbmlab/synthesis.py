"""Truncated wavelet-series synthesis of fBm, mBm (X), the dyadic variant Z and R = Z - X.

All processes are sums over ``(j, k)`` of ``eps[j, k] * g`` with

    g = 2**(-j theta) * (Psi(2**j t - k, theta) - Psi(-k, theta))

where ``theta`` is a constant (field B), ``H(t)`` (process X) or
``H(k / 2**j)`` (process Z).  For a finite grid of times the sum is a
product of a noise block (replicates x terms) with a design matrix
(terms x times).

The raw kernel normalization gives ``Var B(t, theta) = 2 pi c(theta) |t|**(2 theta)``;
synthesized paths are scaled by ``FIELD_NORMALIZATION`` so that their
covariance is ``c(theta)/2 (|s|**2theta + |t|**2theta - |s-t|**2theta)``.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb, log
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, CoverageError
from .hurst import HurstFunction
from .noise import NoiseLattice
from .psi import PsiTable

FIELD_NORMALIZATION = 1.0 / np.sqrt(2.0 * np.pi)
_REPLICATE_BLOCK = 250


@dataclass
class SynthesisConfig:
    j_min: int = -8
    j_max: int = 12
    k_window: int = 50
    t_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 1025))
    replicates: int = 2000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float).ravel()
        if not (self.j_min < 0 <= self.j_max):
            raise ConfigurationError(f"need j_min < 0 <= j_max, got j_min={self.j_min}, j_max={self.j_max}")
        if self.k_window < 8:
            raise ConfigurationError(f"k_window must be >= 8, got {self.k_window}")
        if self.t_grid.size == 0:
            raise ConfigurationError("t_grid is empty")
        if np.any(np.diff(self.t_grid) <= 0):
            raise ConfigurationError("t_grid must be strictly increasing")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")

    def with_grid(self, t_grid) -> "SynthesisConfig":
        return SynthesisConfig(self.j_min, self.j_max, self.k_window, t_grid,
                               self.replicates, self.seed, self.workers)


@dataclass
class PathBundle:
    """Sampled paths, one row per replicate and one column per grid time."""

    t: np.ndarray
    paths: dict
    config: SynthesisConfig
    seed: int
    label: str = ""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.paths[name]

    def __contains__(self, name: str) -> bool:
        return name in self.paths


def g_jk(t, theta, j, k, n: int, table: PsiTable, far_tail: bool = True):
    """``d^n/dtheta^n`` of ``2**(-j theta) (Psi(2**j t - k, theta) - Psi(-k, theta))``.

    Uses the Leibniz expansion over powers of ``-j log 2``; arguments broadcast.
    With ``far_tail=False`` kernel values beyond the table's ``x_max`` are
    taken as zero instead of being integrated directly.
    """
    table.check_order(n)
    t, theta, j, k = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(theta, dtype=float),
                                         np.asarray(j), np.asarray(k))
    j = j.astype(np.int64)
    jf = j.astype(float)
    x = np.ldexp(t, j) - k
    scale = np.exp2(-jf * theta)
    evaluate = table.value if far_tail else table.value_local
    out = np.zeros(t.shape)
    for p in range(n + 1):
        psi_t = evaluate(x, theta, n - p)
        psi_0 = evaluate(-k.astype(float), theta, n - p)
        # 0**0 = 1 at j = 0
        factor = comb(n, p) * (-jf * log(2.0)) ** p
        out = out + factor * scale * (psi_t - psi_0)
    if out.ndim == 0:
        return float(out)
    return out


# ----------------------------------------------------------------------------
# term enumeration


@dataclass
class _Scale:
    j: int
    k: np.ndarray       # sorted term indices for this scale
    rows: np.ndarray    # term row of each (term, time) pair
    cols: np.ndarray    # time column of each pair


def _scale_terms(j: int, t: np.ndarray, k_window: int) -> _Scale:
    centers = np.ldexp(t, j)
    lo = np.ceil(centers - k_window).astype(np.int64)
    hi = np.floor(centers + k_window).astype(np.int64)
    kmin = min(int(lo.min()), -k_window)
    kmax = max(int(hi.max()), k_window)
    mark = np.zeros(kmax - kmin + 1, dtype=bool)
    mark[-k_window - kmin:k_window - kmin + 1] = True
    # windows are sorted because t is increasing; mark them with a difference array
    diff = np.zeros(mark.size + 1, dtype=np.int64)
    np.add.at(diff, lo - kmin, 1)
    np.add.at(diff, hi - kmin + 1, -1)
    mark |= np.cumsum(diff[:-1]) > 0
    k = np.nonzero(mark)[0].astype(np.int64) + kmin

    w_lo = np.searchsorted(k, lo, side="left")
    w_hi = np.searchsorted(k, hi, side="right")
    a_lo = np.searchsorted(k, -k_window, side="left")
    a_hi = np.searchsorted(k, k_window, side="right")
    # union of the window range and the anchor range, per column
    u1_lo, u1_hi = np.minimum(w_lo, a_lo), np.maximum(w_hi, a_hi)
    overlap = (w_lo <= a_hi) & (a_lo <= w_hi)
    seg_lo = [np.where(overlap, u1_lo, w_lo), np.where(overlap, 0, a_lo)]
    seg_hi = [np.where(overlap, u1_hi, w_hi), np.where(overlap, 0, a_hi)]
    rows, cols = [], []
    for s_lo, s_hi in zip(seg_lo, seg_hi):
        counts = s_hi - s_lo
        c = np.repeat(np.arange(t.size), counts)
        start = np.repeat(s_lo - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        rows.append(start + np.arange(c.size))
        cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    order = np.lexsort((rows, cols))
    return _Scale(j, k, rows[order], cols[order])


def _enumerate(cfg: SynthesisConfig) -> list[_Scale]:
    return [_scale_terms(j, cfg.t_grid, cfg.k_window) for j in range(cfg.j_min, cfg.j_max + 1)]


def _design(scales: list[_Scale], t: np.ndarray, theta_of, table: PsiTable) -> np.ndarray:
    """Dense design matrix (terms x times) for a theta rule ``theta_of(j, k, t) -> array``."""
    n_terms = sum(s.k.size for s in scales)
    G = np.zeros((n_terms, t.size))
    offset = 0
    for s in scales:
        kk = s.k[s.rows]
        tt = t[s.cols]
        theta = table.check_theta(theta_of(s.j, kk, tt))
        x = np.ldexp(tt, s.j) - kk
        psi_t = table.value_local(x, theta, 0)
        psi_0 = table.value_local(-kk.astype(float), theta, 0)
        G[offset + s.rows, s.cols] = FIELD_NORMALIZATION * np.exp2(-s.j * theta) * (psi_t - psi_0)
        offset += s.k.size
    return G


def _theta_rule(kind: str, theta: float | None = None, H: HurstFunction | None = None):
    if kind == "B":
        return lambda j, k, t: np.full(t.shape, float(theta))
    if kind == "X":
        return lambda j, k, t: H(t)
    if kind == "Z":
        return lambda j, k, t: H(np.ldexp(k.astype(float), -j))
    raise ValueError(kind)


def _check_coverage(H: HurstFunction, table: PsiTable) -> None:
    if H.a < table.theta_lo - 1e-12 or H.b > table.theta_hi + 1e-12:
        raise CoverageError(f"Hurst range [{H.a}, {H.b}] not covered by table range "
                            f"[{table.theta_lo}, {table.theta_hi}]")


def _run(cfg: SynthesisConfig, lattice: NoiseLattice, table: PsiTable, rules: dict,
         components: bool) -> dict:
    scales = _enumerate(cfg)
    J = np.concatenate([np.full(s.k.size, s.j, dtype=np.int64) for s in scales])
    K = np.concatenate([s.k for s in scales])
    n_low = int(np.count_nonzero(J < 0))
    designs = {name: _design(scales, cfg.t_grid, rule, table) for name, rule in rules.items()}
    reps = cfg.replicates
    out = {name: np.empty((reps, cfg.t_grid.size)) for name in designs}
    if components:
        for name in designs:
            out[name + "_low"] = np.empty((reps, cfg.t_grid.size))
            out[name + "_high"] = np.empty((reps, cfg.t_grid.size))

    def block(start):
        stop = min(start + _REPLICATE_BLOCK, reps)
        E = lattice.matrix(J, K, np.arange(start, stop))
        for name, G in designs.items():
            low = E[:, :n_low] @ G[:n_low]
            high = E[:, n_low:] @ G[n_low:]
            out[name][start:stop] = low + high
            if components:
                out[name + "_low"][start:stop] = low
                out[name + "_high"][start:stop] = high

    starts = range(0, reps, _REPLICATE_BLOCK)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(block, starts))
    else:
        for start in starts:
            block(start)
    return out


def synthesize_field(theta: float, cfg: SynthesisConfig, lattice: NoiseLattice, table: PsiTable,
                     components: bool = False) -> PathBundle:
    """Paths of ``B(., theta)``, an fBm of Hurst index ``theta``."""
    table.check_theta(theta)
    paths = _run(cfg, lattice, table, {"B": _theta_rule("B", theta=theta)}, components)
    return PathBundle(cfg.t_grid, paths, cfg, lattice.seed, f"field(theta={theta!r})")


def synthesize_mbm(H: HurstFunction, cfg: SynthesisConfig, lattice: NoiseLattice, table: PsiTable,
                   components: bool = False) -> PathBundle:
    """Paths of mBm ``X(t) = B(t, H(t))``."""
    _check_coverage(H, table)
    paths = _run(cfg, lattice, table, {"X": _theta_rule("X", H=H)}, components)
    return PathBundle(cfg.t_grid, paths, cfg, lattice.seed, H.describe())


def synthesize_z(H: HurstFunction, cfg: SynthesisConfig, lattice: NoiseLattice, table: PsiTable,
                 components: bool = False) -> PathBundle:
    """Paths of Z, where term ``(j, k)`` uses ``H(k / 2**j)``."""
    _check_coverage(H, table)
    paths = _run(cfg, lattice, table, {"Z": _theta_rule("Z", H=H)}, components)
    return PathBundle(cfg.t_grid, paths, cfg, lattice.seed, H.describe())


def synthesize_residual(H: HurstFunction, cfg: SynthesisConfig, lattice: NoiseLattice, table: PsiTable,
                        components: bool = False) -> PathBundle:
    """X, Z and ``R = Z - X`` from one draw of the lattice."""
    _check_coverage(H, table)
    paths = _run(cfg, lattice, table, {"X": _theta_rule("X", H=H), "Z": _theta_rule("Z", H=H)}, components)
    paths["R"] = paths["Z"] - paths["X"]
    return PathBundle(cfg.t_grid, paths, cfg, lattice.seed, H.describe())


def truncated_covariance(cfg: SynthesisConfig, table: PsiTable, theta: float | None = None,
                         H: HurstFunction | None = None, process: str = "X") -> np.ndarray:
    """Exact covariance matrix (times x times) of the truncated series, without sampling.

    Pass ``theta`` for the field B, or ``H`` with ``process`` "X" or "Z".
    """
    if theta is not None:
        table.check_theta(theta)
        rule = _theta_rule("B", theta=theta)
    else:
        _check_coverage(H, table)
        rule = _theta_rule(process, H=H)
    G = _design(_enumerate(cfg), cfg.t_grid, rule, table)
    return G.T @ G


def dyadic_thetas(H: HurstFunction, j, k):
    """Per-term Hurst value ``H(k / 2**j)`` used by Z."""
    return H(np.ldexp(np.asarray(k, dtype=float), -np.asarray(j)))


PATH_COLUMNS = ("X", "Z", "R")
COMPONENT_COLUMNS = ("X_low", "X_high", "Z_low", "Z_high")


def write_paths_csv(bundle: PathBundle, path: str | Path, preamble=()) -> Path:
    """Write ``replicate,t,X,Z,R[,X_low,X_high,Z_low,Z_high]`` rows with 17 significant digits."""
    cols = [c for c in PATH_COLUMNS if c in bundle]
    cols += [c for c in COMPONENT_COLUMNS if c in bundle]
    path = Path(path)
    reps, n_t = bundle[cols[0]].shape
    with open(path, "w", newline="") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["replicate", "t", *cols])
        for r in range(reps):
            block = np.column_stack([bundle.t] + [bundle[c][r] for c in cols])
            for i in range(n_t):
                writer.writerow([r] + [f"{v:.17g}" for v in block[i]])
    return path
