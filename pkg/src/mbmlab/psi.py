"""The kernel ``Psi(x, theta)`` and a precomputed interpolation table for it.

``Psi(x, theta) = int exp(i x xi) psi_hat(xi) / |xi|**(theta + 1/2) dxi``.
With the Meyer phase convention this is the real cosine integral

    2 * int_{2pi/3}^{8pi/3} cos((x + 1/2) xi) chi(xi) xi**(-theta - 1/2) dxi

and its ``n``-th theta derivative carries an extra ``(-log xi)**n``.  The
integrand is smooth on each flank of ``chi``, so composite Gauss-Legendre
panels split at the knots converge geometrically.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, CoverageError
from .wavelet import SUPPORT_HI, SUPPORT_LO, SUPPORT_MID, MeyerWindow, meyer_window

PANEL_ORDER = 16
OSCILLATION_SCALE = 40.0  # |x| beyond which quadrature grows linearly with |x|
X_DERIVS = 3  # value, d/dx, d2/dx2 stored per node for quintic Hermite interpolation
_CHUNK_ELEMS = 4_000_000
_THETA_BLOCK = 256


@lru_cache(maxsize=64)
def _flank_rule(quadrature_points: int, smoothness_order: int):
    """Composite Gauss-Legendre nodes/weights on the support, with ``2 * chi`` folded in."""
    n_panels = max(3, -(-quadrature_points // PANEL_ORDER))
    n_panels += (-n_panels) % 3
    gx, gw = np.polynomial.legendre.leggauss(PANEL_ORDER)
    xs, ws = [], []
    for lo, hi, count in ((SUPPORT_LO, SUPPORT_MID, n_panels // 3),
                          (SUPPORT_MID, SUPPORT_HI, 2 * n_panels // 3)):
        edges = np.linspace(lo, hi, count + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs.append((mid[:, None] + half[:, None] * gx).ravel())
        ws.append((half[:, None] * gw).ravel())
    xi = np.concatenate(xs)
    w = np.concatenate(ws)
    w = 2.0 * w * meyer_window(MeyerWindow(smoothness_order), xi)
    xi.setflags(write=False)
    w.setflags(write=False)
    return xi, w


def _points_for(x_abs: float, quadrature_points: int) -> int:
    factor = max(1, int(np.ceil(x_abs / OSCILLATION_SCALE)))
    return quadrature_points * factor


def _quadrature(x, thetas, orders, m, quadrature_points, smoothness_order):
    """``d^m/dx^m d^n/dtheta^n Psi`` for every x, every theta in ``thetas`` and n in ``orders``.

    Returns an array of shape ``(len(orders), x.size, len(thetas))``.
    """
    x = np.asarray(x, dtype=float).ravel()
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    out = np.empty((len(orders), x.size, thetas.size))
    if x.size == 0:
        return out
    shift = np.abs(x + 0.5)
    factors = np.maximum(1, np.ceil(shift / OSCILLATION_SCALE)).astype(int)
    for f in np.unique(factors):
        rows = np.nonzero(factors == f)[0]
        xi, w = _flank_rule(quadrature_points * int(f), smoothness_order)
        logxi = np.log(xi)
        cols = []
        for n in orders:
            base = w * (-logxi) ** n * xi ** m
            cols.append(base[:, None] * xi[:, None] ** (-thetas[None, :] - 0.5))
        weights = np.concatenate(cols, axis=1)
        step = max(1, _CHUNK_ELEMS // xi.size)
        for start in range(0, rows.size, step):
            r = rows[start:start + step]
            phase = np.multiply.outer(x[r] + 0.5, xi)
            # d^m/dx^m cos(u) = cos(u + m pi/2)
            if m % 2 == 0:
                kern = np.cos(phase)
            else:
                kern = np.sin(phase)
            if m % 4 in (1, 2):
                kern = -kern
            res = kern @ weights
            out[:, r, :] = res.reshape(r.size, len(orders), thetas.size).transpose(1, 0, 2)
    return out


def psi_direct(x, theta, n: int = 0, m: int = 0, quadrature_points: int = 2048,
               window: MeyerWindow | None = None):
    """Evaluate ``d^m/dx^m d^n/dtheta^n Psi(x, theta)`` by direct quadrature.

    ``x`` and ``theta`` broadcast against each other.
    """
    window = window or MeyerWindow()
    x, theta = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(theta, dtype=float))
    out = np.empty(x.shape)
    flat_x = x.ravel()
    flat_t = theta.ravel()
    res = out.reshape(-1)
    uth, inv = np.unique(flat_t, return_inverse=True)
    for i, th in enumerate(uth):
        sel = inv == i
        res[sel] = _quadrature(flat_x[sel], [th], [n], m, quadrature_points,
                               window.smoothness_order)[0, :, 0]
    if out.ndim == 0:
        return float(out)
    return out


def chebyshev_lobatto_nodes(lo: float, hi: float, count: int) -> np.ndarray:
    k = np.arange(count)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * k / (count - 1))


def barycentric_weights(nodes: np.ndarray, points) -> np.ndarray:
    """Interpolation weights (rows sum to one) on Chebyshev-Lobatto ``nodes``."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    count = nodes.size
    bw = (-1.0) ** np.arange(count)
    bw[0] *= 0.5
    bw[-1] *= 0.5
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = bw / diff
    hit = exact.any(axis=1)
    terms[hit] = exact[hit].astype(float)
    return terms / terms.sum(axis=1, keepdims=True)


def _hermite5(s, h, f0, d0, s0, f1, d1, s1):
    """Quintic Hermite interpolant on a cell of width h, local coordinate s in [0, 1]."""
    t = 1.0 - s
    s2, s3 = s * s, s * s * s
    t2, t3 = t * t, t * t * t
    h0s = 1.0 - s3 * (10.0 - 15.0 * s + 6.0 * s2)
    h0t = 1.0 - t3 * (10.0 - 15.0 * t + 6.0 * t2)
    h1s = s - s3 * (6.0 - 8.0 * s + 3.0 * s2)
    h1t = t - t3 * (6.0 - 8.0 * t + 3.0 * t2)
    h2s = 0.5 * s2 * (1.0 - 3.0 * s + 3.0 * s2 - s3)
    h2t = 0.5 * t2 * (1.0 - 3.0 * t + 3.0 * t2 - t3)
    return (f0 * h0s + h * d0 * h1s + h * h * s0 * h2s
            + f1 * h0t - h * d1 * h1t + h * h * s1 * h2t)


@dataclass
class PsiTable:
    """Tabulated ``d^m/dx^m d^n/dtheta^n Psi`` on a uniform x grid and Chebyshev theta nodes.

    ``values[n, m, i, q]`` holds the derivative of order ``(m, n)`` at
    ``x_grid[i]`` and ``theta_nodes[q]``.  Interpolation is quintic Hermite
    in x (using the stored x-derivatives) and barycentric Chebyshev in theta.
    Points with ``|x| > x_max`` fall back to direct quadrature.
    """

    window: MeyerWindow
    x_max: float
    x_step: float
    theta_lo: float
    theta_hi: float
    n_theta_nodes: int
    max_dtheta_order: int
    quadrature_points: int
    values: np.ndarray = field(repr=False)

    @property
    def n_x(self) -> int:
        return self.values.shape[2]

    @property
    def x_grid(self) -> np.ndarray:
        return -self.x_max + self.x_step * np.arange(self.n_x)

    @property
    def theta_nodes(self) -> np.ndarray:
        return chebyshev_lobatto_nodes(self.theta_lo, self.theta_hi, self.n_theta_nodes)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        tol = 1e-12
        if theta.size and (theta.min() < self.theta_lo - tol or theta.max() > self.theta_hi + tol):
            raise CoverageError(
                f"theta range [{theta.min():.6g}, {theta.max():.6g}] outside table range "
                f"[{self.theta_lo:.6g}, {self.theta_hi:.6g}]")
        return np.clip(theta, self.theta_lo, self.theta_hi)

    def check_order(self, n: int) -> None:
        if n < 0 or n > self.max_dtheta_order:
            raise CoverageError(f"theta-derivative order {n} not in table (max {self.max_dtheta_order})")

    def value(self, x, theta, n: int = 0):
        """Interpolated ``d^n/dtheta^n Psi(x, theta)``; x and theta broadcast."""
        self.check_order(n)
        x, theta = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(theta, dtype=float))
        shape = x.shape
        xf = x.ravel()
        tf = self.check_theta(theta.ravel())
        out = np.empty(xf.size)
        pos = (xf + self.x_max) / self.x_step
        inside = (pos >= 0.0) & (pos <= self.n_x - 1)
        if not inside.all():
            far = ~inside
            out[far] = psi_direct(xf[far], tf[far], n=n, quadrature_points=self.quadrature_points,
                                  window=self.window)
        if inside.any():
            out[inside] = self._interpolate(pos[inside], tf[inside], n)
        if len(shape) == 0:
            return float(out[0])
        return out.reshape(shape)

    def value_local(self, x, theta, n: int = 0):
        """Like :meth:`value`, but points with ``|x| > x_max`` return 0.

        At the default ``x_max = 256`` the dropped tail is below 1e-10 in size,
        while direct quadrature there costs time proportional to ``|x|``.
        """
        x, theta = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(theta, dtype=float))
        near = np.abs(x) <= self.x_max
        out = np.zeros(x.shape)
        if near.any():
            out[near] = self.value(x[near], theta[near], n)
        if out.ndim == 0:
            return float(out)
        return out

    def _interpolate(self, pos, theta, n):
        i0 = np.minimum(np.floor(pos).astype(np.int64), self.n_x - 2)
        s = pos - i0
        lo = int(i0.min())
        hi = int(i0.max()) + 2
        sub = self.values[n, :, lo:hi, :]
        rows = hi - lo
        flat = np.ascontiguousarray(sub).reshape(X_DERIVS * rows, self.n_theta_nodes)
        uth, inv = np.unique(theta, return_inverse=True)
        order = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[order], np.arange(uth.size + 1))
        weights = barycentric_weights(self.theta_nodes, uth)
        out = np.empty(pos.size)
        for c0 in range(0, uth.size, _THETA_BLOCK):
            c1 = min(c0 + _THETA_BLOCK, uth.size)
            red = flat @ weights[c0:c1].T
            idx = order[bounds[c0]:bounds[c1]]
            col = inv[idx] - c0
            a = i0[idx] - lo
            f = [red[d * rows + a, col] for d in range(X_DERIVS)]
            g = [red[d * rows + a + 1, col] for d in range(X_DERIVS)]
            out[idx] = _hermite5(s[idx], self.x_step, *f, *g)
        return out

    def header(self) -> dict:
        return {
            "x_max": float(self.x_max),
            "x_step": float(self.x_step),
            "theta_lo": float(self.theta_lo),
            "theta_hi": float(self.theta_hi),
            "n_theta_nodes": int(self.n_theta_nodes),
            "max_dtheta_order": int(self.max_dtheta_order),
            "quadrature_points": int(self.quadrature_points),
            "smoothness_order": int(self.window.smoothness_order),
        }


def psi_value(table: PsiTable, x, theta, n: int = 0):
    """``d^n/dtheta^n Psi(x, theta)`` through ``table`` (direct quadrature off-table)."""
    return table.value(x, theta, n)


def _validate_grid(x_max, x_step, theta_lo, theta_hi, n_theta_nodes, max_dtheta_order, quadrature_points):
    if not (0.0 < theta_lo < theta_hi < 1.0):
        raise ConfigurationError(f"need 0 < theta_lo < theta_hi < 1, got [{theta_lo}, {theta_hi}]")
    if not (x_step > 0.0 and x_max > 0.0):
        raise ConfigurationError("x_max and x_step must be positive")
    cells = x_max / x_step
    if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
        raise ConfigurationError("x_max must be an integer multiple of x_step")
    if n_theta_nodes < 4:
        raise ConfigurationError("need at least 4 theta nodes")
    if max_dtheta_order < 0:
        raise ConfigurationError("max_dtheta_order must be >= 0")
    if quadrature_points < 3 * PANEL_ORDER:
        raise ConfigurationError(f"quadrature_points must be >= {3 * PANEL_ORDER}")
    return int(round(cells))


def build_psi_table(window: MeyerWindow | None = None, x_max: float = 256.0, x_step: float = 1.0 / 32,
                    theta_lo: float = 0.05, theta_hi: float = 0.95, n_theta_nodes: int = 32,
                    max_dtheta_order: int = 2, quadrature_points: int = 2048,
                    cache_path: str | Path | None = None) -> PsiTable:
    """Tabulate ``Psi`` and its theta-derivatives up to ``max_dtheta_order``.

    If ``cache_path`` names an existing table file whose header matches the
    requested parameters it is loaded instead; otherwise the table is built
    and written there.
    """
    window = window or MeyerWindow()
    cells = _validate_grid(x_max, x_step, theta_lo, theta_hi, n_theta_nodes,
                           max_dtheta_order, quadrature_points)
    if cache_path is not None:
        cached = load_psi_table(cache_path)
        if cached is not None:
            probe = PsiTable(window, x_max, x_step, theta_lo, theta_hi, n_theta_nodes,
                             max_dtheta_order, quadrature_points, np.empty((0, 0, 0, 0)))
            if cached.header() == probe.header():
                return cached
    xg = -x_max + x_step * np.arange(2 * cells + 1)
    nodes = chebyshev_lobatto_nodes(theta_lo, theta_hi, n_theta_nodes)
    orders = list(range(max_dtheta_order + 1))
    values = np.empty((len(orders), X_DERIVS, xg.size, n_theta_nodes))
    for m in range(X_DERIVS):
        values[:, m] = _quadrature(xg, nodes, orders, m, quadrature_points, window.smoothness_order)
    table = PsiTable(window, float(x_max), float(x_step), float(theta_lo), float(theta_hi),
                     int(n_theta_nodes), int(max_dtheta_order), int(quadrature_points), values)
    if cache_path is not None:
        save_psi_table(table, cache_path)
    return table


def localization_constant(table: PsiTable, ell: int, n: int = 0) -> float:
    """Empirical ``sup (2 + |x|)**ell |d^n/dtheta^n Psi(x, theta)|`` over the table."""
    if ell < 2:
        raise ConfigurationError(f"ell must be >= 2, got {ell}")
    table.check_order(n)
    weight = (2.0 + np.abs(table.x_grid)) ** ell
    return float(np.max(weight[:, None] * np.abs(table.values[n, 0])))


# Binary cache: magic, 4 doubles, 5 int64, then float64 little-endian data.
# The first block is values[n, 0, x, theta] in (n, x, theta) row-major order;
# the x-derivative blocks m = 1, 2 follow in the same layout.
_MAGIC = b"MBMPSI01"
_HEADER = struct.Struct("<8s4d5q")


def save_psi_table(table: PsiTable, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h = table.header()
    head = _HEADER.pack(_MAGIC, h["x_max"], h["x_step"], h["theta_lo"], h["theta_hi"],
                        h["n_theta_nodes"], h["max_dtheta_order"], h["quadrature_points"],
                        h["smoothness_order"], X_DERIVS)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(head)
        for m in range(X_DERIVS):
            fh.write(np.ascontiguousarray(table.values[:, m]).astype("<f8").tobytes())
    tmp.replace(path)


def load_psi_table(path: str | Path) -> PsiTable | None:
    """Read a cached table; ``None`` if missing or malformed."""
    path = Path(path)
    if not path.is_file():
        return None
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        return None
    magic, x_max, x_step, lo, hi, nodes, n_max, qp, order, x_derivs = _HEADER.unpack_from(raw)
    if magic != _MAGIC or x_derivs != X_DERIVS:
        return None
    n_x = 2 * int(round(x_max / x_step)) + 1
    count = (n_max + 1) * n_x * nodes
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != X_DERIVS * count:
        return None
    blocks = data.reshape(X_DERIVS, n_max + 1, n_x, nodes)
    values = np.ascontiguousarray(blocks.transpose(1, 0, 2, 3)).astype(float)
    return PsiTable(MeyerWindow(int(order)), x_max, x_step, lo, hi, int(nodes), int(n_max), int(qp), values)


def default_cache_dir() -> Path:
    """``$MBMLAB_CACHE`` if set, else ``~/.cache/mbmlab``."""
    env = os.environ.get("MBMLAB_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "mbmlab"


def cached_psi_table(cache_dir: str | Path | None = None, **kwargs) -> PsiTable:
    """Build or load a table whose cache file name encodes its parameters."""
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    window = kwargs.get("window") or MeyerWindow()
    keys = ("x_max", "x_step", "theta_lo", "theta_hi", "n_theta_nodes", "max_dtheta_order", "quadrature_points")
    defaults = dict(x_max=256.0, x_step=1.0 / 32, theta_lo=0.05, theta_hi=0.95, n_theta_nodes=32,
                    max_dtheta_order=2, quadrature_points=2048)
    params = {k: kwargs.get(k, defaults[k]) for k in keys}
    tag = "_".join(f"{params[k]!r}" for k in keys) + f"_r{window.smoothness_order}"
    cache_dir.mkdir(parents=True, exist_ok=True)
    return build_psi_table(window=window, cache_path=cache_dir / f"psi_{tag}.bin", **params)

