"""Feasibility of ``(a, b)`` for the residual smoothing result and the exponent it yields."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

DEFAULT_RESOLUTION = 2000
_ZOOM_ROUNDS = 12


def _check_ab(a, b):
    if not (0.0 < a <= b < 1.0):
        raise ConfigurationError(f"need 0 < a <= b < 1, got a={a}, b={b}")


def smoothing_condition(a: float, b: float) -> bool:
    """Strict test ``1 - b > (1 - a)(1 - a / b)``."""
    _check_ab(a, b)
    return bool(1.0 - b > (1.0 - a) * (1.0 - a / b))


def smoothing_threshold(a: float) -> float:
    """Largest ``b`` (exclusive) with ``smoothing_condition(a, b)`` true: the root of ``b**2 - a b - a (1 - a)``."""
    return 0.5 * (a + np.sqrt(a * a + 4.0 * a * (1.0 - a)))


@dataclass
class ExponentReport:
    a: float
    b: float
    beta: float
    ell: int
    epsilon_slack: float
    feasible: bool
    d: float
    eta_star: float
    gamma_star: float
    constraint_values: tuple

    def as_rows(self):
        cv = self.constraint_values
        return [("a", self.a), ("b", self.b), ("beta", self.beta), ("ell", self.ell),
                ("epsilon_slack", self.epsilon_slack), ("feasible", int(self.feasible)), ("d", self.d),
                ("eta_star", self.eta_star), ("gamma_star", self.gamma_star),
                ("constraint_low_frequency", cv[0]), ("constraint_mid", cv[1]), ("constraint_tail", cv[2])]


def constraint_exponents(eta, gamma, a, beta, ell, epsilon_slack):
    """The three competing exponents ``a + eta beta``, ``(1 - gamma) + gamma a``, ``(gamma - eta)(ell - 1 - eps) + gamma a``."""
    eta = np.asarray(eta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return (a + eta * beta,
            (1.0 - gamma) + gamma * a,
            (gamma - eta) * (ell - 1 - epsilon_slack) + gamma * a)


def _objective(eta, gamma, a, beta, ell, eps):
    c1, c2, c3 = constraint_exponents(eta, gamma, a, beta, ell, eps)
    val = np.minimum(np.minimum(c1, c2), c3)
    return np.where((eta > 0) & (eta < gamma) & (gamma < 1), val, -np.inf)


def exponent_bound(a: float, b: float, beta: float | None = None, ell: int = 4,
                   epsilon_slack: float = 1e-3, grid_resolution: int = DEFAULT_RESOLUTION) -> ExponentReport:
    """Best exponent ``d`` allowed by the three constraints over ``0 < eta < gamma < 1``.

    The maximum over a ``grid_resolution``-squared grid on ``(eta, gamma)`` is
    refined by local zooms and by the point where all three exponents meet.
    ``beta`` defaults to ``b``.
    ``d`` is the optimum capped at 1 and ``feasible`` means ``d > b``.
    """
    _check_ab(a, b)
    beta = float(b if beta is None else beta)
    if beta <= 0:
        raise ConfigurationError("beta must be positive")
    if int(ell) != ell or ell < 2:
        raise ConfigurationError("ell must be an integer >= 2")
    if epsilon_slack <= 0 or epsilon_slack >= ell - 1:
        raise ConfigurationError("epsilon_slack must lie in (0, ell - 1)")
    if grid_resolution < 10:
        raise ConfigurationError("grid_resolution must be >= 10")
    n = int(grid_resolution)
    eta_b, gam_b, best_val = _grid_maximum(n, a, beta, ell, epsilon_slack)
    half = 1.0 / n
    for _ in range(_ZOOM_ROUNDS):
        local = np.linspace(-half, half, 41)
        E = eta_b + local[None, :]
        G = gam_b + local[:, None]
        vals = _objective(E, G, a, beta, ell, epsilon_slack)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i] >= best_val:
            best_val, eta_b, gam_b = float(vals[i]), float(E[0, i[1]]), float(G[i[0], 0])
        half /= 10.0
    # the objective is a min of three planes, so an interior optimum sits where all three meet
    triple = _triple_point(a, beta, ell, epsilon_slack)
    if triple is not None:
        val = float(_objective(triple[0], triple[1], a, beta, ell, epsilon_slack))
        if val > best_val:
            best_val, eta_b, gam_b = val, triple[0], triple[1]
    d = min(best_val, 1.0)
    cv = tuple(float(v) for v in constraint_exponents(eta_b, gam_b, a, beta, ell, epsilon_slack))
    return ExponentReport(float(a), float(b), beta, int(ell), float(epsilon_slack), bool(d > b), float(d),
                          eta_b, gam_b, cv)


def _grid_maximum(n, a, beta, ell, eps):
    """Maximum of the objective over cell centers of an ``n x n`` grid on ``(eta, gamma)``.

    For fixed gamma the objective is concave in eta (min of a rising, a flat
    and a falling line), so the best grid cell in each row neighbors the
    crossing of the rising and falling lines.  Checking those few cells per
    row gives the same maximum as scanning the full grid.
    """
    axis = (np.arange(n) + 0.5) / n
    L = ell - 1 - eps
    gamma = axis
    cross = (L * gamma + a * gamma - a) / (beta + L)
    last_valid = np.ceil(gamma * n - 0.5).astype(np.int64) - 1    # largest index with eta < gamma
    centre = np.floor(cross * n - 0.5).astype(np.int64)
    offsets = np.arange(-1, 3)
    idx = np.clip(centre[:, None] + offsets[None, :], 0, np.maximum(last_valid, 0)[:, None])
    eta = axis[idx]
    vals = _objective(eta, gamma[:, None], a, beta, ell, eps)
    i = np.unravel_index(np.argmax(vals), vals.shape)
    return float(eta[i]), float(gamma[i[0]]), float(vals[i])


def _grid_maximum_full(n, a, beta, ell, eps):
    """Reference scan of every grid cell (quadratic cost)."""
    axis = (np.arange(n) + 0.5) / n
    vals = _objective(axis[None, :], axis[:, None], a, beta, ell, eps)
    i = np.unravel_index(np.argmax(vals), vals.shape)
    return float(axis[i[1]]), float(axis[i[0]]), float(vals[i])


def _triple_point(a, beta, ell, eps):
    L = ell - 1 - eps
    # a + beta eta = 1 - (1 - a) gamma  and  a + beta eta = L (gamma - eta) + a gamma
    M = np.array([[beta, 1.0 - a], [beta + L, -(L + a)]])
    rhs = np.array([1.0 - a, -a])
    try:
        eta, gamma = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    return float(eta), float(gamma)


def region_raster(resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Condition evaluated at cell centers of a ``resolution``-square grid on the unit square.

    Returns ``(a_centers, b_centers, feasible)`` with ``feasible[i, j]`` for
    ``(a_centers[i], b_centers[j])``; cells with ``a > b`` are False.
    """
    if resolution < 10:
        raise ConfigurationError("resolution must be >= 10")
    centers = (np.arange(resolution) + 0.5) / resolution
    A = centers[:, None]
    B = centers[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        feasible = (A <= B) & (1.0 - B > (1.0 - A) * (1.0 - A / B))
    return centers, centers.copy(), feasible


def write_region_csv(resolution: int, path, preamble=()) -> Path:
    a, b, feasible = region_raster(resolution)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "feasible"])
        for i, ai in enumerate(a):
            for j, bj in enumerate(b):
                w.writerow([f"{ai:.17g}", f"{bj:.17g}", int(feasible[i, j])])
    return path


def write_exponent_csv(report: ExponentReport, path, preamble=()) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "value"])
        for key, val in report.as_rows():
            w.writerow([key, val if isinstance(val, int) else f"{val:.17g}"])
    return path
