"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import parse_lags
from .errors import ConfigurationError
from .hurst import HurstFunction
from .synthesis import SynthesisConfig


def _int(v):
    try:
        return int(v)
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {v!r}") from None


def _float(v):
    try:
        return float(v)
    except ValueError:
        raise ConfigurationError(f"expected a number, got {v!r}") from None


def _floats(v):
    return tuple(_float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


def _ints(v):
    text = str(v).strip()
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        return tuple(range(_int(lo), _int(hi) + 1, _int(step) if step else 1))
    return tuple(_int(x) for x in text.split(",") if x.strip())


def _bool(v):
    text = str(v).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {v!r}")


# key -> (parser, default); None defaults mean "derived or unset"
SCHEMA = {
    "seed": (_int, 0),
    "threads": (_int, 0),
    "a": (_float, None),
    "b": (_float, None),
    "beta": (_float, 1.0),
    "ell": (_int, 4),
    "j_min": (_int, -8),
    "j_max": (_int, 12),
    "k_window": (_int, 50),
    "t_start": (_float, 0.0),
    "t_end": (_float, 1.0),
    "t_points": (_int, 1025),
    "replicates": (_int, 2000),
    "hurst.kind": (str, "constant"),
    "hurst.value": (_float, None),
    "hurst.mean": (_float, None),
    "hurst.amp": (_float, None),
    "hurst.freq": (_float, 1.0),
    "hurst.phase": (_float, 0.0),
    "hurst.lo": (_float, None),
    "hurst.hi": (_float, None),
    "hurst.center": (_float, 0.5),
    "hurst.width": (_float, 0.1),
    "hurst.knots": (_floats, None),
    "hurst.values": (_floats, None),
    "hurst.breaks": (_floats, None),
    "hurst.file": (str, None),
    "psi.x_max": (_float, 256.0),
    "psi.x_step": (_float, 0.03125),
    "psi.theta_nodes": (_int, 32),
    "psi.quadrature_points": (_int, 2048),
    "psi.theta_lo": (_float, 0.05),
    "psi.theta_hi": (_float, 0.95),
    "psi.cache": (str, ""),
    "lags": (str, "2^-9..2^-4"),
    "out_dir": (str, "./out"),
    # subcommand parameters
    "process": (str, "X"),
    "components": (_bool, False),
    "theta": (_float, 0.5),
    "t": (_float, 0.3),
    "rho": (str, "2^-8..2^-4"),
    "u": (_floats, (-1.0, -0.5, 0.5, 1.0)),
    "n": (_int, 1),
    "diag.j_values": (_ints, (0, 4, 8, 12, 16, 20, 24)),
    "diag.h_values": (str, "2^-8..2^-4"),
    "resolution": (_int, 100),
    "epsilon_slack": (_float, 1e-3),
    "grid_resolution": (_int, 2000),
}


# where results and caches live; they do not affect file contents
_LOCATION_KEYS = ("out_dir", "psi.cache")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    explicit: frozenset = frozenset()
    hurst_function: HurstFunction | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def override(self, key: str, value) -> None:
        """Replace one setting (used for command-line flags) and re-validate."""
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown key {key!r}")
        self.values[key] = value
        _validate(self.values)

    def explicit_items(self):
        return [(k, self.values[k]) for k in sorted(self.explicit)]

    def echo(self) -> list[str]:
        """Canonical ``key = value`` lines for every setting that shapes the results."""
        return [f"{k} = {_render(self.values[k])}" for k in sorted(self.values)
                if self.values[k] is not None and k not in _LOCATION_KEYS]

    # derived objects ------------------------------------------------------

    @property
    def workers(self) -> int:
        return self["threads"] or (os.cpu_count() or 1)

    def t_grid(self) -> np.ndarray:
        return np.linspace(self["t_start"], self["t_end"], self["t_points"])

    def lags(self) -> tuple:
        return parse_lags(self["lags"])

    def rhos(self) -> tuple:
        return parse_lags(self["rho"])

    def synthesis(self, t_grid=None) -> SynthesisConfig:
        return SynthesisConfig(self["j_min"], self["j_max"], self["k_window"],
                               self.t_grid() if t_grid is None else t_grid,
                               self["replicates"], self["seed"], self.workers)

    def psi_kwargs(self) -> dict:
        return dict(x_max=self["psi.x_max"], x_step=self["psi.x_step"], theta_lo=self["psi.theta_lo"],
                    theta_hi=self["psi.theta_hi"], n_theta_nodes=self["psi.theta_nodes"],
                    quadrature_points=self["psi.quadrature_points"])

    def hurst(self) -> HurstFunction:
        return self.hurst_function


def _render(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _build_hurst(v: dict) -> HurstFunction:
    kind = v["hurst.kind"]
    a, b = v["a"], v["b"]

    def need(*keys):
        missing = [k for k in keys if v[k] is None]
        if missing:
            raise ConfigurationError(f"hurst.kind = {kind} needs {', '.join(missing)}")
        return [v[k] for k in keys]

    if kind == "constant":
        if v["hurst.value"] is None:
            if a is not None and b is not None and a != b:
                raise ConfigurationError("a constant Hurst function needs a = b")
            value = a if a is not None else (b if b is not None else 0.5)
        else:
            value = v["hurst.value"]
        return HurstFunction.constant(value)
    if kind == "sine":
        if v["hurst.mean"] is None and v["hurst.amp"] is None and a is not None and b is not None:
            return HurstFunction.sine((a + b) / 2, (b - a) / 2, v["hurst.freq"], v["hurst.phase"])
        mean, amp = need("hurst.mean", "hurst.amp")
        return HurstFunction.sine(mean, amp, v["hurst.freq"], v["hurst.phase"])
    if kind == "logistic":
        if v["hurst.lo"] is None and v["hurst.hi"] is None and a is not None and b is not None:
            return HurstFunction.logistic(a, b, v["hurst.center"], v["hurst.width"])
        lo, hi = need("hurst.lo", "hurst.hi")
        return HurstFunction.logistic(lo, hi, v["hurst.center"], v["hurst.width"])
    if kind == "piecewise-linear":
        return HurstFunction.piecewise_linear(*need("hurst.knots", "hurst.values"))
    if kind == "step":
        return HurstFunction.step(*need("hurst.breaks", "hurst.values"))
    if kind == "table":
        if v["hurst.file"] is not None:
            knots, values = read_hurst_table(v["hurst.file"])
        else:
            knots, values = need("hurst.knots", "hurst.values")
        return HurstFunction.table(knots, values)
    raise ConfigurationError(f"unknown hurst.kind {kind!r}")


def read_hurst_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Two numeric columns ``t, H``; ``#`` comments and one header line are allowed."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace("\t", ",").split(",") if p.strip()]
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            if rows:
                raise ConfigurationError(f"bad row in Hurst table {path}: {line!r}") from None
    if len(rows) < 2:
        raise ConfigurationError(f"Hurst table {path} needs at least two rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment), fill defaults and validate."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown key {key!r}")
        raw[key] = value.strip().strip('"').strip("'")
    values = {k: (SCHEMA[k][0](raw[k]) if k in raw else SCHEMA[k][1]) for k in SCHEMA}
    _validate(values)
    H = _build_hurst(values)
    a, b = values["a"], values["b"]
    tol = 1e-12
    if (a is not None and abs(a - H.a) > tol) or (b is not None and abs(b - H.b) > tol):
        raise ConfigurationError(f"a, b disagree with the Hurst function range [{H.a}, {H.b}]")
    if a is None:
        values["a"] = H.a
    if b is None:
        values["b"] = H.b
    return ExperimentConfig(values, frozenset(raw), H)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _validate(v):
    a, b = v["a"], v["b"]
    if a is not None and b is not None and a > b:
        raise ConfigurationError("a must be ≤ b")
    for key in ("a", "b"):
        if v[key] is not None and not 0.0 < v[key] < 1.0:
            raise ConfigurationError(f"{key} must lie in (0, 1)")
    if not v["j_min"] < 0 <= v["j_max"]:
        raise ConfigurationError("j_min < 0 <= j_max is required")
    if v["k_window"] < 8:
        raise ConfigurationError("k_window must be >= 8")
    if v["replicates"] < 1:
        raise ConfigurationError("replicates must be >= 1")
    if v["t_points"] < 2 or not v["t_end"] > v["t_start"]:
        raise ConfigurationError("need t_points >= 2 and t_end > t_start")
    if v["threads"] < 0:
        raise ConfigurationError("threads must be >= 0")
    if v["ell"] < 2:
        raise ConfigurationError("ell must be >= 2")
    if v["beta"] <= 0:
        raise ConfigurationError("beta must be positive")
    if v["process"] not in ("X", "Z"):
        raise ConfigurationError("process must be X or Z")
    if v["resolution"] < 10:
        raise ConfigurationError("resolution must be >= 10")
    if v["n"] < 0:
        raise ConfigurationError("n must be >= 0")
    parse_lags(v["lags"])
    parse_lags(v["rho"])
    parse_lags(v["diag.h_values"])
