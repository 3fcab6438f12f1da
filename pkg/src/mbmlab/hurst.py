"""Functional Hurst parameters ``H(t)`` with values in ``[a, b]`` inside ``(0, 1)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError

KINDS = ("constant", "sine", "logistic", "piecewise-linear", "step", "table")


@dataclass(frozen=True)
class HurstFunction:
    """A Hurst function together with its range ``[a, b]`` and Holder data.

    ``beta`` and ``c1`` describe ``|H(s) - H(t)| <= c1 |s - t|**beta``.
    Every smooth kind is Lipschitz (``beta = 1``).  Step functions are not
    Holder continuous; they get ``beta = 0`` and ``regular`` is False.

    Build instances with the class methods rather than the constructor.
    """

    kind: str
    params: dict = field(default_factory=dict)
    a: float = 0.5
    b: float = 0.5
    beta: float = 1.0
    c1: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown Hurst kind {self.kind!r}; expected one of {KINDS}")
        if not (0.0 < self.a <= self.b < 1.0):
            raise ConfigurationError(f"Hurst range [{self.a}, {self.b}] must satisfy 0 < a <= b < 1")

    @property
    def regular(self) -> bool:
        """True when ``beta > b``, the standing smoothness assumption on H."""
        return self.beta > self.b

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            out = np.full(t.shape, p["value"])
        elif self.kind == "sine":
            out = p["mean"] + p["amp"] * np.sin(2.0 * np.pi * p["freq"] * t + p["phase"])
        elif self.kind == "logistic":
            out = p["lo"] + (p["hi"] - p["lo"]) * 0.5 * (1.0 + np.tanh((t - p["center"]) / (2.0 * p["width"])))
        elif self.kind == "piecewise-linear":
            out = np.interp(t, p["knots"], p["values"])
        elif self.kind == "step":
            # piece i covers [breaks[i-1], breaks[i]); dyadic points k/2**j are exact floats
            idx = np.searchsorted(np.asarray(p["breaks"]), t, side="right")
            out = np.asarray(p["values"])[idx]
        else:
            knots = np.asarray(p["knots"])
            out = PchipInterpolator(knots, p["values"], extrapolate=False)(np.clip(t, knots[0], knots[-1]))
        if out.ndim == 0:
            return float(out)
        return out

    def describe(self) -> str:
        items = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({items})"

    # constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "HurstFunction":
        return cls("constant", {"value": float(value)}, float(value), float(value), 1.0, 0.0)

    @classmethod
    def sine(cls, mean: float, amp: float, freq: float = 1.0, phase: float = 0.0) -> "HurstFunction":
        amp_abs = abs(amp) if freq != 0 else 0.0
        return cls("sine", {"mean": float(mean), "amp": float(amp), "freq": float(freq), "phase": float(phase)},
                   mean - amp_abs, mean + amp_abs, 1.0, 2.0 * np.pi * abs(freq * amp))

    @classmethod
    def logistic(cls, lo: float, hi: float, center: float = 0.5, width: float = 0.1) -> "HurstFunction":
        if width <= 0:
            raise ConfigurationError("logistic width must be positive")
        return cls("logistic", {"lo": float(lo), "hi": float(hi), "center": float(center), "width": float(width)},
                   min(lo, hi), max(lo, hi), 1.0, abs(hi - lo) / (4.0 * width))

    @classmethod
    def piecewise_linear(cls, knots, values) -> "HurstFunction":
        knots, values = _knots(knots, values)
        slopes = np.abs(np.diff(values) / np.diff(knots)) if knots.size > 1 else np.zeros(1)
        return cls("piecewise-linear", {"knots": tuple(knots), "values": tuple(values)},
                   float(values.min()), float(values.max()), 1.0, float(slopes.max(initial=0.0)))

    @classmethod
    def step(cls, breaks, values) -> "HurstFunction":
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.size != breaks.size + 1:
            raise ConfigurationError("a step function needs len(values) == len(breaks) + 1")
        if breaks.size > 1 and np.any(np.diff(breaks) <= 0):
            raise ConfigurationError("step breaks must be strictly increasing")
        return cls("step", {"breaks": tuple(breaks), "values": tuple(values)},
                   float(values.min()), float(values.max()), 0.0, float(np.ptp(values)))

    @classmethod
    def table(cls, knots, values) -> "HurstFunction":
        knots, values = _knots(knots, values)
        # the derivative is piecewise quadratic: extremes sit at knots or at its turning points
        d1 = PchipInterpolator(knots, values).derivative()
        turns = d1.derivative().roots(extrapolate=False)
        probe = np.concatenate([knots, turns[np.isfinite(turns)]])
        slope = np.abs(d1(probe)).max()
        return cls("table", {"knots": tuple(knots), "values": tuple(values)},
                   float(values.min()), float(values.max()), 1.0, float(slope))


def _knots(knots, values):
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if knots.size != values.size or knots.size < 2:
        raise ConfigurationError("need at least two knots and one value per knot")
    if np.any(np.diff(knots) <= 0):
        raise ConfigurationError("knots must be strictly increasing")
    return knots, values


def _fmt(v):
    if isinstance(v, tuple):
        return ";".join(repr(x) for x in v)
    return repr(v)


def range_violations(H: HurstFunction, lo: float = -1.0, hi: float = 2.0, points: int = 6001) -> int:
    """Number of dense-grid points where ``H`` leaves ``[a, b]``."""
    v = np.asarray(H(np.linspace(lo, hi, points)))
    return int(np.count_nonzero((v < H.a - 1e-15) | (v > H.b + 1e-15)))


def holder_ratio(H: HurstFunction, pairs: int = 2000, lo: float = 0.0, hi: float = 1.0, seed: int = 0) -> float:
    """Largest ``|H(s) - H(t)| / (c1 |s - t|**beta)`` over random pairs in ``[lo, hi]``.

    Values at or below 1 are consistent with the recorded Holder data.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(lo, hi, pairs)
    # mix far pairs with near pairs so both regimes are probed
    gap = np.where(np.arange(pairs) % 2 == 0, rng.uniform(lo, hi, pairs) - s,
                   np.exp2(-rng.uniform(1, 30, pairs)))
    t = s + gap
    dh = np.abs(np.asarray(H(s)) - np.asarray(H(t)))
    if H.c1 == 0.0:
        return 0.0 if np.all(dh == 0.0) else np.inf
    return float(np.max(dh / (H.c1 * np.abs(gap) ** H.beta)))
