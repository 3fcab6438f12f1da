"""Lemarie-Meyer mother wavelet, built in the Fourier domain.

The wavelet is described by its real window ``chi`` so that
``psi_hat(xi) = exp(i xi / 2) * chi(|xi|)``.  The window is supported on
``[2pi/3, 8pi/3]`` and its squares sum to one over dyadic dilations.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

SUPPORT_LO = 2.0 * np.pi / 3.0
SUPPORT_MID = 4.0 * np.pi / 3.0
SUPPORT_HI = 8.0 * np.pi / 3.0


def smoothstep_coefficients(order: int) -> np.ndarray:
    """Power-basis coefficients of the flank polynomial of a given smoothness.

    The polynomial is ``x**(r+1) * sum_i C(r+i, i) (1-x)**i`` with ``r = order``;
    it rises from 0 to 1 on ``[0, 1]``, has ``r`` vanishing derivatives at both
    ends and satisfies ``nu(x) + nu(1 - x) = 1``.
    """
    if order < 1:
        raise ValueError(f"smoothness order must be >= 1, got {order}")
    poly = np.polynomial.Polynomial([0.0])
    one_minus_x = np.polynomial.Polynomial([1.0, -1.0])
    for i in range(order + 1):
        poly = poly + comb(order + i, i) * one_minus_x**i
    poly = poly * np.polynomial.Polynomial([0.0, 1.0]) ** (order + 1)
    return poly.coef


@dataclass(frozen=True)
class MeyerWindow:
    """Real Fourier profile of a Meyer wavelet.

    Parameters
    ----------
    smoothness_order : int
        The flank polynomial has this many continuous derivatives at the
        knots ``2pi/3``, ``4pi/3`` and ``8pi/3``.  The default of 3 gives
        ``nu(x) = x**4 (35 - 84 x + 70 x**2 - 20 x**3)``.
    """

    smoothness_order: int = 3

    def __post_init__(self):
        if int(self.smoothness_order) != self.smoothness_order or self.smoothness_order < 1:
            raise ValueError(f"smoothness_order must be an integer >= 1, got {self.smoothness_order}")

    @property
    def support_lo(self) -> float:
        return SUPPORT_LO

    @property
    def support_hi(self) -> float:
        return SUPPORT_HI

    @property
    def knots(self) -> tuple[float, float, float]:
        return (SUPPORT_LO, SUPPORT_MID, SUPPORT_HI)

    def nu(self, x):
        """Flank polynomial, clipped to ``[0, 1]`` outside the unit interval.

        The lower half is evaluated in factored form and the upper half as
        ``1 - nu(1 - x)``, which keeps the flank symmetry and monotonicity
        intact in floating point.
        """
        r = self.smoothness_order
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        low = np.minimum(x, 1.0 - x)
        y = 1.0 - low
        acc = np.zeros_like(low)
        for i in range(r, -1, -1):
            acc = acc * y + comb(r + i, i)
        val = low ** (r + 1) * acc
        return np.where(x <= 0.5, val, 1.0 - val)

    def __call__(self, xi):
        return meyer_window(self, xi)


def meyer_window(window: MeyerWindow, xi):
    """Evaluate ``chi(|xi|)``; zero outside ``2pi/3 < |xi| < 8pi/3``."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros_like(a)
    rise = (a > SUPPORT_LO) & (a <= SUPPORT_MID)
    fall = (a > SUPPORT_MID) & (a < SUPPORT_HI)
    out[rise] = np.sin(0.5 * np.pi * window.nu(3.0 * a[rise] / (2.0 * np.pi) - 1.0))
    out[fall] = np.cos(0.5 * np.pi * window.nu(3.0 * a[fall] / (4.0 * np.pi) - 1.0))
    if out.ndim == 0:
        return float(out)
    return out


def psi_hat(window: MeyerWindow, xi):
    """Fourier transform of the mother wavelet, ``exp(i xi/2) chi(|xi|)``.

    The phase makes the wavelet real and symmetric about ``x = -1/2``.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.exp(0.5j * xi) * meyer_window(window, xi)
    if out.ndim == 0:
        return complex(out)
    return out


def dyadic_energy(window: MeyerWindow, xi, j_lo: int = -60, j_hi: int = 60):
    """``sum_j chi(2**j xi)**2`` over ``j_lo <= j <= j_hi``.

    For ``xi != 0`` inside the dyadic range this equals one.
    """
    xi = np.asarray(xi, dtype=float)
    scales = np.ldexp(1.0, np.arange(j_lo, j_hi + 1))
    vals = meyer_window(window, np.multiply.outer(xi, scales))
    return np.sum(vals**2, axis=-1)
