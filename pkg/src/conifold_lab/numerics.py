"""Small numerical kernels: safeguarded Newton, Richardson-extrapolated
central differences and a checked wrapper around adaptive quadrature."""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate

from conifold_lab.errors import ConvergenceError, QuadratureError


def newton_bisect(
    func: Callable[[float], float],
    dfunc: Callable[[float], float],
    x0: float,
    lo: float,
    hi: float,
    rtol: float = 1e-14,
    maxiter: int = 100,
) -> float:
    """Root of ``func`` in ``[lo, hi]`` by Newton with a bisection fallback.

    ``func(lo)`` and ``func(hi)`` must have opposite signs. A Newton step
    that leaves the current bracket, or fails to halve the residual, is
    replaced by a bisection step, so the iteration converges globally.
    """
    flo, fhi = func(lo), func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ConvergenceError(f"root not bracketed in [{lo}, {hi}]")
    x = min(max(x0, lo), hi)
    fx = func(x)
    for _ in range(maxiter):
        if fx == 0.0:
            return x
        # shrink bracket
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        d = dfunc(x)
        step_ok = d != 0.0 and math.isfinite(d)
        if step_ok:
            xn = x - fx / d
            step_ok = lo < xn < hi
        if not step_ok:
            xn = 0.5 * (lo + hi)
        fn = func(xn)
        if abs(fn) > 0.5 * abs(fx) and step_ok:
            xb = 0.5 * (lo + hi)
            fb = func(xb)
            if abs(fb) < abs(fn):
                xn, fn = xb, fb
        if abs(xn - x) <= rtol * abs(xn):
            return xn
        x, fx = xn, fn
    raise ConvergenceError(f"Newton iteration did not converge in {maxiter} steps")


def central_diff(func: Callable[[float], float], x: float, h: float, levels: int = 3) -> float:
    """Derivative of a scalar function by Richardson-extrapolated central
    differences with steps ``h, h/2, ..., h/2**(levels-1)``."""
    table = []
    for k in range(levels):
        hk = h / 2**k
        row = [(func(x + hk) - func(x - hk)) / (2 * hk)]
        for j in range(1, k + 1):
            prev = table[k - 1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4**j - 1))
        table.append(row)
    return table[-1][-1]


def richardson(values: np.ndarray | list[float], ratio: float = 2.0, order: int = 2) -> float:
    """Extrapolate a sequence ``A(h), A(h/ratio), ...`` whose error expands
    in powers ``h**order, h**(2*order), ...``."""
    table = [list(map(float, values))]
    for j in range(1, len(values)):
        prev = table[-1]
        fac = ratio ** (order * j)
        table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1) for i in range(len(prev) - 1)])
    return table[-1][0]


def quad_checked(
    func: Callable[[float], float],
    a: float,
    b: float,
    abstol: float = 1e-12,
    rtol_floor: float = 2e-14,
    limit: int = 200,
) -> float:
    """Adaptive Gauss-Kronrod quadrature; raises if the error estimate
    exceeds ``max(abstol, rtol_floor * |value|)``.

    The relative floor only matters once the integral is so large that an
    absolute ``abstol`` is below double-precision resolution.
    """
    if b == a:
        return 0.0
    with warnings.catch_warnings():
        # QUADPACK's roundoff warning is superseded by the explicit error check
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=abstol, epsrel=rtol_floor, limit=limit)
    if not math.isfinite(val) or err > max(abstol, rtol_floor * abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] reached error {err:.3e} > {abstol:.1e}")
    return val
