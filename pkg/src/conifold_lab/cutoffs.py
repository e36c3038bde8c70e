"""Piecewise cutoff chi used to glue the cone potential into a constant,
and the C2 plateau steps sigma and rho.

chi is assembled from five pieces with breakpoints
``c1 = 2**(4/3) < c2 < c3 = (n-1)**(4/3) < c4 = n**(4/3)``:

* the identity on ``[0, c1]``;
* ``phi(s) = c1 + (s - c1) - (s - c1)**3`` on ``[c1, c2]``;
* ``A - tau / s`` on ``[c2, c3]``, for which ``2 chi' + s chi'' = 0``;
* the antiderivative of a cubic ``psi`` on ``[c3, c4]``;
* a constant past ``c4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from conifold_lab.errors import DomainError, VerificationError

C1 = 2.0 ** (4.0 / 3.0)
DEFAULT_GRID = 2001
C1_HAT_VARIATION = 0.20


@dataclass(frozen=True)
class ChiSpec:
    n: int
    c1: float
    c2: float
    c3: float
    c4: float
    tau_const: float
    a0: float
    a1: float
    a2: float
    a3: float
    chi_c2: float
    chi_c3: float
    final_value: float

    @property
    def breakpoints(self) -> tuple[float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4)


def build_chi(n: int) -> ChiSpec:
    """Solve for the breakpoints and the coefficients of chi at scale ``n``."""
    if int(n) != n or n < 4:
        raise DomainError(f"n must be an integer >= 4, got {n}")
    n = int(n)
    c1 = C1
    # 2 phi' + s phi'' = 2 - 6x**2 - 6(c1 + x)x = 0  with  x = s - c1
    x = (-6.0 * c1 + math.sqrt(36.0 * c1 * c1 + 96.0)) / 24.0
    c2 = c1 + x
    c3 = (n - 1) ** (4.0 / 3.0)
    c4 = n ** (4.0 / 3.0)
    dphi = 1.0 - 3.0 * x * x
    tau = c2 * c2 * dphi
    chi_c2 = c1 + x - x**3
    chi_c3 = chi_c2 + c2 * dphi - tau / c3
    L = c4 - c3
    a0 = tau / c3**2
    a1 = -2.0 * tau / c3**3
    a2 = tau * (4.0 * c4 - 7.0 * c3) / (c3**3 * L**2)
    a3 = 2.0 * tau * (2.0 * c3 - c4) / (c3**3 * L**3)
    final = chi_c3 + a0 * L + a1 * L**2 / 2 + a2 * L**3 / 3 + a3 * L**4 / 4
    return ChiSpec(n, c1, c2, c3, c4, tau, a0, a1, a2, a3, chi_c2, chi_c3, final)


def _piece_index(spec: ChiSpec, s: np.ndarray) -> np.ndarray:
    # side="left" puts a breakpoint in the piece to its left
    return np.searchsorted(np.array(spec.breakpoints), s, side="left")


def chi_eval(spec: ChiSpec, s, deriv: int = 0):
    """chi, chi' or chi'' at ``s`` (scalar or array); breakpoints take the
    left piece."""
    if deriv not in (0, 1, 2):
        raise DomainError("deriv must be 0, 1 or 2")
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise DomainError("chi is defined on [0, inf)")
    idx = _piece_index(spec, arr)
    out = np.zeros_like(arr)

    m = idx == 0
    out[m] = (arr[m], 1.0, 0.0)[deriv]

    m = idx == 1
    x = arr[m] - spec.c1
    out[m] = (spec.c1 + x - x**3, 1.0 - 3.0 * x * x, -6.0 * x)[deriv]

    m = idx == 2
    y = arr[m]
    tau = spec.tau_const
    a_const = spec.chi_c2 + tau / spec.c2
    out[m] = (a_const - tau / y, tau / y**2, -2.0 * tau / y**3)[deriv] if y.size else 0.0

    m = idx == 3
    u = arr[m] - spec.c3
    a0, a1, a2, a3 = spec.a0, spec.a1, spec.a2, spec.a3
    if deriv == 0:
        out[m] = spec.chi_c3 + u * (a0 + u * (a1 / 2 + u * (a2 / 3 + u * a3 / 4)))
    elif deriv == 1:
        out[m] = a0 + u * (a1 + u * (a2 + u * a3))
    else:
        out[m] = a1 + u * (2 * a2 + 3 * u * a3)

    m = idx == 4
    out[m] = spec.final_value if deriv == 0 else 0.0
    return float(out) if out.ndim == 0 else out


def psi_eval(spec: ChiSpec, s, deriv: int = 0):
    """The cubic psi (or psi') on its own, without piece selection."""
    u = np.asarray(s, dtype=float) - spec.c3
    if deriv == 0:
        return spec.a0 + u * (spec.a1 + u * (spec.a2 + u * spec.a3))
    return spec.a1 + u * (2 * spec.a2 + 3 * u * spec.a3)


def joins(spec: ChiSpec) -> dict[str, list[float]]:
    """|left - right| for chi, chi', chi'' at c1..c4."""
    out: dict[str, list[float]] = {"chi": [], "chi1": [], "chi2": []}
    # right-hand limits: evaluate the right piece's formula at the breakpoint
    for b in spec.breakpoints:
        right = np.nextafter(b, math.inf)
        for key, d in zip(out, range(3)):
            left_v = chi_eval(spec, b, d)
            right_v = chi_eval(spec, right, d)
            # remove the O(ulp) drift of the right sample via the next derivative
            if d < 2:
                right_v -= (right - b) * chi_eval(spec, right, d + 1)
            out[key].append(abs(left_v - right_v))
    return out


# ---------------------------------------------------------------------------
# bound verification


@dataclass
class ChiDeficits:
    n: int
    item2_chi1: float
    item2_law: float
    item3_chi1: float
    item3_law: float
    a2: float
    a3: float

    def scaled(self) -> dict[str, float]:
        n = self.n
        return {
            "item2_chi1": self.item2_chi1 * n ** (11 / 3),
            "item2_law": self.item2_law * n ** (11 / 3),
            "item3_chi1": self.item3_chi1 * n ** (5 / 3),
            "item3_law": self.item3_law * n ** (5 / 3),
            "a2": abs(self.a2) * n ** (10 / 3),
            "a3": abs(self.a3) * n ** (11 / 3),
        }

    @property
    def c1_hat(self) -> float:
        return max(self.scaled().values())


@dataclass
class ChiBoundsReport:
    n_list: list[int]
    deficits: list[ChiDeficits]
    c1_hat: float
    c1_hat_per_n: list[float]
    variation: float
    item1: bool
    item4: bool
    phi_segment_ok: bool
    law_residual: float
    signs_ok: bool
    a_bounds_ok: bool
    stable: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all((self.item1, self.item4, self.phi_segment_ok, self.signs_ok, self.a_bounds_ok, self.stable))


def _deficit(values: np.ndarray) -> float:
    return float(max(0.0, -values.min()))


def _law(spec: ChiSpec, s: np.ndarray) -> np.ndarray:
    return 2 * chi_eval(spec, s, 1) + s * chi_eval(spec, s, 2)


def chi_law(spec: ChiSpec, s) -> np.ndarray:
    """2 chi' + s chi'' evaluated per piece without cancellation; on
    [c2, c3] the combination vanishes identically."""
    arr = np.asarray(s, dtype=float)
    idx = _piece_index(spec, arr)
    out = np.zeros_like(arr)
    m = idx == 0
    out[m] = 2.0
    m = idx == 1
    x = arr[m] - spec.c1
    out[m] = 2.0 - 6.0 * x * x - 6.0 * arr[m] * x
    m = idx == 3
    out[m] = 2 * psi_eval(spec, arr[m]) + arr[m] * psi_eval(spec, arr[m], 1)
    return out


def chi_deficits(spec: ChiSpec, grid_size: int = DEFAULT_GRID) -> ChiDeficits:
    """Largest violations of chi' >= 0 and 2 chi' + s chi'' >= 0 on the
    intervals [c1, c3] and [c3, c4], sampled on uniform grids."""
    g2 = np.linspace(spec.c1, spec.c3, grid_size)
    g3 = np.linspace(spec.c3, spec.c4, grid_size)
    return ChiDeficits(
        n=spec.n,
        item2_chi1=_deficit(chi_eval(spec, g2, 1)),
        item2_law=_deficit(chi_law(spec, g2)),
        item3_chi1=_deficit(psi_eval(spec, g3, 0)),
        item3_law=_deficit(2 * psi_eval(spec, g3, 0) + g3 * psi_eval(spec, g3, 1)),
        a2=spec.a2,
        a3=spec.a3,
    )


def verify_chi_bounds(n_list, grid_size: int = DEFAULT_GRID, raise_on_growth: bool = True) -> ChiBoundsReport:
    """Measure the constant of the chi bounds across scales ``n``.

    Each scaled deficit (deficits on [c1, c3] times n**(11/3), on [c3, c4]
    times n**(5/3), |a2| n**(10/3), a3 n**(11/3)) is computed per n; the fitted
    constant is the maximum. Stability means the per-n constants spread by
    less than 20% of their maximum.
    """
    ns = [int(n) for n in n_list]
    if not ns or any(n < 10 for n in ns):
        raise DomainError("verify_chi_bounds needs n >= 10")
    specs = [build_chi(n) for n in ns]
    defs = [chi_deficits(sp, grid_size) for sp in specs]
    per_n = [d.c1_hat for d in defs]
    c1_hat = max(per_n)
    variation = (max(per_n) - min(per_n)) / c1_hat if c1_hat > 0 else 0.0

    item1 = True
    item4 = True
    phi_ok = True
    law_res = 0.0
    for sp in specs:
        g = np.linspace(0.0, sp.c1, 101)
        item1 &= bool(np.all(chi_eval(sp, g) == g))
        tail = np.linspace(sp.c4, 2 * sp.c4, 11)[1:]
        item4 &= bool(np.all(chi_eval(sp, tail) == sp.final_value) and np.all(chi_eval(sp, tail, 1) == 0))
        gp = np.linspace(sp.c1, sp.c2, 501)
        phi_ok &= bool(np.all(chi_eval(sp, gp, 1) > 0) and np.all(_law(sp, gp) >= -1e-14))
        gl = np.linspace(sp.c2, sp.c3, 501)[1:]
        law_res = max(law_res, float(np.max(np.abs(_law(sp, gl)))))

    signs = all(sp.a2 < 0 < sp.a3 for sp in specs)
    bounds = all(-c1_hat * sp.n ** (-10 / 3) <= sp.a2 and sp.a3 <= c1_hat * sp.n ** (-11 / 3) for sp in specs)
    stable = variation < C1_HAT_VARIATION

    order = np.argsort(ns)
    growth = {}
    for key in defs[0].scaled():
        vals = [defs[i].scaled()[key] for i in order]
        growth[key] = vals
    if raise_on_growth and not stable:
        raise VerificationError(f"scaled chi deficits not bounded across n: {growth}")
    return ChiBoundsReport(
        n_list=ns,
        deficits=defs,
        c1_hat=c1_hat,
        c1_hat_per_n=per_n,
        variation=variation,
        item1=item1,
        item4=item4,
        phi_segment_ok=phi_ok,
        law_residual=law_res,
        signs_ok=signs,
        a_bounds_ok=bounds,
        stable=stable,
        details={"scaled_by_n": growth},
    )


# ---------------------------------------------------------------------------
# plateau steps


@dataclass(frozen=True)
class SmoothStep:
    """Decreasing C2 step: 1 for s <= lo, 0 for s >= hi, quintic between."""

    lo: float
    hi: float
    degree: int = 5

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("SmoothStep needs lo < hi")
        if self.degree != 5:
            raise DomainError("only the quintic step is implemented")


SIGMA = SmoothStep(1.0, 4.0)
RHO = SmoothStep(5.0 / 8.0, 7.0 / 8.0)


def smoothstep_eval(step: SmoothStep, s, deriv: int = 0):
    if deriv not in (0, 1, 2):
        raise DomainError("deriv must be 0, 1 or 2")
    width = step.hi - step.lo
    u = np.clip((np.asarray(s, dtype=float) - step.lo) / width, 0.0, 1.0)
    if deriv == 0:
        out = 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    elif deriv == 1:
        out = -30.0 * u * u * (1.0 - u) ** 2 / width
    else:
        out = -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / width**2
    return float(out) if np.ndim(out) == 0 else out
