"""Radial profiles of the Ricci-flat conifold metrics.

Three geometries are covered, all with Kahler potential ``f(s)`` of the
squared radius ``s = r**2``:

* the cone, ``f(s) = 3/2 s**(2/3)`` and ``eta = s**(2/3)``;
* the resolved conifold, ``f' = eta / s`` with ``eta**2 (eta + 3/2) = s**2``;
* the deformed conifold ``sum w_i**2 = t``, where with ``s = t cosh(tau)``

      eta = 2**(-1/3) t**(2/3) (sinh 2tau - 2tau)**(1/3) / tanh(tau)

  solves the Ricci-flatness equation

      s (s**2 - t**2) (eta**3)' + 3 t**2 eta**3 = 2 s**4 .

Small-``tau`` evaluations go through power series so that the removable
``0/0`` at the vanishing sphere ``s = t`` never appears numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from conifold_lab.errors import DomainError, VerificationError
from conifold_lab.numerics import central_diff, newton_bisect, quad_checked

SINGULAR_GUARD = 1e-12
SERIES_TAU = 0.5
# below this w = s/t - 1 the deformed chain uses the Taylor series of h in w
SPHERE_SERIES_W = 0.25
SPHERE_SERIES_TERMS = 24
FD_REL_STEP = 1e-3
FD_MISMATCH = 1e-6


@dataclass(frozen=True)
class ProfileKind:
    name: str
    t: float = 0.0

    def __post_init__(self):
        if self.name not in ("cone", "resolved", "deformed"):
            raise DomainError(f"unknown profile kind {self.name!r}")
        if self.name == "deformed":
            if not (math.isfinite(self.t) and self.t > 0):
                raise DomainError(f"deformed profile needs t > 0, got {self.t}")
        elif self.t != 0.0:
            raise DomainError(f"{self.name} profile takes no modulus")

    @classmethod
    def cone(cls) -> "ProfileKind":
        return cls("cone")

    @classmethod
    def resolved(cls) -> "ProfileKind":
        return cls("resolved")

    @classmethod
    def deformed(cls, t: float) -> "ProfileKind":
        return cls("deformed", float(t))

    def __str__(self) -> str:
        return f"deformed(t={self.t!r})" if self.name == "deformed" else self.name


@dataclass(frozen=True)
class RadialSample:
    r2: float
    tau: float = 0.0
    eps: float = 0.0


@dataclass(frozen=True)
class ProfileEval:
    kind: ProfileKind
    s: float
    eta: float
    eta_prime: float
    f: float
    f1: float
    f2: float
    f3: float
    f4: float
    ode_residual: float

    def derivative(self, k: int) -> float:
        return (self.f, self.f1, self.f2, self.f3, self.f4)[k]


@dataclass
class MonotoneWitness:
    tau_grid: list[float]
    h_values: list[float]
    h1_values: list[float]
    h_deficits: list[float] = field(default_factory=list)
    increasing: bool = False
    h1_positive: bool = False


# ---------------------------------------------------------------------------
# tau-space special functions


def _series_p(tau: float) -> float:
    """(sinh 2tau - 2tau) / (4 tau**3 / 3), summed as a power series."""
    x2 = tau * tau
    total, term, k = 1.0, 1.0, 1
    while True:
        # ratio of consecutive terms 3*2**(2k-1) tau**(2k-2) / (2k+1)!
        term *= 4.0 * x2 / ((2 * k + 2) * (2 * k + 3))
        total += term
        k += 1
        if term < 1e-17 * total:
            return total


def p_ratio(tau: float) -> float:
    if tau < SERIES_TAU:
        return _series_p(tau)
    return (math.sinh(2 * tau) - 2 * tau) * 0.75 / tau**3


def _tau_over_sinh(tau: float) -> float:
    if tau < 1e-4:
        return 1.0 - tau * tau / 6.0
    return tau / math.sinh(tau)


def h_of_tau(tau: float) -> float:
    """h(tau) = eta**3 / s**2 = cosh(tau)(sinh 2tau - 2tau) / (2 sinh(tau)**3)."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    if tau > 300:
        # sinh overflow; h -> 1 with exponentially small corrections
        return 1.0
    return (2.0 / 3.0) * p_ratio(tau) * _tau_over_sinh(tau) ** 3 * math.cosh(tau)


def _h1_series(tau: float) -> float:
    # sum_n 4 * 2**(2n+1) n / ((2n+1)! (n+1) (2n+3)) tau**(2n+3)
    total = 0.0
    n = 1
    fact = 6.0  # (2n+1)!
    pw = 2.0**3 * tau**5  # 2**(2n+1) tau**(2n+3)
    while True:
        term = 4.0 * pw * n / (fact * (n + 1) * (2 * n + 3))
        total += term
        if term < 1e-17 * total:
            return total
        n += 1
        fact *= (2 * n) * (2 * n + 1)
        pw *= 4.0 * tau * tau


def h1_of_tau(tau: float) -> float:
    """Auxiliary h1 = 4tau + e**(2tau)(tau - 3/2) + e**(-2tau)(tau + 3/2)."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    if tau < SERIES_TAU:
        return _h1_series(tau)
    return 4 * tau + 2 * tau * math.cosh(2 * tau) - 3 * math.sinh(2 * tau)


def h1_series_oracle(tau: float, terms: int = 60) -> float:
    """h1 obtained by integrating the termwise-positive series of h1'.

    h1'(tau) = 4 tau sum_{n>=1} (2tau)**(2n+1) n / ((2n+1)! (n+1)),
    integrated from h1(0) = 0.
    """
    total = 0.0
    for n in range(1, terms + 1):
        coeff = 4.0 * 2.0 ** (2 * n + 1) * n / (math.factorial(2 * n + 1) * (n + 1))
        total += coeff * tau ** (2 * n + 3) / (2 * n + 3)
    return total


def h_deficit(tau: float) -> float:
    """1 - h(tau) = (tau cosh tau - sinh tau) / sinh(tau)**3, accurate where
    h itself is within rounding of 1."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    if tau < SERIES_TAU:
        # tau cosh - sinh = sum 2k tau**(2k+1) / (2k+1)!
        y = tau * tau
        total, term, k = 0.0, tau**3 / 6.0, 1
        while True:
            total += 2 * k * term
            k += 1
            term *= y / ((2 * k) * (2 * k + 1))
            if 2 * k * term < 1e-17 * total:
                break
        return total / tau**3 * _tau_over_sinh(tau) ** 3
    if tau > 20:
        # exponentially small corrections relative to the leading term
        return 4.0 * (tau - 1.0) * math.exp(-2.0 * tau) * (1 + (tau + 1) / (tau - 1) * math.exp(-2 * tau)) / (1 - math.exp(-2 * tau)) ** 3
    sh = math.sinh(tau)
    return (tau * math.cosh(tau) - sh) / sh**3


def _smul(a: list, b: list, n: int) -> list:
    out = [Fraction(0)] * n
    for i, ai in enumerate(a[:n]):
        if ai:
            for j, bj in enumerate(b[: n - i]):
                out[i + j] += ai * bj
    return out


def _sinv(a: list, n: int) -> list:
    out = [Fraction(0)] * n
    out[0] = 1 / a[0]
    for k in range(1, n):
        out[k] = -sum(a[j] * out[k - j] for j in range(1, min(k, len(a) - 1) + 1)) / a[0]
    return out


@lru_cache(maxsize=None)
def _sphere_series(n: int = SPHERE_SERIES_TERMS) -> np.ndarray:
    """Coefficients of h as a power series in w = cosh(tau) - 1.

    h is even and analytic in tau, hence analytic in y = tau**2 and in w.
    Built with exact rationals: the series of h in y is composed with the
    reversion of w = sum y**k / (2k)!.
    """
    fact = math.factorial
    p = [Fraction(3 * 2 ** (2 * j + 3), 4 * fact(2 * j + 3)) for j in range(n)]
    sinc = [Fraction(1, fact(2 * j + 1)) for j in range(n)]
    cosh = [Fraction(1, fact(2 * j)) for j in range(n)]
    inv = _sinv(sinc, n)
    hy = _smul(_smul(_smul(inv, inv, n), inv, n), _smul(p, cosh, n), n)
    hy = [Fraction(2, 3) * c for c in hy]
    # y(w) by fixed point y = 2 w - 2 sum_{k>=2} y**k / (2k)!
    y = [Fraction(0), Fraction(2)] + [Fraction(0)] * (n - 2)
    for _ in range(n):
        acc = [Fraction(0)] * n
        pw = _smul(y, y, n)
        for k in range(2, n):
            if not any(pw):
                break
            acc = [a + c * Fraction(1, fact(2 * k)) for a, c in zip(acc, pw)]
            pw = _smul(pw, y, n)
        y = [Fraction(0), Fraction(2)] + [-2 * a for a in acc[2:]]
    # compose h(y(w)) by Horner
    out = [Fraction(0)] * n
    for c in reversed(hy):
        out = _smul(out, y, n)
        out[0] += c
    return np.array([float(c) for c in out])


def _tau_data(t: float, s: float) -> tuple[float, float, float]:
    """(tau, sinh tau, cosh tau) for s = t cosh tau, without acosh cancellation."""
    x = s / t - 1.0
    sh = math.sqrt(x * (2.0 + x))
    return math.asinh(sh), sh, 1.0 + x


# ---------------------------------------------------------------------------
# samples and eta


def radial_sample(kind: ProfileKind, r2: float) -> RadialSample:
    _check_domain(kind, r2)
    if kind.name != "deformed":
        return RadialSample(r2=r2)
    tau, _, _ = _tau_data(kind.t, r2)
    return RadialSample(r2=r2, tau=tau, eps=kind.t / r2)


def _check_domain(kind: ProfileKind, s: float, guard: float = SINGULAR_GUARD) -> None:
    if not (math.isfinite(s) and s > 0):
        raise DomainError(f"squared radius must be positive, got {s}")
    if kind.name == "deformed" and s <= kind.t * (1.0 + guard):
        raise DomainError(f"deformed profile needs s > t(1+{guard:g}); s={s}, t={kind.t}")


def _resolved_eta(s: float) -> float:
    target = s * s

    def fn(e):
        return e * e * (e + 1.5) - target

    def dfn(e):
        return 3 * e * e + 3 * e

    upper = s ** (2.0 / 3.0) + 2.0
    return newton_bisect(fn, dfn, s ** (2.0 / 3.0), 0.0, upper, rtol=1e-15)


def _deformed_eta(t: float, s: float) -> float:
    tau, sh, ch = _tau_data(t, s)
    return (2.0 / 3.0) ** (1.0 / 3.0) * t ** (2.0 / 3.0) * p_ratio(tau) ** (1.0 / 3.0) * _tau_over_sinh(tau) * ch


def eta(kind: ProfileKind, r2: float) -> float:
    """eta = s f'(s) for the given profile at s = r2."""
    _check_domain(kind, r2)
    if kind.name == "cone":
        return r2 ** (2.0 / 3.0)
    if kind.name == "resolved":
        return _resolved_eta(r2)
    return _deformed_eta(kind.t, r2)


# ---------------------------------------------------------------------------
# potential


def _deformed_integrand(tau: float) -> float:
    # (sinh 2tau - 2tau)**(1/3) = (4/3)**(1/3) tau p(tau)**(1/3)
    return (4.0 / 3.0) ** (1.0 / 3.0) * tau * p_ratio(tau) ** (1.0 / 3.0)


def f_value(kind: ProfileKind, s: float, abstol: float = 1e-12) -> float:
    """Kahler potential f(s).

    Deformed: 2**(-1/3) t**(2/3) times the integral of (sinh 2tau - 2tau)**(1/3)
    over [0, acosh(s/t)]. Resolved: integral of eta/s from the anchor s = 1,
    so f(1) = 0.
    """
    if kind.name == "cone":
        _check_domain(kind, s)
        return 1.5 * s ** (2.0 / 3.0)
    if kind.name == "resolved":
        _check_domain(kind, s)
        return quad_checked(lambda x: _resolved_eta(x) / x, 1.0, s, abstol=abstol)
    t = kind.t
    if s == t:
        return 0.0
    _check_domain(kind, s, guard=0.0)
    tau_max, _, _ = _tau_data(t, s)
    pref = 2.0 ** (-1.0 / 3.0) * t ** (2.0 / 3.0)
    # quadrature error scales with the prefactor
    integral = quad_checked(_deformed_integrand, 0.0, tau_max, abstol=abstol / pref)
    return pref * integral


# ---------------------------------------------------------------------------
# derivatives


def _deformed_chain(t: float, s: float) -> tuple[float, float, float, float, float]:
    """eta and its first three s-derivatives, plus the ODE residual.

    (eta**3)' comes from differentiating eta**3 = s**2 h(tau) through tau, so
    it is independent of the ODE; higher derivatives of G = eta**3 follow by
    differentiating  D G' + 3 t**2 G = 2 s**4  with  D = s (s**2 - t**2).
    """
    w = s / t - 1.0
    if w < SPHERE_SERIES_W:
        return _deformed_chain_sphere(t, s, w)
    tau, sh, ch = _tau_data(t, s)
    h = h_of_tau(tau)
    # h'(tau) / sinh(tau) = h1 / (2 sinh**5)
    ts = _tau_over_sinh(tau)
    if tau < SERIES_TAU:
        hp_over_sh = _h1_series(tau) / tau**5 * ts**5 / 2.0
    else:
        hp_over_sh = h1_of_tau(tau) / (2.0 * sh**5)
    G = s * s * h
    G1 = 2.0 * s * h + s * s * hp_over_sh / t
    D = s * (s * s - t * t)
    G2 = (8 * s**3 - (3 * s * s + 2 * t * t) * G1) / D
    G3 = (24 * s * s - 6 * s * G1 - (6 * s * s + t * t) * G2) / D
    e = G ** (1.0 / 3.0)
    e1 = G1 / (3 * e * e)
    e2 = (G2 - 6 * e * e1 * e1) / (3 * e * e)
    e3 = (G3 - 6 * e1**3 - 18 * e * e1 * e2) / (3 * e * e)
    residual = abs(D * G1 + 3 * t * t * G - 2 * s**4) / (2 * s**4)
    return e, e1, e2, e3, residual


def _deformed_chain_sphere(t: float, s: float, w: float) -> tuple[float, float, float, float, float]:
    # near s = t the ODE route divides twice by s - t; differentiate
    # G = s**2 H(w) termwise instead
    coef = _sphere_series()
    poly = np.polynomial.Polynomial(coef)
    H, H1, H2, H3 = (poly.deriv(k)(w) if k else poly(w) for k in range(4))
    G = s * s * H
    G1 = 2 * s * H + s * s * H1 / t
    G2 = 2 * H + 4 * s * H1 / t + s * s * H2 / t**2
    G3 = 6 * H1 / t + 6 * s * H2 / t**2 + s * s * H3 / t**3
    e = G ** (1.0 / 3.0)
    e1 = G1 / (3 * e * e)
    e2 = (G2 - 6 * e * e1 * e1) / (3 * e * e)
    e3 = (G3 - 6 * e1**3 - 18 * e * e1 * e2) / (3 * e * e)
    residual = abs(s * (s * s - t * t) * G1 + 3 * t * t * G - 2 * s**4) / (2 * s**4)
    return e, e1, e2, e3, residual


def _resolved_chain(s: float) -> tuple[float, float, float, float, float]:
    e = _resolved_eta(s)
    p1 = 3 * e * e + 3 * e
    p2 = 6 * e + 3
    e1 = 2 * s / p1
    e2 = (2 - p2 * e1 * e1) / p1
    e3 = -(6 * e1**3 + 3 * p2 * e1 * e2) / p1
    residual = abs(e * e * (e + 1.5) - s * s) / (s * s)
    return e, e1, e2, e3, residual


def _resolved_f_derivs(s: float) -> tuple[float, float, float, float, float, float, float]:
    # y = f' solves s y**3 + 3/2 y**2 = 1; differentiating this relation
    # avoids the 1/s cancellations of the eta route at small s
    e, e1, _, _, res = _resolved_chain(s)
    y = e / s
    a = 3 * s * y * y + 3 * y
    y1 = -(y**3) / a
    a1 = 3 * y * y + 6 * s * y * y1 + 3 * y1
    y2 = -(3 * y * y * y1 + a1 * y1) / a
    a2 = 12 * y * y1 + 6 * s * y1 * y1 + 6 * s * y * y2 + 3 * y2
    y3 = -(6 * y * y1 * y1 + 3 * y * y * y2 + a2 * y1 + 2 * a1 * y2) / a
    return e, e1, y, y1, y2, y3, res


def _cone_chain(s: float) -> tuple[float, float, float, float, float]:
    e = s ** (2.0 / 3.0)
    e1 = (2.0 / 3.0) * s ** (-1.0 / 3.0)
    e2 = -(2.0 / 9.0) * s ** (-4.0 / 3.0)
    e3 = (8.0 / 27.0) * s ** (-7.0 / 3.0)
    # (eta**3)' s**3 = 2 s**4 exactly; evaluate in floating point anyway
    residual = abs(3 * e * e * e1 * s**3 - 2 * s**4) / (2 * s**4)
    return e, e1, e2, e3, residual


def _chain(kind: ProfileKind, s: float):
    if kind.name == "cone":
        return _cone_chain(s)
    if kind.name == "resolved":
        return _resolved_chain(s)
    return _deformed_chain(kind.t, s)


def _f_derivs(kind: ProfileKind, s: float) -> tuple[float, float, float, float, float, float, float]:
    """(eta, eta', f', f'', f''', f'''', residual) from eta = s f'."""
    if kind.name == "resolved":
        return _resolved_f_derivs(s)
    e, e1, e2, e3, res = _chain(kind, s)
    f1 = e / s
    f2 = (e1 - f1) / s
    f3 = (e2 - 2 * f2) / s
    f4 = (e3 - 3 * f3) / s
    return e, e1, f1, f2, f3, f4, res


def f_prime_family(kind: ProfileKind, s: float) -> tuple[float, float, float, float]:
    """(f', f'', f''', f'''') without potential quadrature or cross-checks."""
    _check_domain(kind, s)
    _, _, f1, f2, f3, f4, _ = _f_derivs(kind, s)
    return f1, f2, f3, f4


def _fd_step(kind: ProfileKind, s: float) -> float:
    h = FD_REL_STEP * s
    if kind.name == "deformed":
        h = min(h, 0.25 * (s - kind.t))
    else:
        h = min(h, 0.25 * s)
    return h


def derivatives(kind: ProfileKind, s: float, check: bool = True) -> ProfileEval:
    """f and its first four derivatives, eta, eta' and the ODE residual.

    With ``check`` every analytic derivative is compared to a
    Richardson-extrapolated central difference of the next lower one; a
    relative mismatch above 1e-6 raises VerificationError.
    """
    _check_domain(kind, s)
    e, e1, f1, f2, f3, f4, res = _f_derivs(kind, s)
    f0 = f_value(kind, s)
    out = ProfileEval(kind, s, e, e1, f0, f1, f2, f3, f4, res)
    if check:
        _cross_check(kind, s, out)
    return out


def _cross_check(kind: ProfileKind, s: float, ev: ProfileEval) -> None:
    h = _fd_step(kind, s)
    lower = [
        lambda x: f_value(kind, x),
        lambda x: _f_derivs(kind, x)[2],
        lambda x: _f_derivs(kind, x)[3],
        lambda x: _f_derivs(kind, x)[4],
    ]
    analytic = [ev.f1, ev.f2, ev.f3, ev.f4]
    lower_vals = [ev.f, ev.f1, ev.f2, ev.f3]
    for k in range(4):
        fd = central_diff(lower[k], s, h, levels=3)
        # a derivative passing through zero is judged against the scale of
        # the function it differentiates
        scale = max(abs(analytic[k]), abs(lower_vals[k]) / s)
        if abs(fd - analytic[k]) > FD_MISMATCH * scale:
            raise VerificationError(
                f"{kind}: f^({k + 1})({s}) analytic {analytic[k]!r} vs finite difference {fd!r}"
            )


def ode_residual_fd(kind: ProfileKind, s: float) -> float:
    """Ricci-flatness residual with (eta**3)' from central differences of eta."""
    _check_domain(kind, s)
    t = kind.t
    G = eta(kind, s) ** 3
    G1 = central_diff(lambda x: eta(kind, x) ** 3, s, _fd_step(kind, s), levels=3)
    return abs(s * (s * s - t * t) * G1 + 3 * t * t * G - 2 * s**4) / (2 * s**4)


# ---------------------------------------------------------------------------
# appendix monotonicity


def monotonicity_witness(t: float, tau_grid: Sequence[float]) -> MonotoneWitness:
    """Evaluate h = eta**3/s**2 and h1 along a tau grid and record whether h
    is strictly increasing and h1 positive. ``t`` only fixes the profile;
    h depends on tau alone.

    Past tau ~ 18 consecutive values of h agree to double precision, so
    monotonicity is decided on the deficit 1 - h, which keeps full
    relative accuracy.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    taus = [float(x) for x in tau_grid]
    if any(x <= 0 for x in taus):
        raise DomainError("tau grid must be positive")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise DomainError("tau grid must be strictly increasing")
    hv = [h_of_tau(x) for x in taus]
    h1v = [h1_of_tau(x) for x in taus]
    dv = [h_deficit(x) for x in taus]
    return MonotoneWitness(
        tau_grid=taus,
        h_values=hv,
        h1_values=h1v,
        h_deficits=dv,
        increasing=all(b < a for a, b in zip(dv, dv[1:])),
        h1_positive=all(v > 0 for v in h1v),
    )


# ---------------------------------------------------------------------------
# small-t convergence


def g_u(u: float, s: float) -> float:
    """g_u(s) with f_u'(s) = s**(-1/3) g_u(s)."""
    if u == 0:
        return 1.0
    q = (u / s) ** 2
    root = math.sqrt(1.0 - q)
    return (root - q * math.acosh(s / u)) ** (1.0 / 3.0) / root


def _cone_derivative(k: int, s: float) -> float:
    return (1.5 * s ** (2 / 3), s ** (-1 / 3), -(1 / 3) * s ** (-4 / 3), (4 / 9) * s ** (-7 / 3), -(28 / 27) * s ** (-10 / 3))[k]


def profile_derivative(kind: ProfileKind, k: int, s: float) -> float:
    """k-th derivative of f (k = 0..4) with no cross-checks."""
    if k == 0:
        return f_value(kind, s)
    return f_prime_family(kind, s)[k - 1]


@dataclass
class ConvergenceTable:
    k: int
    delta: float
    t_list: list[float]
    sup_errors: list[float]
    decreasing: bool


def convergence_table(k: int, delta: float, t_list: Sequence[float], grid_size: int = 200) -> ConvergenceTable:
    """sup over s in [delta, 1] of |f_t^(k)(s) - f_0^(k)(s)| for each t."""
    if k not in (0, 1, 2):
        raise DomainError("k must be 0, 1 or 2")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    ts = [float(x) for x in t_list]
    if any(not 0 <= x < delta for x in ts):
        raise DomainError("every t must satisfy 0 <= t < delta")
    grid = np.linspace(delta, 1.0, grid_size)
    errs = []
    for t in ts:
        if t == 0:
            errs.append(0.0)
            continue
        kind = ProfileKind.deformed(t)
        errs.append(max(abs(profile_derivative(kind, k, s) - _cone_derivative(k, s)) for s in grid))
    return ConvergenceTable(
        k=k,
        delta=delta,
        t_list=ts,
        sup_errors=errs,
        decreasing=_strictly_decreasing_in_t(ts, errs),
    )


def _strictly_decreasing_in_t(ts: list[float], errs: list[float]) -> bool:
    pairs = sorted(zip(ts, errs))
    return all(e2 > e1 for (_, e1), (_, e2) in zip(pairs, pairs[1:]))


@dataclass
class RatioReport:
    delta_prime: float
    delta: float
    t: float
    holds: bool
    first_ratio: tuple[float, float]
    second_ratio: tuple[float, float]
    alpha_estimate: float
    failure_point: float | None = None


def _ratios(t: float, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if t == 0:
        return np.ones_like(grid), np.ones_like(grid)
    kind = ProfileKind.deformed(t)
    r1, r2 = [], []
    for s in grid:
        f1, f2, _, _ = f_prime_family(kind, s)
        r1.append(f1 / _cone_derivative(1, s))
        r2.append(f2 / _cone_derivative(2, s))
    return np.array(r1), np.array(r2)


def _bands_hold(r1: np.ndarray, r2: np.ndarray) -> bool:
    return bool(np.all((r1 >= 0.5) & (r1 <= 2)) and np.all((r2 >= 0.5) & (r2 <= 2)))


def ratio_bounds(delta_prime: float, delta: float, t: float, grid_size: int = 200, bisection_steps: int = 40) -> RatioReport:
    """Check 1/2 <= f_t'/f_0' <= 2 and 1/2 <= f_t''/f_0'' <= 2 on
    [delta_prime, delta], and estimate the largest admissible t by bisection."""
    if not 0 < delta_prime < delta < 0.25:
        raise DomainError("need 0 < delta_prime < delta < 1/4")
    if not 0 <= t < delta_prime:
        raise DomainError("need 0 <= t < delta_prime")
    grid = np.linspace(delta_prime, delta, grid_size)
    r1, r2 = _ratios(t, grid)
    holds = _bands_hold(r1, r2)
    failure = None
    if not holds:
        bad = ~((r1 >= 0.5) & (r1 <= 2) & (r2 >= 0.5) & (r2 <= 2))
        failure = float(grid[np.argmax(bad)])

    top = delta_prime * (1 - 1e-9)
    if _bands_hold(*_ratios(top, grid)):
        alpha = top
    else:
        lo, hi = 0.0, top
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            if _bands_hold(*_ratios(mid, grid)):
                lo = mid
            else:
                hi = mid
        alpha = lo
    return RatioReport(
        delta_prime=delta_prime,
        delta=delta,
        t=t,
        holds=holds,
        first_ratio=(float(r1.min()), float(r1.max())),
        second_ratio=(float(r2.min()), float(r2.max())),
        alpha_estimate=alpha,
        failure_point=failure,
    )


# ---------------------------------------------------------------------------
# asymptotic constants

# |f^(k)| <~ r**(-beta_k) (1 - eps)**(-gamma_k), r = sqrt(s)
ASYMPTOTIC_EXPONENTS = ((2 / 3, 0), (8 / 3, 0), (14 / 3, 1), (20 / 3, 2))


@dataclass
class AsymptoticConstants:
    t: float
    constants: list[float] = field(default_factory=list)
    eta_prime_scaled_min: float = math.nan
    eta_prime_scaled_max: float = math.nan

    @property
    def eta_prime_in_unit_interval(self) -> bool:
        return 0 < self.eta_prime_scaled_min and self.eta_prime_scaled_max < 1


def asymptotic_constants(t: float, r2_grid: Sequence[float]) -> AsymptoticConstants:
    """Measure sup |f^(k)| r**beta_k (1-eps)**gamma_k for k = 1..4 and the
    range of r**(2/3) eta'."""
    kind = ProfileKind.deformed(t)
    consts = [0.0] * 4
    lo, hi = math.inf, -math.inf
    for s in r2_grid:
        eps = t / s
        if eps > 1 - 1e-3:
            raise DomainError(f"grid point s={s} has eps > 1 - 1e-3")
        e, e1, f1, f2, f3, f4, _ = _f_derivs(kind, s)
        for k, (fk, (beta, gamma)) in enumerate(zip((f1, f2, f3, f4), ASYMPTOTIC_EXPONENTS)):
            consts[k] = max(consts[k], abs(fk) * s ** (beta / 2) * (1 - eps) ** gamma)
        scaled = s ** (1.0 / 3.0) * e1
        lo, hi = min(lo, scaled), max(hi, scaled)
    return AsymptoticConstants(t=t, constants=consts, eta_prime_scaled_min=lo, eta_prime_scaled_max=hi)
