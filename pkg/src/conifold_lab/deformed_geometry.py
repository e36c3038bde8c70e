"""Local geometry of the Ricci-flat metric on the deformed conifold.

V_t = {w in C^4 : sum w_i**2 = t}, r**2 = sum |w_i|**2 and the metric is
i ddbar f_t(r**2). By homogeneity everything is computed at the point

    q = (sqrt((r2 - t)/2), i sqrt((r2 - t)/2), 0, sqrt(t))

in holomorphic coordinates z = (z1, z2, z3) centred at q in which the metric
is the identity. (w1, w2, w3) are coordinates near q with w4 solved from the
defining equation; z is a fixed linear change of (w1, w2, w3).

Partial derivatives of r**2 follow a compact pattern. With g = w4 as a
holomorphic function of z,

    r**2 = sum_{i<=3} w_i conj(w_i) + g conj(g),

so every mixed derivative with at least one barred and one unbarred index
beyond first order is g_alpha conj(g_beta). The printed closed forms are
evaluated here and checked against a finite-difference oracle that only
uses the chart map.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from conifold_lab import radial_profiles as rp
from conifold_lab.errors import DomainError, VerificationError

CONSTRAINT_TOL = 1e-14
METRIC_TOL = 1e-10
ORACLE_TOL = {1: 1e-5, 2: 1e-5, 3: 1e-3, 4: 1e-3}
# curvature components below this fraction of max|R| are compared absolutely
CURVATURE_FLOOR = 1e-4
CURVATURE_GUARD = 1e-3
CURVATURE_ORACLE_TOL = 1e-3
SYMMETRY_TOL = 1e-10
RICCI_TOL = 1e-8

# index slots: (coordinate, barred)
Slot = tuple[int, bool]


def _check_t_r2(t: float, r2: float, strict: bool = True) -> None:
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be positive, got {t}")
    if not math.isfinite(r2):
        raise DomainError(f"r2 must be finite, got {r2}")
    if r2 < t or (strict and r2 == t):
        raise DomainError(f"need r2 > t, got r2={r2}, t={t}")


def eta_t(t: float, r2: float) -> float:
    return rp.eta(rp.ProfileKind.deformed(t), r2)


# ---------------------------------------------------------------------------
# the point q and the chart


@dataclass(frozen=True)
class QPoint:
    t: float
    r2: float
    w: np.ndarray

    @property
    def constraint_residuals(self) -> tuple[float, float]:
        """Relative residuals of sum w_i**2 = t and sum |w_i|**2 = r2."""
        quad = abs(np.sum(self.w**2) - self.t) / self.t
        norm = abs(np.sum(np.abs(self.w) ** 2) - self.r2) / self.r2
        return float(quad), float(norm)


def q_point(t: float, r2: float) -> QPoint:
    """The reference point q. r2 = t is accepted as the limiting point
    (0, 0, 0, sqrt(t)) on the vanishing sphere."""
    _check_t_r2(t, r2, strict=False)
    a = math.sqrt((r2 - t) / 2.0)
    w = np.array([a, 1j * a, 0.0, math.sqrt(t)], dtype=complex)
    q = QPoint(t=float(t), r2=float(r2), w=w)
    res = q.constraint_residuals
    if max(res) > CONSTRAINT_TOL:
        raise VerificationError(f"q constraint residuals {res} exceed {CONSTRAINT_TOL}")
    return q


@dataclass(frozen=True)
class ChartMap:
    """z -> (w1, w2, w3) near q: w = shear(u), z_k = scale_k u_k."""

    t: float
    r2: float
    eta: float
    scale1: float
    scale2: float
    scale3: float
    shear: complex  # w1 = shear_u1 * u1 + shear * u2
    shear_u1: float

    @property
    def jacobian(self) -> np.ndarray:
        """J[i, a] = d w_i / d z_a, i, a in 0..2."""
        J = np.zeros((3, 3), dtype=complex)
        J[0, 0] = self.shear_u1 / self.scale1
        J[0, 1] = self.shear / self.scale2
        J[1, 1] = 1.0 / self.scale2
        J[2, 2] = 1.0 / self.scale3
        return J

    @property
    def q(self) -> QPoint:
        return q_point(self.t, self.r2)

    def w_of(self, z: np.ndarray) -> np.ndarray:
        """Points of V_t for chart offsets z (shape (..., 3)), on the w4 branch
        through +sqrt(t)."""
        z = np.asarray(z, dtype=complex)
        w3 = self.q.w[:3] + z @ self.jacobian.T
        p = self.t - np.sum(w3**2, axis=-1)
        if np.any(p.real <= 0):
            raise DomainError("chart offset leaves the w4 branch through +sqrt(t)")
        return np.concatenate([w3, np.sqrt(p)[..., None]], axis=-1)

    def r2_of(self, z: np.ndarray) -> np.ndarray:
        w = self.w_of(z)
        return np.sum(np.abs(w) ** 2, axis=-1)

    def axis_radii(self) -> np.ndarray:
        """Per-axis radii rho_k with 2|b_k| rho_k + |J e_k|**2 rho_k**2 = t,
        b = J^T w(q): along axis k, |z_k| < rho_k keeps the change of w4**2
        below t, hence on the branch through +sqrt(t). FD steps are a small
        fraction of rho_k; w_of raises if a stencil point leaves the branch."""
        J = self.jacobian
        b = np.abs(J.T @ self.q.w[:3])
        c = np.sum(np.abs(J) ** 2, axis=0)
        return (-b + np.sqrt(b * b + c * self.t)) / c

    def r2_jet(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """r**2, its z-gradient and its ddbar matrix at chart offsets z,
        from exact differentiation of w4 (no table involved)."""
        J = self.jacobian
        w = self.w_of(z)
        gw = -(w[..., :3] @ J) / w[..., 3:4]  # d w4 / d z_a
        grad = np.conj(w[..., :3]) @ J + gw * np.conj(w[..., 3:4])
        JJ = J.T @ J.conj()
        hess = JJ + gw[..., :, None] * np.conj(gw[..., None, :])
        return np.sum(np.abs(w) ** 2, axis=-1), grad, hess


def chart_map(t: float, r2: float) -> ChartMap:
    _check_t_r2(t, r2)
    e = eta_t(t, r2)
    s1 = math.sqrt(2 * t * e / (r2 * (r2 + t)))
    s2 = math.sqrt(4 * r2**2 / (3 * e**2 * (r2 + t)))
    s3 = math.sqrt(e / r2)
    chart = ChartMap(
        t=float(t), r2=float(r2), eta=e, scale1=s1, scale2=s2, scale3=s3,
        shear=-1j * (r2 - t) / (r2 + t), shear_u1=2 * t / (r2 + t),
    )
    if not all(math.isfinite(s) and s > 0 for s in (s1, s2, s3)):
        raise DomainError(f"chart scales degenerate at t={t}, r2={r2}")
    return chart


# ---------------------------------------------------------------------------
# partial derivative table

# key: (sorted unbarred indices, sorted barred indices), 0-based
Key = tuple[tuple[int, ...], tuple[int, ...]]


def _key(slots: Sequence[Slot]) -> Key:
    hol = tuple(sorted(i for i, b in slots if not b))
    anti = tuple(sorted(i for i, b in slots if b))
    return hol, anti


@dataclass
class PartialTable:
    """Nonzero partial derivatives of r**2 at q in z-coordinates.

    Stored entries cover unbarred/barred patterns (1,0), (2,0), (1,1),
    (2,1) and (2,2); the mirrored patterns follow from reality of r**2.
    Anything not stored vanishes.
    """

    t: float
    r2: float
    eta: float
    entries: dict[Key, complex] = field(default_factory=dict)

    def get(self, slots: Sequence[Slot]) -> complex:
        hol, anti = _key(slots)
        if (hol, anti) in self.entries:
            return self.entries[(hol, anti)]
        if (anti, hol) in self.entries:
            return complex(np.conj(self.entries[(anti, hol)]))
        return 0.0j

    @property
    def order1(self) -> np.ndarray:
        return np.array([self.get([(i, False)]) for i in range(3)])

    @property
    def mixed2(self) -> np.ndarray:
        return np.array([[self.get([(i, False), (j, True)]) for j in range(3)] for i in range(3)])

    @property
    def hol2(self) -> np.ndarray:
        return np.array([[self.get([(i, False), (j, False)]) for j in range(3)] for i in range(3)])

    def keys_by_order(self) -> dict[int, list[Key]]:
        """Every (pattern-allowed) key of each order, zero or not."""
        out: dict[int, list[Key]] = {1: [], 2: [], 3: [], 4: []}
        for nh, na in ((1, 0), (2, 0), (1, 1), (2, 1), (2, 2)):
            for hol in itertools.combinations_with_replacement(range(3), nh):
                for anti in itertools.combinations_with_replacement(range(3), na):
                    out[nh + na].append((hol, anti))
        return out


def _printed_entries(t: float, r2: float, e: float) -> dict[Key, complex]:
    eps = t / r2
    r = math.sqrt(r2)
    ratio = math.sqrt((1 - eps) / (1 + eps))
    s6 = math.sqrt(6.0)
    d2 = -0.5j * s6 * math.sqrt(r2 - t) * math.sqrt(r2 + t) * e / r2
    a111 = r**3 * ratio / (math.sqrt(t) * e**1.5)
    a121 = -0.5j * s6 * ratio
    a212 = 1.5 * math.sqrt(t) * e**1.5 * ratio / r**3
    a222 = -0.75j * s6 * t * e**3 * ratio / r2**3
    big = r2**2 / (t * e * e)
    mid = 3 * e / (2 * r2)
    return {
        ((1,), ()): d2,
        ((0,), (0,)): r2 / e,
        ((1,), (1,)): 1.5 * e * e / r2,
        ((2,), (2,)): r2 / e,
        ((0, 0), ()): -r2 / e,
        ((2, 2), ()): -r2 / e,
        ((1, 1), ()): -1.5 * e * e / r2 * eps,
        # (r2)_{i jbar k}: unbarred {i, k}, barred {j}
        ((0, 0), (0,)): a111,
        ((0, 0), (1,)): a121,
        ((1, 1), (0,)): a212,
        ((1, 1), (1,)): a222,
        ((2, 2), (0,)): a111,
        ((2, 2), (1,)): a121,
        # (r2)_{i jbar k lbar}: unbarred {i, k}, barred {j, l}
        ((0, 0), (0, 0)): big,
        ((0, 0), (1, 1)): mid,
        ((1, 1), (0, 0)): mid,
        ((1, 1), (1, 1)): 9 * t * e**4 / (4 * r2**4),
        ((0, 0), (2, 2)): big,
        ((2, 2), (0, 0)): big,
        ((2, 2), (2, 2)): big,
        ((1, 1), (2, 2)): mid,
        ((2, 2), (1, 1)): mid,
    }


# -- finite-difference oracle ------------------------------------------------


def _wirtinger_stencil(slots: Sequence[Slot], h, points: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Shifts (m, 3) and complex weights (m,) of the product of central
    difference Wirtinger operators d = (Dx - i Dy)/2, dbar = (Dx + i Dy)/2.

    ``h`` is a step per axis (or one step for all). ``points`` = 3 gives
    the O(h**2) rule, 5 the O(h**4) rule.
    """
    h = np.broadcast_to(np.asarray(h, dtype=float), (3,))
    if points == 3:
        base = [(1.0, 0.5), (-1.0, -0.5)]
    elif points == 5:
        base = [(1.0, 8 / 12), (-1.0, -8 / 12), (2.0, -1 / 12), (-2.0, 1 / 12)]
    else:
        raise ValueError("points must be 3 or 5")
    factors = []
    for k, bar in slots:
        opts = []
        for direction, dcoef in ((1.0, 0.5), (1j, (0.5j if bar else -0.5j))):
            for step, wgt in base:
                shift = np.zeros(3, dtype=complex)
                shift[k] = direction * step * h[k]
                opts.append((shift, dcoef * wgt / h[k]))
        factors.append(opts)
    acc: dict[tuple, list] = {}
    for combo in itertools.product(*factors):
        shift = sum((c[0] for c in combo), np.zeros(3, dtype=complex))
        wgt = np.prod([c[1] for c in combo])
        key = tuple(np.round(np.concatenate([shift.real / h, shift.imag / h]) * 4).astype(int))
        if key in acc:
            acc[key][1] += wgt
        else:
            acc[key] = [shift, wgt]
    shifts = np.array([v[0] for v in acc.values()])
    weights = np.array([v[1] for v in acc.values()])
    return shifts, weights


def _richardson(values: Sequence, order: int = 2):
    """Richardson on A(h), A(h/2), ... with error series in h**order."""
    table = list(values)
    j = 1
    while len(table) > 1:
        fac = 2.0 ** (order * j)
        table = [(fac * table[i + 1] - table[i]) / (fac - 1) for i in range(len(table) - 1)]
        j += 1
    return table[0]


def fd_partial(chart: ChartMap, slots: Sequence[Slot], h=None, levels: int = 3) -> tuple[complex, float]:
    """Partial derivative of r**2 at q from r**2 values only, with an error
    estimate (Richardson change plus a rounding bound)."""
    if h is None:
        h = 0.1 * chart.axis_radii()
    vals = []
    rounding = 0.0
    for lev in range(levels):
        shifts, weights = _wirtinger_stencil(slots, np.asarray(h) / 2**lev)
        r2 = chart.r2_of(shifts)
        vals.append(complex(np.sum(weights * r2)))
        rounding = 4 * np.finfo(float).eps * float(np.sum(np.abs(weights) * np.abs(r2)))
    best = complex(_richardson(vals))
    trunc = abs(best - complex(_richardson(vals[:-1]))) if levels > 1 else 0.0
    return best, trunc + rounding


@dataclass
class OracleReport:
    compared: int
    worst: float
    mismatches: list[tuple[Key, complex, complex]]


def verify_table(table: PartialTable, chart: ChartMap | None = None) -> OracleReport:
    """Compare every allowed key of the table (zeros included) against the
    FD oracle. An entry passes when |fd - ref| <= tol |ref| + noise, where
    noise is the oracle's own error estimate; ``worst`` is the largest
    relative error among entries whose size exceeds that noise."""
    chart = chart or chart_map(table.t, table.r2)
    worst = 0.0
    bad = []
    n = 0
    for order, keys in table.keys_by_order().items():
        for hol, anti in keys:
            slots = [(i, False) for i in hol] + [(j, True) for j in anti]
            fd, noise = fd_partial(chart, slots)
            ref = table.get(slots)
            diff = abs(fd - ref)
            n += 1
            if abs(ref) > noise / ORACLE_TOL[order]:
                worst = max(worst, diff / abs(ref))
            if diff > ORACLE_TOL[order] * abs(ref) + noise:
                bad.append(((hol, anti), ref, fd))
    return OracleReport(compared=n, worst=worst, mismatches=bad)


def r2_partials(t: float, r2: float, verify: bool = True) -> PartialTable:
    """Printed closed forms of the partials of r**2 at q, optionally checked
    against the finite-difference chart oracle."""
    _check_t_r2(t, r2)
    e = eta_t(t, r2)
    table = PartialTable(t=float(t), r2=float(r2), eta=e, entries=_printed_entries(t, r2, e))
    if verify:
        rep = verify_table(table)
        if rep.mismatches:
            key, ref, fd = rep.mismatches[0]
            raise VerificationError(
                f"{len(rep.mismatches)} table entries disagree with the FD oracle; "
                f"first {key}: table {ref:.6e}, oracle {fd:.6e}"
            )
    return table


# ---------------------------------------------------------------------------
# metric at q


@dataclass
class MetricAtQ:
    g: np.ndarray
    ddbar_r2: np.ndarray
    dr2_dbar_r2: np.ndarray
    ddbar_printed: np.ndarray
    dr2_dbar_printed: np.ndarray
    det_ddbar: float


def _f_family(t: float, r2: float) -> tuple[float, float, float, float]:
    return rp.f_prime_family(rp.ProfileKind.deformed(t), r2)


def metric_at_q(t: float, r2: float, table: PartialTable | None = None) -> MetricAtQ:
    table = table or r2_partials(t, r2, verify=False)
    f1, f2, _, _ = _f_family(t, r2)
    d = table.order1
    ddbar = table.mixed2
    drdr = np.outer(d, np.conj(d))
    g = f1 * ddbar + f2 * drdr
    e = table.eta
    x = e**3 / r2**2
    pref = r2 ** (1 / 3) * (1 / x) ** (1 / 3)
    ddbar_printed = np.diag([pref, pref * 1.5 * x, pref]).astype(complex)
    dd_printed = np.zeros((3, 3), dtype=complex)
    dd_printed[1, 1] = 1.5 * r2 ** (4 / 3) * x ** (2 / 3) * (1 - t * t / r2**2)
    err = np.max(np.abs(g - np.eye(3)))
    if err > METRIC_TOL:
        raise VerificationError(f"metric at q deviates from identity by {err:.3e}")
    for got, want, name in ((ddbar, ddbar_printed, "ddbar r2"), (drdr, dd_printed, "dr2 ^ dbar r2")):
        scale = np.max(np.abs(want))
        if np.max(np.abs(got - want)) > METRIC_TOL * scale:
            raise VerificationError(f"{name} at q does not match its diagonal closed form")
    return MetricAtQ(
        g=g, ddbar_r2=ddbar, dr2_dbar_r2=drdr, ddbar_printed=ddbar_printed,
        dr2_dbar_printed=dd_printed, det_ddbar=float(np.linalg.det(ddbar).real),
    )


# ---------------------------------------------------------------------------
# curvature


def _set_partitions(items: list) -> list[list[list]]:
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for part in _set_partitions(rest):
        out.append([[first]] + part)
        for i in range(len(part)):
            out.append(part[:i] + [[first] + part[i]] + part[i + 1:])
    return out


_PARTITIONS = {n: _set_partitions(list(range(n))) for n in range(1, 5)}


def f_partial(table: PartialTable, fders: Sequence[float], slots: Sequence[Slot]) -> complex:
    """Partial derivative of f(r**2) by Faa di Bruno over set partitions:
    sum_pi f^(|pi|) prod_{B in pi} (r2)_B."""
    total = 0.0j
    for part in _PARTITIONS[len(slots)]:
        term = fders[len(part) - 1]
        for block in part:
            term = term * table.get([slots[i] for i in block])
            if term == 0:
                break
        total += term
    return total


@dataclass
class CurvatureTensor:
    t: float
    r2: float
    R: np.ndarray  # R[i, j, k, l] = R_{i jbar k lbar}

    @property
    def scale(self) -> float:
        """r**(-4/3), the natural size of the curvature."""
        return self.r2 ** (-2 / 3)

    def symmetry_defect(self) -> float:
        R = self.R
        m = np.max(np.abs(R))
        d1 = np.max(np.abs(R - R.transpose(2, 1, 0, 3)))
        d2 = np.max(np.abs(R - R.transpose(0, 3, 2, 1)))
        d3 = np.max(np.abs(np.conj(R) - R.transpose(1, 0, 3, 2)))
        return float(max(d1, d2, d3) / m)

    def ricci(self) -> np.ndarray:
        """Ric_{k lbar} = sum_i R_{i ibar k lbar} (metric is the identity at q)."""
        return np.einsum("iikl->kl", self.R)

    def ricci_defect(self) -> float:
        return float(np.max(np.abs(self.ricci())) / self.scale)

    def sup_scaled(self) -> float:
        """max |R_{i jbar k lbar}| r**(4/3)."""
        return float(np.max(np.abs(self.R)) / self.scale)


def curvature_from_table(table: PartialTable) -> np.ndarray:
    fders = _f_family(table.t, table.r2)
    R = np.zeros((3, 3, 3, 3), dtype=complex)
    # (f)_{i k qbar} and (f)_{q jbar lbar}
    f3a = np.array([[[f_partial(table, fders, [(i, False), (k, False), (q, True)])
                      for q in range(3)] for k in range(3)] for i in range(3)])
    for i, j, k, l in itertools.product(range(3), repeat=4):
        f4 = f_partial(table, fders, [(i, False), (j, True), (k, False), (l, True)])
        prod = sum(f3a[i, k, q] * np.conj(f3a[j, l, q]) for q in range(3))
        R[i, j, k, l] = -f4 + prod
    return R


def _chart_metric(chart: ChartMap, z: np.ndarray) -> np.ndarray:
    """Metric g_{a bbar}(z) = f' (r2)_{a bbar} + f'' (r2)_a (r2)_bbar at chart
    offsets z, built from the exact chart jet (independent of the table)."""
    r2, grad, hess = chart.r2_jet(z)
    out = np.empty(hess.shape, dtype=complex)
    for m in range(len(r2)):
        f1, f2, _, _ = _f_family(chart.t, float(r2[m]))
        out[m] = f1 * hess[m] + f2 * np.outer(grad[m], np.conj(grad[m]))
    return out


def curvature_fd_oracle(chart: ChartMap, h=None) -> np.ndarray:
    """R_{i jbar k lbar} = -d_k d_lbar g_{i jbar} + g^{qbar p} d_k g_{i qbar} d_lbar g_{p jbar}
    with the metric differentiated on 5-point stencils, steps h and h/2
    combined by one Richardson step."""
    if h is None:
        h = 0.025 * chart.axis_radii()
    h = np.asarray(h, dtype=float)
    coarse = _curvature_fd(chart, h)
    fine = _curvature_fd(chart, h / 2)
    return (16 * fine - coarse) / 15


def _curvature_fd(chart: ChartMap, h: np.ndarray) -> np.ndarray:
    def apply(slots):
        shifts, weights = _wirtinger_stencil(slots, h, points=5)
        return np.einsum("m,mab->ab", weights, _chart_metric(chart, shifts))

    g0 = _chart_metric(chart, np.zeros((1, 3)))[0]
    ginv = np.linalg.inv(g0)  # ginv[b, a] = g^{bbar a}
    dg = np.array([apply([(k, False)]) for k in range(3)])  # dg[k, i, j] = d_k g_{i jbar}
    dbg = np.array([apply([(l, True)]) for l in range(3)])  # dbg[l, i, j] = d_lbar g_{i jbar}
    ddg = np.array([[apply([(k, False), (l, True)]) for l in range(3)] for k in range(3)])
    R = -np.einsum("klij->ijkl", ddg)
    R += np.einsum("qp,kiq,lpj->ijkl", ginv.T, dg, dbg)
    return R


@dataclass
class CurvatureCheck:
    oracle_worst: float
    symmetry_defect: float
    ricci_defect: float
    combined_identity_error: float


def combined_identity(table: PartialTable) -> tuple[float, float]:
    """(lhs, rhs) of -f'(r2)_{1 3bar 1 3bar} + f'^2 (r2)_{1 1 1bar}(r2)_{3bar 3bar 1}
    = -2 r2 / (eta (r2 + t))."""
    f1 = table.eta / table.r2
    lhs = -f1 * table.get([(0, False), (2, True), (0, False), (2, True)]) + f1**2 * (
        table.get([(0, False), (0, False), (0, True)]) * table.get([(2, True), (2, True), (0, False)])
    )
    rhs = -2 * table.r2 / (table.eta * (table.r2 + table.t))
    return float(lhs.real), rhs


def curvature_at_q(t: float, r2: float, check: bool = True) -> CurvatureTensor:
    """All 81 components R_{i jbar k lbar} at q from the Faa di Bruno
    expansion over the partial table. With ``check`` the tensor is compared
    with the FD metric oracle and the Kahler/Ricci identities."""
    _check_t_r2(t, r2)
    if r2 <= t * (1 + CURVATURE_GUARD):
        raise DomainError(f"curvature needs r2 > t(1 + {CURVATURE_GUARD:g}); r2/t = {r2 / t}")
    table = r2_partials(t, r2, verify=check)
    curv = CurvatureTensor(t=float(t), r2=float(r2), R=curvature_from_table(table))
    if check:
        rep = check_curvature(curv, table)
        if rep.oracle_worst > CURVATURE_ORACLE_TOL:
            raise VerificationError(f"curvature disagrees with the FD oracle ({rep.oracle_worst:.3e})")
        if rep.symmetry_defect > SYMMETRY_TOL:
            raise VerificationError(f"Kahler symmetries violated ({rep.symmetry_defect:.3e})")
        if rep.ricci_defect > RICCI_TOL:
            raise VerificationError(f"Ricci trace {rep.ricci_defect:.3e} r^(-4/3) not small")
        if rep.combined_identity_error > METRIC_TOL:
            raise VerificationError("the R_{1 3bar 1 3bar} combined identity fails")
    return curv


def oracle_discrepancy(R: np.ndarray, R_fd: np.ndarray, floor: float = CURVATURE_FLOOR) -> float:
    """Worst relative difference over components above floor * max|R_fd|."""
    scale = np.max(np.abs(R_fd))
    mask = np.abs(R_fd) > floor * scale
    rel = np.abs(R - R_fd)[mask] / np.abs(R_fd)[mask]
    # below the floor only absolute smallness is required
    small = np.max(np.abs(R - R_fd)[~mask], initial=0.0) / scale
    return float(max(np.max(rel, initial=0.0), small))


def check_curvature(curv: CurvatureTensor, table: PartialTable | None = None) -> CurvatureCheck:
    table = table or r2_partials(curv.t, curv.r2, verify=False)
    R_fd = curvature_fd_oracle(chart_map(curv.t, curv.r2))
    lhs, rhs = combined_identity(table)
    return CurvatureCheck(
        oracle_worst=oracle_discrepancy(curv.R, R_fd),
        symmetry_defect=curv.symmetry_defect(),
        ricci_defect=curv.ricci_defect(),
        combined_identity_error=abs(lhs - rhs) / abs(rhs),
    )


@dataclass
class CurvatureSup:
    t_list: list[float]
    ratios: list[float]
    values: np.ndarray  # values[i, j] = sup|R| r^(4/3) at t_list[i], r2 = ratios[j] t
    C_hat: float


def curvature_sup(
    t_list: Sequence[float],
    ratios: Sequence[float],
    mapper: Callable = map,
) -> CurvatureSup:
    """Scaled curvature sup over a (t, r2/t) grid. ``mapper`` may be a
    parallel map."""
    pairs = [(t, ra * t) for t in t_list for ra in ratios]
    vals = list(mapper(_scaled_sup, pairs))
    arr = np.array(vals).reshape(len(t_list), len(ratios))
    return CurvatureSup(list(t_list), list(ratios), arr, float(arr.max()))


def _scaled_sup(pair: tuple[float, float]) -> float:
    t, r2 = pair
    return curvature_at_q(t, r2, check=False).sup_scaled()


def ratio_grid(lo: float = 1.00101, hi: float = 1e3, per_decade: int = 12) -> np.ndarray:
    """Geometric grid of r2/t, denser near the vanishing sphere."""
    n = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    # spread in log(ratio - 1) so the approach to 1 is resolved
    x = np.geomspace(lo - 1, hi - 1, n)
    return 1 + x


# ---------------------------------------------------------------------------
# volume and gradient comparison


@dataclass
class Comparison:
    vol_ratio: float
    grad_const: float


def volume_and_gradient_comparison(t: float, r2: float) -> Comparison:
    """vol_co / vol_e and the best C in |grad f|_e**2 <= C r**(-2/3) |grad f|_co**2."""
    table = r2_partials(t, r2, verify=False)
    m = metric_at_q(t, r2, table)
    g_e = m.ddbar_r2
    vol_ratio = float((np.linalg.det(m.g) / np.linalg.det(g_e)).real)
    want = (2.0 / 3.0) / r2
    if abs(vol_ratio - want) > METRIC_TOL * want:
        raise VerificationError(f"vol ratio {vol_ratio!r} != (2/3) r^-2 = {want!r}")
    a = np.linalg.inv(g_e)
    b = r2 ** (-1.0 / 3.0) * np.linalg.inv(m.g)
    a = 0.5 * (a + a.conj().T)
    b = 0.5 * (b + b.conj().T)
    grad_const = float(linalg.eigh(a, b, eigvals_only=True)[-1])
    return Comparison(vol_ratio=vol_ratio, grad_const=grad_const)


# ---------------------------------------------------------------------------
# S^3 limit


@dataclass
class S3Limit:
    t: float
    epsilons: list[float]
    eigenvalues: np.ndarray  # (len(eps), 5), ascending
    limit: float
    limit_spread: float
    expected: float


def s3_limit_value(t: float) -> float:
    return 0.5 * (2 * t * t / 3) ** (1 / 3)


def tangent_eigenvalues(t: float, r2: float) -> np.ndarray:
    """Eigenvalues of the metric on the level set {r**2 = r2} through q,
    relative to the bi-invariant metric sigma_1**2 + sigma_2**2 + sigma_3**2
    of S^3 = SU(2) (four times the unit round metric).

    Both sides are Riemannian: the metric of i g dz ^ dzbar is 2 Re(g) and
    the reference is 4 |.|_e**2 / r2 with |.|_e the Euclidean norm of C^4.
    """
    table = r2_partials(t, r2, verify=False)
    m = metric_at_q(t, r2, table)
    d = table.order1
    # real tangent vectors: complex z1 and z3 directions, and the direction
    # in z2 along which Re((r2)_2 dz2) = 0
    v2 = np.zeros(3, dtype=complex)
    v2[1] = 1j * np.conj(d[1]) / abs(d[1])
    basis = [np.eye(3, dtype=complex)[0], 1j * np.eye(3)[0], v2, np.eye(3, dtype=complex)[2], 1j * np.eye(3)[2]]
    V = np.array(basis).T

    def real_gram(H):
        return (V.conj().T @ H @ V).real

    G = 2 * real_gram(m.g)
    E = 4 * real_gram(m.ddbar_r2) / r2
    return linalg.eigh(G, E, eigvals_only=True)


def s3_limit(t: float, epsilon_list: Sequence[float]) -> S3Limit:
    """Tangent eigenvalues at r2 = t(1 + eps) and their polynomial
    extrapolation to eps = 0."""
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be positive, got {t}")
    eps = [float(e) for e in epsilon_list]
    if len(eps) < 2 or any(not (math.isfinite(e) and e > 0) for e in eps):
        raise DomainError("need at least two positive epsilons")
    if len(set(eps)) != len(eps):
        raise DomainError("epsilons must be distinct")
    eig = np.array([tangent_eigenvalues(t, t * (1 + e)) for e in eps])
    x = np.array(eps)
    # Neville / Lagrange extrapolation to 0, per eigenvalue
    coef = np.polynomial.polynomial.polyfit(x, eig, len(x) - 1)
    limits = coef[0]
    return S3Limit(
        t=float(t), epsilons=eps, eigenvalues=eig, limit=float(np.mean(limits)),
        limit_spread=float(np.ptp(limits)), expected=s3_limit_value(t),
    )
