"""Geometry near the exceptional curve of the small resolution.

Coordinates ``(z, u, v)`` on the total space of ``L + L`` over the affine
chart of P^1, with

    r**2 = (1 + |z|**2)(|u|**2 + |v|**2),   Gamma = (1 + |z|**2)**(1/2).

Forms are expanded in the coframe

    lambda_1 = dz,
    lambda_2 = (conj(u) du + conj(v) dv) / rho,
    lambda_3 = (v du - u dv) / rho,          rho = (|u|**2 + |v|**2)**(1/2).

Two routes are kept side by side. The *direct* route takes coordinate
derivatives of the relevant functions and pulls them back through the
coframe, then multiplies with :mod:`frame_algebra`. The *printed* route
evaluates the closed-form coefficient tables (the c, d and alpha blocks,
the Phi displays and the positivity matrix). Agreement between the two
is what the verification suite measures.

Most functions accept either a single :class:`ResolvedPoint` or a
:class:`PointBatch`; matrices then carry the batch shape in front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from conifold_lab import frame_algebra as fa
from conifold_lab.cutoffs import SIGMA, ChiSpec, SmoothStep, build_chi, chi_eval, smoothstep_eval
from conifold_lab.errors import DomainError, SearchError
from conifold_lab.radial_profiles import ProfileKind, eta

MATCH_RTOL = 1e-8
C0_MAX = 1e6
DEFAULT_DENSITY = 2


# ---------------------------------------------------------------------------
# points


class _Geometry:
    """Derived radii shared by single points and batches."""

    @property
    def rho2(self):
        return np.abs(self.u) ** 2 + np.abs(self.v) ** 2

    @property
    def rho(self):
        return np.sqrt(self.rho2)

    @property
    def Gamma2(self):
        return 1.0 + np.abs(self.z) ** 2

    @property
    def Gamma(self):
        return np.sqrt(self.Gamma2)

    @property
    def r2(self):
        return self.Gamma2 * self.rho2

    @property
    def r(self):
        return np.sqrt(self.r2)


@dataclass(frozen=True)
class ResolvedPoint(_Geometry):
    z: complex
    u: complex
    v: complex

    def __post_init__(self):
        if self.u == 0 and self.v == 0:
            raise DomainError("point lies on the exceptional curve (u = v = 0)")
        if not self.r < 1:
            raise DomainError(f"point outside the unit disk bundle (r = {self.r})")

    @property
    def r2(self) -> float:
        return float(self.Gamma2 * self.rho2)

    @classmethod
    def from_polar(cls, z: complex, r: float, direction: Sequence[complex] = (1.0, 0.0)) -> "ResolvedPoint":
        """Point over ``z`` at radius ``r`` with (u, v) along ``direction``."""
        d = np.asarray(direction, dtype=complex)
        d = d / np.linalg.norm(d)
        rho = r / math.sqrt(1.0 + abs(z) ** 2)
        return cls(complex(z), complex(rho * d[0]), complex(rho * d[1]))


@dataclass(frozen=True)
class PointBatch(_Geometry):
    z: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("z", "u", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex).ravel())
        if not (self.z.shape == self.u.shape == self.v.shape):
            raise ValueError("z, u, v must have equal length")
        if np.any(self.rho2 == 0):
            raise DomainError("batch contains points on the exceptional curve")
        if np.any(self.r >= 1):
            raise DomainError("batch contains points outside the unit disk bundle")

    def __len__(self) -> int:
        return self.z.size

    def __getitem__(self, i: int) -> ResolvedPoint:
        return ResolvedPoint(complex(self.z[i]), complex(self.u[i]), complex(self.v[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def of(cls, points: Iterable[ResolvedPoint]) -> "PointBatch":
        pts = list(points)
        return cls(np.array([p.z for p in pts]), np.array([p.u for p in pts]), np.array([p.v for p in pts]))


Point = Union[ResolvedPoint, PointBatch]


def _as_batch(grid) -> PointBatch:
    return grid if isinstance(grid, PointBatch) else PointBatch.of(grid)


def _vec3(entries, like) -> np.ndarray:
    shape = np.shape(like)
    return np.stack([np.broadcast_to(np.asarray(e, dtype=complex), shape) for e in entries], axis=-1)


def _mat3(rows, like) -> np.ndarray:
    return np.stack([_vec3(row, like) for row in rows], axis=-2)


def _ex(x) -> np.ndarray:
    return np.asarray(x)[..., None, None]


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a_k conj(b_l)."""
    return a[..., :, None] * np.conj(b)[..., None, :]


# ---------------------------------------------------------------------------
# coframe


def coframe_matrix(p: Point) -> np.ndarray:
    """P with (dz, du, dv) = P (lambda_1, lambda_2, lambda_3) row-wise."""
    u, v, rho = p.u, p.v, p.rho
    return _mat3([[1, 0, 0], [0, u / rho, np.conj(v) / rho], [0, v / rho, -np.conj(u) / rho]], p.z)


def frame_10(p: Point, grad: np.ndarray) -> np.ndarray:
    """lambda-components of the (1,0)-form sum grad_a dx_a."""
    return np.einsum("...ak,...a->...k", coframe_matrix(p), grad)


def frame_11(p: Point, K: np.ndarray) -> np.ndarray:
    """lambda_{k lbar}-matrix of sum K[a, b] i dx_a ^ conj(dx_b)."""
    P = coframe_matrix(p)
    return np.einsum("...ak,...ab,...bl->...kl", P, K, P.conj())


def form_11(g: np.ndarray) -> fa.FrameForm:
    return fa.hermitian_11(g)


def dd_pair(p: Point, grad_f: np.ndarray, grad_g: np.ndarray) -> np.ndarray:
    """lambda-matrix of i df ^ dbar g for real f, g given their
    holomorphic gradients (dbar g has components conj(grad_g))."""
    return frame_11(p, _outer(grad_f, grad_g))


# ---------------------------------------------------------------------------
# r**2


def grad_r2(p: Point) -> np.ndarray:
    return _vec3([np.conj(p.z) * p.rho2, p.Gamma2 * np.conj(p.u), p.Gamma2 * np.conj(p.v)], p.z)


def hess_r2(p: Point) -> np.ndarray:
    """[d_a dbar_b r**2]."""
    z, u, v, G2 = p.z, p.u, p.v, p.Gamma2
    return _mat3(
        [
            [p.rho2, np.conj(z) * u, np.conj(z) * v],
            [z * np.conj(u), G2, 0],
            [z * np.conj(v), 0, G2],
        ],
        z,
    )


def printed_dr2(p: ResolvedPoint) -> np.ndarray:
    """d r**2 = Gamma**-2 r**2 conj(z) lambda_1 + Gamma r lambda_2."""
    return np.array([p.r2 * np.conj(p.z) / p.Gamma2, p.Gamma * p.r, 0.0], dtype=complex)


def printed_ddbar_r2(p: ResolvedPoint) -> np.ndarray:
    """i ddbar r**2 in the lambda frame, closed form."""
    G, r, z = p.Gamma, p.r, p.z
    g = np.zeros((3, 3), dtype=complex)
    g[0, 0] = p.r2 / p.Gamma2
    g[1, 1] = g[2, 2] = p.Gamma2
    g[0, 1] = r * np.conj(z) / G
    g[1, 0] = r * z / G
    return g


# ---------------------------------------------------------------------------
# base forms


@dataclass
class BaseForms:
    ddbar_r2: fa.FrameForm
    dr2_wedge: fa.FrameForm
    omega_co0: fa.FrameForm
    omega_co: fa.FrameForm


def _radial_11(p: ResolvedPoint, f1: float, f2: float) -> np.ndarray:
    """lambda-matrix of i ddbar F(r**2) given F', F''."""
    g = grad_r2(p)
    return f1 * frame_11(p, hess_r2(p)) + f2 * dd_pair(p, g, g)


def omega_co0_matrix(p: ResolvedPoint) -> np.ndarray:
    s = p.r2
    return _radial_11(p, s ** (-1 / 3), -(1 / 3) * s ** (-4 / 3))


def omega_co_matrix(p: ResolvedPoint) -> np.ndarray:
    s = p.r2
    y = eta(ProfileKind.resolved(), s) / s
    # f' = y solves s y**3 + 3/2 y**2 = 1
    y1 = -(y**3) / (3 * s * y * y + 3 * y)
    K = np.zeros((3, 3), dtype=complex)
    K[0, 0] = 1.0 / p.Gamma2**2
    return _radial_11(p, y, y1) + frame_11(p, K)


def base_forms(p: ResolvedPoint) -> BaseForms:
    g = grad_r2(p)
    return BaseForms(
        ddbar_r2=form_11(frame_11(p, hess_r2(p))),
        dr2_wedge=form_11(dd_pair(p, g, g)),
        omega_co0=form_11(omega_co0_matrix(p)),
        omega_co=form_11(omega_co_matrix(p)),
    )


def printed_omega_co0_z0(r2: float) -> np.ndarray:
    return np.diag([r2 ** (2 / 3), (2 / 3) * r2 ** (-1 / 3), r2 ** (-1 / 3)]).astype(complex)


def printed_omega_co_z0(r2: float) -> np.ndarray:
    e = eta(ProfileKind.resolved(), r2)
    q = math.sqrt(e + 1.5)
    return np.diag([e + 1.0, (2 / 3) * q / (e + 1.0), 1.0 / q]).astype(complex)


def omega_co_lower_bound_margin(r2: float) -> float:
    """Smallest eigenvalue of the form matrix of omega_co**2 - (1/3) sum_{k!=j}
    lambda_kk ^ lambda_jj at z = 0."""
    g = omega_co_matrix(ResolvedPoint.from_polar(0.0, math.sqrt(r2)))
    E = fa.square_matrix(g) - (2.0 / 3.0) * np.eye(3)
    return float(np.linalg.eigvalsh(fa.form_matrix(E))[0])


# ---------------------------------------------------------------------------
# the glued form Phi


def s_of(n: int, p: Point):
    return n ** (4 / 3) * p.r2 ** (2 / 3)


def phi_form(n: int, chi: ChiSpec, p: ResolvedPoint) -> fa.FrameForm:
    """Phi = chi'(s) w0^2 + 2/3 n^(4/3) (r^2)^(-2/3) chi''(s) (i dr2 ^ dbar r2) ^ w0,
    with w0 = i ddbar f0, assembled by direct wedges."""
    s = s_of(n, p)
    d1, d2 = chi_eval(chi, s, 1), chi_eval(chi, s, 2)
    w0 = form_11(omega_co0_matrix(p))
    g = grad_r2(p)
    out = d1 * fa.wedge(w0, w0)
    if d2 != 0.0:
        out = out + (2 / 3) * n ** (4 / 3) * p.r2 ** (-2 / 3) * d2 * fa.wedge(form_11(dd_pair(p, g, g)), w0)
    return out


def phi_display_z0(n: int, chi: ChiSpec, p: ResolvedPoint) -> np.ndarray:
    """Printed Lambda-matrix of n**(2/3) Phi at z = 0."""
    if p.z != 0:
        raise DomainError("the z = 0 display needs z = 0")
    s = s_of(n, p)
    d1, d2 = chi_eval(chi, s, 1), chi_eval(chi, s, 2)
    law = 2 * d1 + s * d2
    sq = math.sqrt(s)
    # l11^l22 = Lambda_33, l11^l33 = Lambda_22, l22^l33 = Lambda_11
    return np.diag([(2 / 3) * law * sq / p.r2, 2 * d1 * sq, (2 / 3) * law * sq]).astype(complex)


def phi_display_region(n: int, p: ResolvedPoint) -> np.ndarray:
    """Printed Lambda-matrix of n**(2/3) Phi over the annulus 1/n <= r < 2/n."""
    t = n * n * p.r2
    G, z = p.Gamma, p.z
    e = np.zeros((3, 3), dtype=complex)
    e[0, 0] = (4 / 3) * t ** (-2 / 3) * G**4 * n * n
    e[1, 0] = (4 / 3) * t ** (-1 / 6) * n * G * np.conj(z)
    e[0, 1] = (4 / 3) * t ** (-1 / 6) * n * G * z
    e[1, 1] = 2 * t ** (1 / 3) * (1 - abs(z) ** 2 / (3 * G * G))
    e[2, 2] = (4 / 3) * t ** (1 / 3) * (1 - abs(z) ** 2 / (G * G))
    return e


@dataclass
class C2Measurement:
    n: int
    c2_hat: float
    worst_r: float
    min_coefficient: float


def outer_radii(n: int, size: int = 400) -> np.ndarray:
    """Radii of U(1) minus U(2/n), refined where chi bends (s between c2 and c4)."""
    base = np.linspace(2.0 / n, 1.0, size, endpoint=False)
    # s = (n r)^(4/3) >= c3 = (n-1)^(4/3) means r >= 1 - 1/n
    tail = np.linspace(1.0 - 2.0 / n, 1.0, size, endpoint=False)
    return np.unique(np.concatenate([base, tail]))


def measure_c2(n: int, r_grid: Iterable[float] | None = None, chi: ChiSpec | None = None) -> C2Measurement:
    """Smallest C2 with n^(2/3) Phi >= -C2 n^-1 sum_{k!=j} l_kk ^ l_jj at z = 0
    over the sampled radii. The right side is -2 C2/n times the identity in
    the Lambda basis, so C2 = max(0, -min coefficient) n / 2."""
    chi = chi or build_chi(n)
    r_grid = outer_radii(n) if r_grid is None else r_grid
    lo, at = math.inf, float("nan")
    for r in r_grid:
        e = phi_display_z0(n, chi, ResolvedPoint.from_polar(0.0, r))
        m = float(np.linalg.eigvalsh(fa.form_matrix(e))[0])
        if m < lo:
            lo, at = m, float(r)
    return C2Measurement(n=n, c2_hat=max(0.0, -lo) * n / 2, worst_r=at, min_coefficient=lo)


# ---------------------------------------------------------------------------
# the scenario h = h1 + h2


@dataclass(frozen=True)
class ZPoly:
    """Polynomial sum c[p, q] z**p conj(z)**q."""

    coeffs: tuple[tuple[int, int, complex], ...]

    @classmethod
    def of(cls, mapping: dict) -> "ZPoly":
        return cls(tuple((int(p), int(q), complex(c)) for (p, q), c in sorted(mapping.items())))

    def __call__(self, z):
        zb = np.conj(z)
        return sum((c * z**p * zb**q for p, q, c in self.coeffs), 0j)

    def dz(self) -> "ZPoly":
        return ZPoly(tuple((p - 1, q, c * p) for p, q, c in self.coeffs if p > 0))

    def dzbar(self) -> "ZPoly":
        return ZPoly(tuple((p, q - 1, c * q) for p, q, c in self.coeffs if q > 0))

    def to_json(self) -> list:
        return [[p, q, c.real, c.imag] for p, q, c in self.coeffs]

    @classmethod
    def from_json(cls, data) -> "ZPoly":
        return cls(tuple((int(p), int(q), complex(re, im)) for p, q, re, im in data))


@dataclass(frozen=True)
class ScenarioH:
    """h = h1 + h2 with h1 = a u + conj(a u) + b v + conj(b v) and
    h2 = Q(z) (|u|**2 + |v|**2) for a real polynomial Q; the pulled-back
    base form is modelled as kappa_E i dz ^ dzbar / (1 + |z|**2)**2."""

    a: ZPoly
    b: ZPoly
    q: ZPoly
    kappa_E: float = 1.0
    name: str = "custom"

    @classmethod
    def default(cls) -> "ScenarioH":
        return cls(
            a=ZPoly.of({(0, 0): 0.3, (1, 0): 0.1}),
            b=ZPoly.of({(0, 0): 0.2, (0, 1): -0.05}),
            # 0.1 (1 + 0.1 Re z) = 0.1 + 0.005 z + 0.005 zbar
            q=ZPoly.of({(0, 0): 0.1, (1, 0): 0.005, (0, 1): 0.005}),
            name="default",
        )

    @classmethod
    def trivial(cls) -> "ScenarioH":
        return cls(ZPoly(()), ZPoly(()), ZPoly(()), name="trivial")

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 0.3) -> "ScenarioH":
        def poly():
            return ZPoly.of({(p, q): scale * complex(*rng.normal(size=2)) for p in range(2) for q in range(2)})

        c = scale * rng.normal(size=2)
        w = complex(*(scale * rng.normal(size=2)))
        # real Q = c0 + c1 |z|^2 + w z + conj(w z)
        qp = ZPoly.of({(0, 0): c[0], (1, 1): c[1], (1, 0): w, (0, 1): np.conj(w)})
        return cls(poly(), poly(), qp, name="random")

    def to_json(self) -> dict:
        return {"a": self.a.to_json(), "b": self.b.to_json(), "q": self.q.to_json(), "kappa_E": self.kappa_E, "name": self.name}

    @classmethod
    def from_json(cls, data: dict) -> "ScenarioH":
        return cls(
            ZPoly.from_json(data["a"]),
            ZPoly.from_json(data["b"]),
            ZPoly.from_json(data["q"]),
            float(data.get("kappa_E", 1.0)),
            str(data.get("name", "custom")),
        )

    # h1 -----------------------------------------------------------------

    def h1(self, p: Point):
        return 2.0 * np.real(self.a(p.z) * p.u + self.b(p.z) * p.v)

    def grad_h1(self, p: Point) -> np.ndarray:
        z, u, v = p.z, p.u, p.v
        az, bz = self.a.dz()(z), self.b.dz()(z)
        # d_z conj(a) = conj(a_zbar)
        azb, bzb = self.a.dzbar()(z), self.b.dzbar()(z)
        dz = az * u + np.conj(azb) * np.conj(u) + bz * v + np.conj(bzb) * np.conj(v)
        return _vec3([dz, self.a(z), self.b(z)], z)

    def hess_h1(self, p: Point) -> np.ndarray:
        z, u, v = p.z, p.u, p.v
        azzb = self.a.dz().dzbar()(z)
        bzzb = self.b.dz().dzbar()(z)
        azb, bzb = self.a.dzbar()(z), self.b.dzbar()(z)
        h00 = 2.0 * np.real(azzb * u + bzzb * v)
        return _mat3([[h00, np.conj(azb), np.conj(bzb)], [azb, 0, 0], [bzb, 0, 0]], z)

    # h2 -----------------------------------------------------------------

    def h2(self, p: Point):
        return np.real(self.q(p.z)) * p.rho2

    def grad_h2(self, p: Point) -> np.ndarray:
        Q = np.real(self.q(p.z))
        return _vec3([self.q.dz()(p.z) * p.rho2, Q * np.conj(p.u), Q * np.conj(p.v)], p.z)

    def hess_h2(self, p: Point) -> np.ndarray:
        z, u, v = p.z, p.u, p.v
        Q = np.real(self.q(z))
        qz, qzb = self.q.dz()(z), self.q.dzbar()(z)
        return _mat3(
            [
                [self.q.dz().dzbar()(z) * p.rho2, qz * u, qz * v],
                [qzb * np.conj(u), Q, 0],
                [qzb * np.conj(v), 0, Q],
            ],
            z,
        )

    def omega_E(self, p: Point) -> np.ndarray:
        return _mat3([[self.kappa_E / p.Gamma2**2, 0, 0], [0, 0, 0], [0, 0, 0]], p.z)


# ---------------------------------------------------------------------------
# c, d and alpha blocks


@dataclass
class CoefficientBlock:
    c: np.ndarray
    d: np.ndarray
    alpha: np.ndarray | None = None


def coefficients_cd(s: ScenarioH, p: Point) -> CoefficientBlock:
    """Printed c_{i jbar} and d_{i 2bar} at the point."""
    z, u, v, r, G = p.z, p.u, p.v, p.r, p.Gamma
    a, b = s.a(z), s.b(z)
    az, bz = s.a.dz()(z), s.b.dz()(z)
    azb, bzb = s.a.dzbar()(z), s.b.dzbar()(z)
    azzb, bzzb = s.a.dz().dzbar()(z), s.b.dz().dzbar()(z)
    c11 = 2.0 * np.real((azzb * u + bzzb * v) / r)
    c21 = G * (azb * u + bzb * v) / r
    c31 = G * (azb * np.conj(v) - bzb * np.conj(u)) / r
    c = _mat3([[c11, np.conj(c21), np.conj(c31)], [c21, 0, 0], [c31, 0, 0]], z)
    d = _vec3(
        [
            (az * u + bz * v + np.conj(azb) * np.conj(u) + np.conj(bzb) * np.conj(v)) / r,
            G * (a * u + b * v) / r,
            G * (a * np.conj(v) - b * np.conj(u)) / r,
        ],
        z,
    )
    return CoefficientBlock(c=c, d=d)


def printed_dh1(block: CoefficientBlock, p: ResolvedPoint) -> np.ndarray:
    """d h1 = r d12 lambda_1 + d22 lambda_2 + d32 lambda_3."""
    return np.array([p.r * block.d[0], block.d[1], block.d[2]])


def printed_ddbar_h1(block: CoefficientBlock, p: ResolvedPoint) -> np.ndarray:
    g = block.c.copy()
    g[0, 0] = p.r * block.c[0, 0]
    return g


def _check_annulus(n: int, p: Point) -> None:
    # tolerate rounding at the closed ends
    r = np.asarray(p.r)
    if np.any(r < (1.0 - 1e-12) / n) or np.any(r > (2.0 + 1e-12) / n):
        raise DomainError(f"r outside the annulus [1/n, 2/n] for n = {n}")


def alpha_matrix(s: ScenarioH, n: int, sigma: SmoothStep, p: Point) -> CoefficientBlock:
    """Printed alpha_{i jbar} (row i, column j, 0-based)."""
    _check_annulus(n, p)
    blk = coefficients_cd(s, p)
    c, d = blk.c, blk.d
    c11, c21, c12, c31, c13 = c[..., 0, 0], c[..., 1, 0], c[..., 0, 1], c[..., 2, 0], c[..., 0, 2]
    d12, d22, d32 = d[..., 0], d[..., 1], d[..., 2]
    t = n * n * p.r2
    st = np.sqrt(t)
    s1, s2 = smoothstep_eval(sigma, t, 1), smoothstep_eval(sigma, t, 2)
    G, z = p.Gamma, p.z
    zb = np.conj(z)
    nh1 = n * s.h1(p)
    re, cj = np.real, np.conj
    a12 = -nh1 * s1 * G**2 * c21 + st * s1 * G * c31 * cj(d32)
    a22 = -nh1 * st * s1 * G**2 * c11 + 2 * t * s1 / G**2 * re(z * c13 * d32)
    a23 = (
        nh1 * st * (s1 + t * s2) / G * zb * c31
        + t * s1 / G**2 * (zb * c31 * cj(d22) + z * c12 * d32)
        + t * s1 * G * (c31 * d12 - c11 * d32)
    )
    a13 = -nh1 * (s1 + t * s2) * G**2 * c31 - st * s1 * G * (2 * c31 * re(d22) - c21 * d32)
    a33 = -nh1 * st * (s1 + t * s2) * (G**2 * c11 - 2 / G * re(z * c12)) - 2 * t * s1 * G * (
        c11 * re(d22) - re(c21 * d12) - G**-3 * re(z * c12 * d22)
    )
    blk.alpha = _mat3([[0, a12, a13], [cj(a12), a22, a23], [cj(a13), cj(a23), a33]], z)
    return blk


def assemble_alpha(alpha: np.ndarray, n: int) -> np.ndarray:
    """Right side of the expansion: n-weighted first row and column, no
    Lambda_11 term."""
    e = np.array(alpha, dtype=complex)
    e[..., 0, 0] = 0.0
    e[..., 0, 1:] *= n
    e[..., 1:, 0] *= n
    return e


def _cutoff_11(n: int, sigma: SmoothStep, p: Point, hval, hgrad: np.ndarray) -> np.ndarray:
    """lambda-matrix of -i(h ddbar sig + d sig ^ dbar h + d h ^ dbar sig), sig = sigma(n^2 r^2)."""
    t = n * n * p.r2
    s1, s2 = smoothstep_eval(sigma, t, 1), smoothstep_eval(sigma, t, 2)
    g = grad_r2(p)
    sig_grad = np.asarray(s1 * n * n)[..., None] * g
    sig_hess = _ex(s1 * n * n) * hess_r2(p) + _ex(s2 * n**4) * _outer(g, g)
    K = _ex(hval) * sig_hess + _outer(sig_grad, hgrad) + _outer(hgrad, sig_grad)
    return -frame_11(p, K)


def _h1_factors(s: ScenarioH, n: int, sigma: SmoothStep, p: Point) -> tuple[np.ndarray, np.ndarray]:
    _check_annulus(n, p)
    return _cutoff_11(n, sigma, p, s.h1(p), s.grad_h1(p)), frame_11(p, s.hess_h1(p))


def expansion_208(s: ScenarioH, n: int, sigma: SmoothStep, p: ResolvedPoint) -> fa.Lambda22:
    """The h1 term -i(h1 ddbar sig + d sig ^ dbar h1 + d h1 ^ dbar sig) ^ i ddbar h1,
    built from coordinate derivatives and exact wedges."""
    left, right = _h1_factors(s, n, sigma, p)
    return fa.to_lambda22(fa.wedge(form_11(left), form_11(right)))


def _third_factors(s: ScenarioH, n: int, sigma: SmoothStep, p: Point) -> tuple[np.ndarray, np.ndarray]:
    _check_annulus(n, p)
    left = _cutoff_11(n, sigma, p, s.h2(p), s.grad_h2(p))
    K = 2 * s.omega_E(p) + 2 * s.hess_h1(p) + s.hess_h2(p)
    return left, frame_11(p, K)


def third_term(s: ScenarioH, n: int, sigma: SmoothStep, p: ResolvedPoint) -> fa.Lambda22:
    """The h2 term -i(h2 ddbar sig + ...) ^ (2 omega_E + i ddbar(2 h1 + h2))."""
    left, right = _third_factors(s, n, sigma, p)
    return fa.to_lambda22(fa.wedge(form_11(left), form_11(right)))


def third_term_matrix(s: ScenarioH, n: int, sigma: SmoothStep, p: Point) -> np.ndarray:
    """Same as :func:`third_term` through the cached product tensor; batches allowed."""
    return fa.wedge_matrix(*_third_factors(s, n, sigma, p))


@dataclass
class Mismatch:
    entry: str
    printed: complex
    direct: complex
    rel_error: float


@dataclass
class ExpansionComparison:
    point: ResolvedPoint
    printed: np.ndarray
    direct: np.ndarray
    max_rel_error: float
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def agrees(self) -> bool:
        return not self.mismatches


def compare_expansion(s: ScenarioH, n: int, sigma: SmoothStep, p: ResolvedPoint, rtol: float = MATCH_RTOL) -> ExpansionComparison:
    """Printed alpha expansion against the direct wedge; entries differing
    by more than ``rtol`` relative to the matrix scale are itemised."""
    printed = assemble_alpha(alpha_matrix(s, n, sigma, p).alpha, n)
    direct = expansion_208(s, n, sigma, p).e
    scale = max(np.max(np.abs(direct)), np.max(np.abs(printed)), 1e-300)
    err = np.abs(printed - direct) / scale
    mism = [
        Mismatch(f"Lambda_{i + 1}{j + 1}", complex(printed[i, j]), complex(direct[i, j]), float(err[i, j]))
        for i in range(3)
        for j in range(3)
        if err[i, j] > rtol
    ]
    return ExpansionComparison(p, printed, direct, float(err.max()), mism)


# ---------------------------------------------------------------------------
# positivity matrix and search


def fibre_directions(density: int) -> np.ndarray:
    """Unit vectors (cos th e^{i p1}, sin th e^{i p2}) on a product grid of S^3."""
    k = 2 * density
    phases = np.exp(2j * np.pi * np.arange(k) / k)
    out = [(ph, 0) for ph in phases] + [(0, ph) for ph in phases]
    for th in np.linspace(0, np.pi / 2, density + 1)[1:-1]:
        out += [(np.cos(th) * p1, np.sin(th) * p2) for p1 in phases for p2 in phases]
    return np.array(out, dtype=complex)


def annulus_grid(n: int, density: int = DEFAULT_DENSITY, z_max: float = 2.0) -> PointBatch:
    """Points with |z| <= z_max, r in [1/n, 2/n] and fibre directions on S^3.

    ``density`` m gives m rings of 4m angles in z and 16m + 1 radii. The
    suprema are driven by the radial profile of sigma, so that axis is the
    finest; the fibre sphere gets :func:`fibre_directions` (2 + m // 4),
    since the dependence on the direction is a low-degree trigonometric
    polynomial. Doubling m halves the z and radial spacings."""
    if density < 1:
        raise ValueError("density must be >= 1")
    m = density
    zs = np.concatenate(
        [[0j], (np.linspace(z_max / m, z_max, m)[:, None] * np.exp(2j * np.pi * np.arange(4 * m) / (4 * m))).ravel()]
    )
    xs = np.linspace(1.0, 2.0, 16 * m + 1) / n
    dirs = fibre_directions(2 + m // 4)
    Z, X, D = np.meshgrid(zs, xs, np.arange(len(dirs)), indexing="ij")
    Z, X, D = Z.ravel(), X.ravel(), D.ravel()
    rho = X / np.sqrt(1.0 + np.abs(Z) ** 2)
    # the closed ends are kept exact up to rounding; r = 2/n is allowed
    return PointBatch(Z, rho * dirs[D, 0], rho * dirs[D, 1])


@dataclass
class C3Measurement:
    c3_hat: float
    cd_max: float
    alpha_max: float
    h2_max: float


def measure_c3(s: ScenarioH, n: int, sigma: SmoothStep, grid) -> C3Measurement:
    """Max of |c|, |d|, |alpha| and the h2-term Lambda coefficients on the grid."""
    p = _as_batch(grid)
    blk = alpha_matrix(s, n, sigma, p)
    cd = max(float(np.max(np.abs(blk.c))), float(np.max(np.abs(blk.d))))
    al = float(np.max(np.abs(blk.alpha)))
    h2 = float(np.max(np.abs(third_term_matrix(s, n, sigma, p))))
    return C3Measurement(max(cd, al, h2), cd, al, h2)


def e_matrix_parts(s: ScenarioH, n: int, sigma: SmoothStep, p: Point, C3_hat: float) -> tuple[np.ndarray, np.ndarray]:
    """(A, B) with e = C0 A + B, entries as printed."""
    _check_annulus(n, p)
    al = alpha_matrix(s, n, sigma, p).alpha
    t = n * n * p.r2
    G, z = p.Gamma, p.z
    az2 = np.abs(z) ** 2
    a12 = n * 4 * G * z / (3 * t ** (1 / 6))
    A = _mat3(
        [
            [4 * G**4 * n * n / (3 * t ** (2 / 3)), a12, 0],
            [np.conj(a12), 2 * t ** (1 / 3) * (1 - az2 / (3 * G * G)), 0],
            [0, 0, (4 / 3) * t ** (1 / 3) * (1 - az2 / (G * G))],
        ],
        z,
    )
    B = _mat3(
        [
            [-C3_hat, n * al[..., 0, 1], n * al[..., 0, 2]],
            [n * al[..., 1, 0], al[..., 1, 1] - C3_hat, al[..., 1, 2]],
            [n * al[..., 2, 0], al[..., 2, 1], al[..., 2, 2] - C3_hat],
        ],
        z,
    )
    return A, B


def e_matrix(
    s: ScenarioH,
    C0: float,
    n: int,
    chi: ChiSpec | None,
    sigma: SmoothStep,
    p: Point,
    C3_hat: float,
) -> fa.Lambda22:
    """Printed lower-bound matrix for Omega_0 over the annulus."""
    if chi is not None and np.any(s_of(n, p) > chi.c1 * (1 + 1e-12)):
        raise DomainError("annulus point beyond the identity piece of chi")
    A, B = e_matrix_parts(s, n, sigma, p, C3_hat)
    return fa.Lambda22(C0 * A + B)


def batch_positive(M: np.ndarray, tol: float = fa.ZERO_TOL) -> np.ndarray:
    """Positive definiteness of a stack of Hermitian 3x3 matrices."""
    return fa.positive_definite(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))), tol)


def _threshold(A: np.ndarray, B: np.ndarray, use_form: bool, c0_max: float, rtol: float) -> float:
    """Smallest C0 in [0, c0_max] with C0 A + B positive at every point:
    doubling bracket from 1, then bisection to ``rtol``."""
    if use_form:
        A, B = fa.form_matrix(A), fa.form_matrix(B)

    def ok(c0):
        return bool(np.all(batch_positive(c0 * A + B)))

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while not ok(hi):
        if hi >= c0_max:
            raise SearchError(f"no C0 <= {c0_max:g} makes the matrix positive on the grid")
        lo, hi = hi, min(2.0 * hi, c0_max)
    # the absolute floor ends the search when the threshold is 0+
    while hi - lo > rtol * hi + 1e-12:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def outer_check(n: int, C0: float, c2_hat: float, kappa: float = 1.0, r_grid: Iterable[float] | None = None) -> tuple[bool, float]:
    """Positivity of kappa (2 sum Lambda_ii) - 3 C0 C2 n^-1 omega_co^2 at z = 0
    over U(1) minus U(2/n). Returns (ok, smallest eigenvalue)."""
    r_grid = np.linspace(2.0 / n, 0.999, 200) if r_grid is None else r_grid
    lo = math.inf
    for r in r_grid:
        E = kappa * 2 * np.eye(3) - 3 * C0 * c2_hat / n * fa.square_matrix(printed_omega_co_z0(r * r))
        lo = min(lo, float(np.linalg.eigvalsh(fa.form_matrix(E))[0]))
    return lo > 0, lo


@dataclass
class SearchResult:
    n_list: list[int]
    c0_star: float
    c0_by_n: dict[int, float]
    c0_e_by_n: dict[int, float]
    c0_form_by_n: dict[int, float]
    c3_by_n: dict[int, float]
    c2_by_n: dict[int, float]
    outer_ok: dict[int, bool]
    n_of_c0: int | None
    nonincreasing: bool
    grid_points: int


def positivity_search(
    s: ScenarioH,
    n_list: Sequence[int],
    density: int = DEFAULT_DENSITY,
    sigma: SmoothStep = SIGMA,
    kappa: float = 1.0,
    c0_max: float = C0_MAX,
    rtol: float = 1e-10,
) -> SearchResult:
    """Smallest C0 (per n) making the annulus matrix positive at every grid
    point, with C3 measured on the same grid.

    Two readings of positivity are thresholded separately: positive
    definiteness of e itself (all leading minors of e positive) and of the
    form matrix S o e. C0* for n is the larger of the two. The outer region
    is then checked with the overall C0* and the measured C2.
    """
    c0_by_n, c0_e, c0_f, c3_by_n, c2_by_n, outer = {}, {}, {}, {}, {}, {}
    npts = 0
    for n in n_list:
        grid = annulus_grid(n, density)
        npts = len(grid)
        c3 = measure_c3(s, n, sigma, grid).c3_hat
        A, B = e_matrix_parts(s, n, sigma, grid, c3)
        c0_e[n] = _threshold(A, B, False, c0_max, rtol)
        c0_f[n] = _threshold(A, B, True, c0_max, rtol)
        c0_by_n[n] = max(c0_e[n], c0_f[n])
        c3_by_n[n] = c3
        c2_by_n[n] = measure_c2(n).c2_hat
    c0_star = max(c0_by_n.values())
    n_of = None
    for n in sorted(n_list):
        outer[n] = outer_check(n, c0_star, c2_by_n[n], kappa)[0]
        if outer[n] and n_of is None:
            n_of = n
    ordered = [c0_by_n[n] for n in sorted(n_list)]
    return SearchResult(
        n_list=list(n_list),
        c0_star=c0_star,
        c0_by_n=c0_by_n,
        c0_e_by_n=c0_e,
        c0_form_by_n=c0_f,
        c3_by_n=c3_by_n,
        c2_by_n=c2_by_n,
        outer_ok=outer,
        n_of_c0=n_of,
        nonincreasing=all(b <= a for a, b in zip(ordered, ordered[1:])),
        grid_points=npts,
    )
