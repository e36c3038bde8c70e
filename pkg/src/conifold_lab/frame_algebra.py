"""Exterior algebra on a complex 3-dimensional coframe.

Forms are sparse tables over monomials in ``lambda_1..lambda_3`` and their
conjugates. Slots 0, 1, 2 hold the holomorphic covectors and slots 3, 4, 5
the antiholomorphic ones; a monomial is a strictly increasing tuple of
slots. User-facing indices are 1-based, as in ``lam(1)``.

(2,2)-forms are expressed in the basis

    Lambda_{i jbar} = lambda_{k kbar} ^ lambda_{j ibar}    (i != j, k the third index)
    Lambda_{i ibar} = lambda_{k kbar} ^ lambda_{l lbar}    ({i, k, l} = {1, 2, 3})

with ``lambda_{k lbar} = i lambda_k ^ conj(lambda_l)``. With these choices
``conj(Lambda_{i jbar}) = Lambda_{j ibar}``, so a real (2,2)-form has a
Hermitian coefficient matrix ``e``.

Since ``Lambda_{i jbar} ^ lambda_{i jbar} = -vol`` for ``i != j`` while the
diagonal products give ``+vol``, the Hermitian form
``alpha -> Omega ^ i alpha ^ conj(alpha) / vol`` has matrix ``S o e``: the
diagonal of ``e`` with its off-diagonal entries negated. Positivity of
``Omega`` is decided on that matrix. Its first two leading minors coincide
with those of ``e``; the 3x3 determinants differ in the sign of the
``Re(e12 e23 e31)`` term.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from conifold_lab.errors import BasisError, ConvergenceError, DegreeError, PositivityError

DIM = 3
ZERO_TOL = 1e-12


def _sort_sign(idx: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx`` and the sorted tuple; sign 0
    if an index repeats."""
    if len(set(idx)) != len(idx):
        return 0, ()
    inversions = sum(1 for a, b in itertools.combinations(idx, 2) if a > b)
    return (-1 if inversions % 2 else 1), tuple(sorted(idx))


@dataclass(frozen=True)
class FrameForm:
    """Sparse complex combination of coframe monomials."""

    coeffs: Mapping[tuple[int, ...], complex]

    def __post_init__(self):
        clean = {}
        for key, val in dict(self.coeffs).items():
            if any(not 0 <= k < 2 * DIM for k in key) or list(key) != sorted(set(key)):
                raise BasisError(f"monomial {key} is not a strictly increasing slot tuple")
            if val != 0:
                clean[tuple(key)] = complex(val)
        object.__setattr__(self, "coeffs", clean)

    # construction -----------------------------------------------------------

    @classmethod
    def zero(cls) -> "FrameForm":
        return cls({})

    @classmethod
    def scalar(cls, c: complex) -> "FrameForm":
        return cls({(): c})

    # structure ---------------------------------------------------------------

    def degrees(self) -> set[int]:
        return {len(k) for k in self.coeffs}

    def bidegrees(self) -> set[tuple[int, int]]:
        return {(sum(1 for x in k if x < DIM), sum(1 for x in k if x >= DIM)) for k in self.coeffs}

    @property
    def degree(self) -> int:
        degs = self.degrees()
        if len(degs) > 1:
            raise DegreeError(f"mixed degrees {sorted(degs)}")
        return degs.pop() if degs else 0

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self.coeffs.values())

    # arithmetic ---------------------------------------------------------------

    def __add__(self, other: "FrameForm") -> "FrameForm":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return FrameForm(out)

    def __neg__(self) -> "FrameForm":
        return FrameForm({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other: "FrameForm") -> "FrameForm":
        return self + (-other)

    def __mul__(self, c: complex) -> "FrameForm":
        return FrameForm({k: c * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "FrameForm") -> "FrameForm":
        return wedge(self, other)

    def conj(self) -> "FrameForm":
        out: dict[tuple[int, ...], complex] = {}
        for k, v in self.coeffs.items():
            sign, key = _sort_sign(tuple((x + DIM) % (2 * DIM) for x in k))
            out[key] = out.get(key, 0) + sign * np.conj(v)
        return FrameForm(out)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def distance(self, other: "FrameForm") -> float:
        """Largest coefficient-wise difference."""
        return (self - other).max_abs()

    def is_real(self, tol: float = ZERO_TOL) -> bool:
        return self.distance(self.conj()) <= tol * max(1.0, self.max_abs())


def wedge(a: FrameForm, b: FrameForm) -> FrameForm:
    out: dict[tuple[int, ...], complex] = {}
    top = 0
    for ka, va in a.coeffs.items():
        for kb, vb in b.coeffs.items():
            top = max(top, len(ka) + len(kb))
            sign, key = _sort_sign(ka + kb)
            if sign:
                out[key] = out.get(key, 0) + sign * va * vb
    if top > 2 * DIM:
        raise DegreeError(f"wedge exceeds top degree {2 * DIM}")
    return FrameForm(out)


def wedge_all(*forms: FrameForm) -> FrameForm:
    out = FrameForm.scalar(1.0)
    for f in forms:
        out = wedge(out, f)
    return out


def _check_index(*idx: int) -> None:
    for i in idx:
        if i not in (1, 2, 3):
            raise BasisError(f"frame index must be 1, 2 or 3, got {i}")


def lam(k: int) -> FrameForm:
    _check_index(k)
    return FrameForm({(k - 1,): 1.0})


def lam_bar(k: int) -> FrameForm:
    _check_index(k)
    return FrameForm({(k - 1 + DIM,): 1.0})


def lam_kl(k: int, l: int) -> FrameForm:
    """lambda_{k lbar} = i lambda_k ^ conj(lambda_l)."""
    return 1j * wedge(lam(k), lam_bar(l))


def Lambda(i: int, j: int) -> FrameForm:
    """Basis (2,2)-form Lambda_{i jbar}."""
    _check_index(i, j)
    if i == j:
        k, l = sorted({1, 2, 3} - {i})
        return wedge(lam_kl(k, k), lam_kl(l, l))
    (k,) = {1, 2, 3} - {i, j}
    return wedge(lam_kl(k, k), lam_kl(j, i))


def hermitian_11(g: np.ndarray) -> FrameForm:
    """(1,1)-form sum_{ij} g[i, j] lambda_{i jbar} (0-based matrix)."""
    g = np.asarray(g, dtype=complex)
    out = FrameForm.zero()
    for i in range(DIM):
        for j in range(DIM):
            if g[i, j] != 0:
                out = out + g[i, j] * lam_kl(i + 1, j + 1)
    return out


def matrix_11(w: FrameForm) -> np.ndarray:
    """Coefficient matrix of a (1,1)-form in the lambda_{i jbar} basis."""
    if w.is_zero():
        return np.zeros((DIM, DIM), dtype=complex)
    if w.bidegrees() != {(1, 1)}:
        raise TypeError(f"expected a pure (1,1)-form, got bidegrees {sorted(w.bidegrees())}")
    g = np.zeros((DIM, DIM), dtype=complex)
    for (a, b), v in w.coeffs.items():
        # i lambda_a ^ lambdabar_b has coefficient i on (a, b+3)
        g[a, b - DIM] = v / 1j
    return g


# ---------------------------------------------------------------------------
# the Lambda basis


@dataclass(frozen=True)
class Lambda22:
    """Coefficients e[i, j] of Lambda_{(i+1)(j+1)bar}."""

    e: np.ndarray

    def is_hermitian(self, tol: float = ZERO_TOL) -> bool:
        return bool(np.max(np.abs(self.e - self.e.conj().T)) <= tol * max(1.0, np.max(np.abs(self.e))))


@lru_cache(maxsize=None)
def _lambda_table() -> dict[tuple[int, ...], tuple[int, int, complex]]:
    """monomial -> (i, j, c) with Lambda_{i jbar} = c * monomial."""
    table = {}
    for i in range(DIM):
        for j in range(DIM):
            form = Lambda(i + 1, j + 1)
            ((key, c),) = form.coeffs.items()
            table[key] = (i, j, c)
    if len(table) != DIM * DIM:
        raise BasisError("Lambda forms are not independent")
    return table


def to_lambda22(F: FrameForm) -> Lambda22:
    if F.is_zero():
        return Lambda22(np.zeros((DIM, DIM), dtype=complex))
    if F.bidegrees() != {(2, 2)}:
        raise TypeError(f"expected a pure (2,2)-form, got bidegrees {sorted(F.bidegrees())}")
    table = _lambda_table()
    e = np.zeros((DIM, DIM), dtype=complex)
    for key, v in F.coeffs.items():
        if key not in table:
            raise BasisError(f"monomial {key} outside the Lambda span")
        i, j, c = table[key]
        e[i, j] = v / c
    return Lambda22(e)


def from_lambda22(L: Lambda22 | np.ndarray) -> FrameForm:
    e = L.e if isinstance(L, Lambda22) else np.asarray(L, dtype=complex)
    out = FrameForm.zero()
    for i in range(DIM):
        for j in range(DIM):
            if e[i, j] != 0:
                out = out + e[i, j] * Lambda(i + 1, j + 1)
    return out


@lru_cache(maxsize=None)
def _square_tensor() -> np.ndarray:
    """T with e(g) = einsum('abijkl,ij,kl->ab', T, g, g) for the square of
    the (1,1)-form with matrix g, read off from exact wedges."""
    T = np.zeros((DIM,) * 6, dtype=complex)
    for i, j, k, l in itertools.product(range(DIM), repeat=4):
        prod = wedge(lam_kl(i + 1, j + 1), lam_kl(k + 1, l + 1))
        if not prod.is_zero():
            T[:, :, i, j, k, l] = to_lambda22(prod).e
    return T


def square_matrix(g: np.ndarray) -> np.ndarray:
    """e-matrix of (sum g_{ij} lambda_{i jbar})**2."""
    return np.einsum("abijkl,...ij,...kl->...ab", _square_tensor(), g, g)


def wedge_matrix(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    """e-matrix of the wedge of two (1,1)-forms given by their matrices
    (leading batch axes allowed)."""
    return np.einsum("abijkl,...ij,...kl->...ab", _square_tensor(), g, k)


# ---------------------------------------------------------------------------
# positivity


@dataclass
class PositivityResult:
    classification: str
    minors: tuple[float, float, float]
    eigenvalues: tuple[float, float, float]
    # leading minors of e itself, as opposed to the form matrix S o e
    e_minors: tuple[float, float, float] = (float("nan"),) * 3

    @property
    def positive(self) -> bool:
        return self.classification == "positive"


def leading_minors(e: np.ndarray) -> tuple[float, float, float]:
    """Leading principal minors of a Hermitian 3x3 matrix by cofactor
    expansion (real parts; imaginary parts vanish for Hermitian input)."""
    m1 = e[0, 0]
    m2 = e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0]
    m3 = (
        e[0, 0] * (e[1, 1] * e[2, 2] - e[1, 2] * e[2, 1])
        - e[0, 1] * (e[1, 0] * e[2, 2] - e[1, 2] * e[2, 0])
        + e[0, 2] * (e[1, 0] * e[2, 1] - e[1, 1] * e[2, 0])
    )
    return float(np.real(m1)), float(np.real(m2)), float(np.real(m3))


def form_matrix(e: np.ndarray) -> np.ndarray:
    """Matrix of alpha -> Omega ^ i alpha ^ conj(alpha) / vol for
    Omega = sum e_ij Lambda_{i jbar}."""
    e = np.asarray(e, dtype=complex)
    h = -e
    idx = np.arange(e.shape[-1])
    h[..., idx, idx] = e[..., idx, idx]
    return h


def positive_definite(h: np.ndarray, tol: float = ZERO_TOL) -> np.ndarray:
    """Sylvester test for (stacks of) Hermitian 3x3 matrices.

    The matrix is first equilibrated by its diagonal, which is a congruence
    and keeps the signs of the leading minors; the 2x2 and 3x3 minors of
    the equilibrated matrix must then exceed ``tol``. Closed form, so it
    vectorises over any leading axes."""
    h = np.asarray(h, dtype=complex)
    d = np.real(np.diagonal(h, axis1=-2, axis2=-1))
    ok = np.all(d > 0, axis=-1)
    w = 1.0 / np.sqrt(np.where(d > 0, d, 1.0))
    q = h * w[..., :, None] * w[..., None, :]
    a, b, c = q[..., 0, 1], q[..., 0, 2], q[..., 1, 2]
    m2 = 1.0 - np.abs(a) ** 2
    m3 = 1.0 + 2.0 * np.real(a * c * np.conj(b)) - np.abs(a) ** 2 - np.abs(b) ** 2 - np.abs(c) ** 2
    return ok & (m2 > tol) & (m3 > tol)


def classify_hermitian(h: np.ndarray, tol: float = ZERO_TOL) -> PositivityResult:
    """Sylvester classification of a Hermitian matrix, with an eigenvalue
    split between semidefinite and indefinite."""
    h = np.asarray(h, dtype=complex)
    scale = max(1e-300, float(np.max(np.abs(h))))
    minors = leading_minors(h)
    eig = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
    if h.shape == (3, 3):
        positive = bool(positive_definite(h, tol))
    else:
        positive = all(m > 0 for m in minors) and eig[0] > tol * scale
    if positive:
        cls = "positive"
    elif eig[0] >= -tol * scale:
        cls = "semidefinite"
    else:
        cls = "indefinite"
    return PositivityResult(cls, minors, tuple(float(x) for x in eig))


def classify_lambda(e: np.ndarray, tol: float = ZERO_TOL) -> PositivityResult:
    """Positivity of sum e_ij Lambda_{i jbar}; also records the leading
    minors of ``e`` itself."""
    res = classify_hermitian(form_matrix(e), tol)
    res.e_minors = leading_minors(np.asarray(e, dtype=complex))
    return res


def positivity(F: FrameForm, tol: float = ZERO_TOL) -> PositivityResult:
    """Classify a real (2,2)-form."""
    L = to_lambda22(F)
    if not L.is_hermitian(tol):
        raise TypeError("positivity needs a real (2,2)-form")
    return classify_lambda(L.e, tol)


# ---------------------------------------------------------------------------
# square root


def _herm_from_params(p: np.ndarray) -> np.ndarray:
    g = np.diag(p[:3]).astype(complex)
    for n, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
        g[i, j] = p[3 + 2 * n] + 1j * p[4 + 2 * n]
        g[j, i] = np.conj(g[i, j])
    return g


def _params_from_herm(e: np.ndarray) -> np.ndarray:
    p = [e[0, 0].real, e[1, 1].real, e[2, 2].real]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        p += [e[i, j].real, e[i, j].imag]
    return np.array(p)


def _seed(E: np.ndarray) -> np.ndarray:
    # for diagonal targets the square root is g_ii = sqrt(M_jj M_kk / M_ii), M = E/2
    d = np.abs(np.real(np.diag(E))) / 2.0
    g = np.zeros(DIM)
    for i in range(DIM):
        j, k = [x for x in range(DIM) if x != i]
        g[i] = np.sqrt(d[j] * d[k] / d[i])
    return np.concatenate([g, np.zeros(6)])


def _newton(target: np.ndarray, p: np.ndarray, tol: float, maxiter: int) -> np.ndarray | None:
    """Damped Newton for square_matrix(g(p)) = target; None on failure."""
    scale = np.max(np.abs(target))

    def resid(q):
        return _params_from_herm(square_matrix(_herm_from_params(q))) - target

    r = resid(p)
    for _ in range(maxiter):
        nr = np.linalg.norm(r)
        if np.max(np.abs(r)) <= tol * scale:
            return p
        # the residual is quadratic in p, so symmetric differences are exact
        J = np.empty((9, 9))
        for k in range(9):
            d = np.zeros(9)
            d[k] = 1.0
            J[:, k] = (resid(p + d) - resid(p - d)) / 2.0
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        lam_ = 1.0
        while lam_ > 1e-6:
            cand = p + lam_ * step
            rc = resid(cand)
            if np.linalg.norm(rc) < (1 - 1e-4 * lam_) * nr:
                p, r = cand, rc
                break
            lam_ /= 2
        else:
            return None
    return None


def square_root_matrix(E: np.ndarray, tol: float = 1e-13, maxiter: int = 30) -> np.ndarray:
    """Positive Hermitian g with square_matrix(g) = E.

    Newton on the 9 real parameters of g, continued along the path
    E(theta) = (1 - theta) diag(E) + theta E. The path stays in the positive
    cone (the form matrix is linear in E), its start has the explicit
    diagonal root, and the positive root is unique, so it can be tracked.
    """
    E = np.asarray(E, dtype=complex)
    res_cls = classify_lambda(E)
    if not res_cls.positive:
        raise PositivityError(f"square root needs a positive (2,2)-form; got {res_cls.classification}")
    target = _params_from_herm(E)
    start = _params_from_herm(np.diag(np.diag(E)))
    p = _seed(E)
    theta, dtheta = 0.0, 1.0
    while theta < 1.0:
        nxt = min(1.0, theta + dtheta)
        goal = (1 - nxt) * start + nxt * target
        q = _newton(goal, p, tol if nxt == 1.0 else 1e-8, maxiter)
        if q is None or np.linalg.eigvalsh(_herm_from_params(q))[0] <= 0:
            dtheta /= 4
            if dtheta < 1e-6:
                raise ConvergenceError("square-root continuation stalled")
            continue
        p, theta = q, nxt
        dtheta = min(1.0, 2 * dtheta)
    return _herm_from_params(p)


def form_square_root(Omega: FrameForm) -> FrameForm:
    """Positive (1,1)-form omega with omega ^ omega = Omega."""
    L = to_lambda22(Omega)
    if not L.is_hermitian():
        raise TypeError("square root needs a real (2,2)-form")
    return hermitian_11(square_root_matrix(L.e))
