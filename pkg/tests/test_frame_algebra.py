import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conifold_lab import BasisError, DegreeError, PositivityError
from conifold_lab import frame_algebra as fa


def random_form(rng, degree, terms=6):
    out = fa.FrameForm.zero()
    for _ in range(terms):
        key = tuple(sorted(rng.choice(6, size=degree, replace=False)))
        out = out + fa.FrameForm({key: complex(rng.normal(), rng.normal())})
    return out


def random_positive(rng):
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    return A @ A.conj().T


def cofactor_root(E):
    """Closed-form square root: with M the form matrix of E over 2,
    g = sqrt(det M) M^{-T}."""
    M = fa.form_matrix(E) / 2
    return np.sqrt(np.linalg.det(M).real) * np.linalg.inv(M).T


# --- wedge ---------------------------------------------------------------------


def test_lambda_squares_vanish():
    assert fa.wedge(fa.lam(1), fa.lam(1)).is_zero()
    assert fa.wedge(fa.lam_bar(2), fa.lam_bar(2)).is_zero()


def test_triple_product_sign():
    vol = fa.wedge_all(fa.lam_kl(1, 1), fa.lam_kl(2, 2), fa.lam_kl(3, 3))
    # i^3 lambda1 lb1 lambda2 lb2 lambda3 lb3; sorting (0,3,1,4,2,5) takes 3 transpositions
    assert vol.coeffs == {(0, 1, 2, 3, 4, 5): pytest.approx(-1j * -1)}


def test_sum_square_is_twice_lambda_diagonal():
    w = fa.lam_kl(1, 1) + fa.lam_kl(2, 2) + fa.lam_kl(3, 3)
    sq = fa.wedge(w, w)
    # brute force over all nine products
    brute = fa.FrameForm.zero()
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            brute = brute + fa.wedge(fa.lam_kl(i, i), fa.lam_kl(j, j))
    assert sq.distance(brute) == 0
    target = 2 * (fa.Lambda(1, 1) + fa.Lambda(2, 2) + fa.Lambda(3, 3))
    assert sq.distance(target) < 1e-15
    assert np.allclose(fa.to_lambda22(sq).e, 2 * np.eye(3))


def test_top_degree_error():
    top = fa.wedge_all(*[fa.lam(k) for k in (1, 2, 3)], *[fa.lam_bar(k) for k in (1, 2, 3)])
    with pytest.raises(DegreeError):
        fa.wedge(top, fa.FrameForm({(0,): 1.0}))


def test_bad_index():
    with pytest.raises(BasisError):
        fa.lam(4)
    with pytest.raises(BasisError):
        fa.FrameForm({(1, 0): 1.0})


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), da=st.integers(0, 3), db=st.integers(0, 3))
def test_graded_anticommutative(seed, da, db):
    rng = np.random.default_rng(seed)
    a, b = random_form(rng, da), random_form(rng, db)
    assert fa.wedge(a, b).distance((-1) ** (da * db) * fa.wedge(b, a)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_associative_and_bilinear(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = (random_form(rng, 2, 4) for _ in range(4))
    assert fa.wedge(fa.wedge(a, b), c).distance(fa.wedge(a, fa.wedge(b, c))) < 1e-10
    assert fa.wedge(a, b + 2.5j * d).distance(fa.wedge(a, b) + 2.5j * fa.wedge(a, d)) < 1e-10


def test_conj_involution_and_reality():
    rng = np.random.default_rng(1)
    f = random_form(rng, 3)
    assert f.conj().conj().distance(f) == 0
    assert (f + f.conj()).is_real()
    assert fa.lam_kl(1, 1).is_real()
    assert not fa.lam_kl(1, 2).is_real()
    assert (fa.lam_kl(1, 2) + fa.lam_kl(2, 1)).is_real()


# --- Lambda basis ----------------------------------------------------------------


def test_lambda_conjugation():
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            assert fa.Lambda(i, j).conj().distance(fa.Lambda(j, i)) == 0


def test_lambda_example():
    e = fa.to_lambda22(fa.wedge(fa.lam_kl(1, 1), fa.lam_kl(2, 2))).e
    expect = np.zeros((3, 3))
    expect[2, 2] = 1
    assert np.array_equal(e, expect)


def test_roundtrip():
    rng = np.random.default_rng(2)
    e = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose(fa.to_lambda22(fa.from_lambda22(e)).e, e, atol=1e-15)


def test_real_form_gives_hermitian():
    rng = np.random.default_rng(3)
    f = random_form(rng, 4, 20)
    f = f + f.conj()
    pure = fa.FrameForm({k: v for k, v in f.coeffs.items() if sum(x < 3 for x in k) == 2})
    assert fa.to_lambda22(pure).is_hermitian()


def test_to_lambda22_rejects_mixed_type():
    with pytest.raises(TypeError):
        fa.to_lambda22(fa.FrameForm({(0, 1, 2, 3): 1.0}))


def test_z0_coframe_example():
    r2 = 0.37
    d_r2 = fa.lam_kl(2, 2) * r2
    ddbar = r2 * fa.lam_kl(1, 1) + fa.lam_kl(2, 2) + fa.lam_kl(3, 3)
    e = fa.to_lambda22(fa.wedge(d_r2, ddbar)).e
    expect = np.zeros((3, 3))
    expect[2, 2] = r2 * r2
    expect[0, 0] = r2
    assert np.allclose(e, expect, atol=1e-16)


def test_form_matrix_is_wedge_pairing():
    """alpha -> Omega ^ i alpha ^ conj(alpha) is the Hermitian form of S o e."""
    rng = np.random.default_rng(4)
    e = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    e = e + e.conj().T
    omega = fa.from_lambda22(e)
    vol = fa.wedge_all(fa.lam_kl(1, 1), fa.lam_kl(2, 2), fa.lam_kl(3, 3)).coeffs[(0, 1, 2, 3, 4, 5)]
    h = fa.form_matrix(e)
    for _ in range(5):
        a = rng.normal(size=3) + 1j * rng.normal(size=3)
        alpha = fa.FrameForm({(k,): a[k] for k in range(3)})
        pair = 1j * fa.wedge(alpha, alpha.conj())
        val = fa.wedge(omega, pair).coeffs[(0, 1, 2, 3, 4, 5)] / vol
        assert val == pytest.approx(a @ h @ a.conj(), rel=1e-12)


# --- positivity --------------------------------------------------------------------


def test_positivity_examples():
    res = fa.positivity(fa.from_lambda22(2 * np.eye(3)))
    assert res.classification == "positive"
    assert res.minors == pytest.approx((2, 4, 8))
    e = np.eye(3)
    e[0, 0] = -1
    assert fa.positivity(fa.from_lambda22(e)).classification == "indefinite"
    e = np.diag([1.0, 1.0, 0.0])
    assert fa.positivity(fa.from_lambda22(e)).classification == "semidefinite"


def test_positivity_rejects_nonreal():
    with pytest.raises(TypeError):
        fa.positivity(fa.Lambda(1, 2))


def test_random_squares_positive():
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = fa.hermitian_11(random_positive(rng))
        assert fa.positivity(fa.wedge(w, w)).positive


def test_form_matrix_vs_e_minors_differ_in_triple_term():
    rng = np.random.default_rng(6)
    g = random_positive(rng)
    res = fa.classify_lambda(fa.square_matrix(g))
    assert res.minors[:2] == pytest.approx(res.e_minors[:2])
    E = fa.square_matrix(g)
    triple = 2 * np.real(E[0, 1] * E[1, 2] * E[2, 0])
    assert res.minors[2] - res.e_minors[2] == pytest.approx(-2 * triple, rel=1e-10)


# --- square root ---------------------------------------------------------------------


def test_square_tensor_matches_wedge():
    rng = np.random.default_rng(7)
    g = random_positive(rng)
    w = fa.hermitian_11(g)
    assert np.allclose(fa.to_lambda22(fa.wedge(w, w)).e, fa.square_matrix(g), atol=1e-12)


def test_cofactor_oracle():
    rng = np.random.default_rng(8)
    g = random_positive(rng)
    assert np.allclose(cofactor_root(fa.square_matrix(g)), g, atol=1e-12)


def test_square_root_identity():
    root = fa.form_square_root(fa.from_lambda22(2 * np.eye(3)))
    target = fa.lam_kl(1, 1) + fa.lam_kl(2, 2) + fa.lam_kl(3, 3)
    assert root.distance(target) < 1e-12


def test_square_root_roundtrip_random():
    rng = np.random.default_rng(9)
    for _ in range(100):
        g = random_positive(rng)
        w = fa.hermitian_11(g)
        root = fa.form_square_root(fa.wedge(w, w))
        assert root.distance(w) < 1e-9 * np.abs(g).max()
        assert np.allclose(fa.matrix_11(root), cofactor_root(fa.square_matrix(g)), atol=1e-9 * np.abs(g).max())


def test_square_root_homogeneity():
    rng = np.random.default_rng(10)
    g = random_positive(rng)
    E = fa.square_matrix(g)
    c = 1.7
    assert np.allclose(fa.square_root_matrix(c**4 * E), c**2 * fa.square_root_matrix(E), rtol=1e-11)


def test_square_root_cone_metric():
    r2 = 0.05
    w = (r2 ** (2 / 3)) * fa.lam_kl(1, 1) + (2 / 3) * r2 ** (-1 / 3) * fa.lam_kl(2, 2) + r2 ** (-1 / 3) * fa.lam_kl(3, 3)
    root = fa.form_square_root(fa.wedge(w, w))
    assert root.distance(w) < 1e-10 * w.max_abs()


def test_square_root_rejects_nonpositive():
    with pytest.raises(PositivityError):
        fa.form_square_root(fa.from_lambda22(np.diag([1.0, -1.0, 1.0])))
