import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conifold_lab import deformed_geometry as dg
from conifold_lab.errors import DomainError, VerificationError


def _slots(key):
    hol, anti = key
    return [(i, False) for i in hol] + [(j, True) for j in anti]


# ---------------------------------------------------------------------------
# q and the chart


def test_q_on_vanishing_sphere_limit():
    q = dg.q_point(1.0, 1.0)
    assert np.allclose(q.w, [0, 0, 0, 1])


@pytest.mark.parametrize("t, r2", [(1.0, 2.0), (0.01, 0.5), (1e-3, 7.0), (5.0, 5.0001)])
def test_q_constraints(t, r2):
    q = dg.q_point(t, r2)
    assert max(q.constraint_residuals) < 1e-14
    assert abs(np.sum(q.w**2) - t) <= 1e-14 * t


@pytest.mark.parametrize("t, r2", [(1.0, 0.5), (0.0, 1.0), (-1.0, 1.0), (1.0, math.nan)])
def test_q_domain(t, r2):
    with pytest.raises(DomainError):
        dg.q_point(t, r2)


def test_chart_requires_r2_above_t():
    with pytest.raises(DomainError):
        dg.chart_map(1.0, 1.0)


@pytest.mark.parametrize("t, r2", [(1.0, 2.0), (0.1, 30.0), (2.0, 2.01)])
def test_chart_maps_into_the_quadric(t, r2):
    chart = dg.chart_map(t, r2)
    assert min(chart.scale1, chart.scale2, chart.scale3) > 0
    rng = np.random.default_rng(1)
    z = 0.05 * chart.axis_radii() * (rng.normal(size=(20, 3)) + 1j * rng.normal(size=(20, 3)))
    w = chart.w_of(z)
    assert np.max(np.abs(np.sum(w**2, axis=1) - t)) < 1e-13 * max(1.0, r2)
    assert np.allclose(chart.w_of(np.zeros(3)), dg.q_point(t, r2).w, atol=1e-14)


@pytest.mark.parametrize("t, r2", [(1.0, 2.0), (0.3, 4.0)])
def test_ddbar_r2_in_w_and_u_coordinates(t, r2):
    # exact jet at q pulled back to (w1, w2, w3) and to u must match the
    # displayed forms before the z scaling
    chart = dg.chart_map(t, r2)
    _, grad, hess = chart.r2_jet(np.zeros((1, 3)))
    J = chart.jacobian
    Jinv = np.linalg.inv(J)
    hw = Jinv.T @ hess[0] @ Jinv.conj()
    want = np.array([
        [(r2 + t) / (2 * t), -1j * (r2 - t) / (2 * t), 0],
        [1j * (r2 - t) / (2 * t), (r2 + t) / (2 * t), 0],
        [0, 0, 1],
    ])
    assert np.allclose(hw, want, rtol=0, atol=1e-12 * r2)
    gw = grad[0] @ Jinv
    assert np.allclose(np.outer(gw, gw.conj())[1, 1], 2 * (r2 - t), rtol=1e-12)
    S = np.diag([chart.scale1, chart.scale2, chart.scale3])
    hu = S @ hess[0] @ S
    assert np.allclose(hu, np.diag([2 * t / (r2 + t), 2 * r2 / (r2 + t), 1]), atol=1e-12)


# ---------------------------------------------------------------------------
# partial derivative table


def test_first_order_vanishing():
    tab = dg.r2_partials(1.0, 2.0)
    assert tab.order1[0] == 0 and tab.order1[2] == 0
    e = tab.eta
    assert tab.order1[1] == pytest.approx(-0.5j * math.sqrt(6) * math.sqrt(3) * e / 2, rel=1e-14)


def test_mixed_22_entry():
    tab = dg.r2_partials(1.0, 2.0)
    assert tab.mixed2[1, 1] == pytest.approx(1.5 * tab.eta**2 / 2.0, rel=1e-15)


def test_full_table_matches_fd_oracle():
    tab = dg.r2_partials(1.0, 2.0, verify=False)
    rep = dg.verify_table(tab)
    assert rep.compared == 72
    assert rep.mismatches == []
    assert rep.worst < 1e-5


@settings(max_examples=25, deadline=None)
@given(
    logt=st.floats(min_value=-3, max_value=1),
    logx=st.floats(min_value=-3, max_value=3),
)
def test_low_order_table_matches_exact_jet(logt, logx):
    t = 10.0**logt
    r2 = t * (1 + 10.0**logx)
    tab = dg.r2_partials(t, r2, verify=False)
    r2q, grad, hess = dg.chart_map(t, r2).r2_jet(np.zeros((1, 3)))
    assert r2q[0] == pytest.approx(r2, rel=1e-13)
    scale = np.max(np.abs(grad))
    assert np.max(np.abs(grad[0] - tab.order1)) <= 1e-12 * scale
    assert np.max(np.abs(hess[0] - tab.mixed2)) <= 1e-12 * np.max(np.abs(tab.mixed2))


def test_table_conjugation_symmetry():
    tab = dg.r2_partials(0.5, 3.0, verify=False)
    for key in tab.entries:
        flipped = [(i, not b) for i, b in _slots(key)]
        assert tab.get(flipped) == pytest.approx(np.conj(tab.get(_slots(key))), rel=1e-15)
    # order of slots does not matter
    assert tab.get([(0, False), (1, True), (0, False)]) == tab.get([(1, True), (0, False), (0, False)])


def test_wrong_table_entry_is_reported(monkeypatch):
    orig = dg._printed_entries

    def broken(t, r2, e):
        ent = orig(t, r2, e)
        ent[((1, 1), (1, 1))] *= 1.01
        return ent

    monkeypatch.setattr(dg, "_printed_entries", broken)
    with pytest.raises(VerificationError, match="FD oracle"):
        dg.r2_partials(1.0, 2.0)


def test_fd_oracle_error_estimate_is_honest():
    chart = dg.chart_map(1.0, 2.0)
    tab = dg.r2_partials(1.0, 2.0, verify=False)
    for key in [((0,), (0,)), ((0, 0), (0,)), ((1, 1), (1, 1))]:
        val, err = dg.fd_partial(chart, _slots(key))
        assert abs(val - tab.get(_slots(key))) <= 10 * err + 1e-12


# ---------------------------------------------------------------------------
# metric at q


@pytest.mark.parametrize("t, r2", [(1.0, 2.0), (0.01, 0.5), (1.0, 1.0001), (1.0, 1e4)])
def test_metric_is_identity(t, r2):
    m = dg.metric_at_q(t, r2)
    assert np.max(np.abs(m.g - np.eye(3))) < 1e-10
    assert m.det_ddbar == pytest.approx(1.5 * r2, rel=1e-12)


def test_dr2_wedge_coefficient():
    t, r2 = 1.0, 2.0
    m = dg.metric_at_q(t, r2)
    x = dg.eta_t(t, r2) ** 3 / r2**2
    want = 1.5 * r2 ** (4 / 3) * x ** (2 / 3) * (1 - t * t / r2**2)
    assert m.dr2_dbar_r2[1, 1].real == pytest.approx(want, rel=1e-13)
    off = m.dr2_dbar_r2.copy()
    off[1, 1] = 0
    assert np.max(np.abs(off)) == 0


# ---------------------------------------------------------------------------
# curvature

POINTS = [(1.0, 2.0), (0.01, 0.5), (1.0, 1.0011), (1e-3, 1.0), (1.0, 1e3)]


@pytest.fixture(scope="module")
def tensors():
    return {p: dg.curvature_at_q(*p, check=False) for p in POINTS}


@pytest.mark.parametrize("p", POINTS)
def test_kahler_symmetries(tensors, p):
    assert tensors[p].symmetry_defect() < 1e-10


@pytest.mark.parametrize("p", POINTS)
def test_ricci_flat(tensors, p):
    c = tensors[p]
    diag = [abs(sum(c.R[i, i, j, j] for j in range(3))) for i in range(3)]
    assert max(diag) < 1e-8 * c.scale
    assert c.ricci_defect() < 1e-8
    # R_{i ibar i ibar} = -sum_{j != i} R_{i ibar j jbar}
    for i in range(3):
        rest = sum(c.R[i, i, j, j] for j in range(3) if j != i)
        assert abs(c.R[i, i, i, i] + rest) < 1e-8 * c.scale


@pytest.mark.parametrize("p", [(1.0, 2.0), (0.01, 0.5), (1.0, 1.0011), (1.0, 1e3)])
def test_curvature_against_fd_metric_oracle(tensors, p):
    c = tensors[p]
    R_fd = dg.curvature_fd_oracle(dg.chart_map(*p))
    assert dg.oracle_discrepancy(c.R, R_fd) < 1e-3


@pytest.mark.parametrize("p", POINTS)
def test_combined_identity_13(p):
    lhs, rhs = dg.combined_identity(dg.r2_partials(*p, verify=False))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("p", [(1.0, 2.0), (0.01, 0.5), (1.0, 1e3)])
def test_odd_index_components_vanish(tensors, p):
    # components in which some index occurs an odd number of times vanish,
    # both in the assembly and in the FD oracle
    c = tensors[p]
    R_fd = dg.curvature_fd_oracle(dg.chart_map(*p))
    n_zero = 0
    for idx in itertools.product(range(3), repeat=4):
        if any(idx.count(a) % 2 for a in range(3)):
            n_zero += 1
            assert abs(c.R[idx]) < 1e-8 * c.scale
            assert abs(R_fd[idx]) < 1e-4 * np.max(np.abs(R_fd))
    assert n_zero == 81 - 21


def test_curvature_with_checks_passes():
    c = dg.curvature_at_q(1.0, 2.0)
    assert c.R.shape == (3, 3, 3, 3)


def test_curvature_guard():
    with pytest.raises(DomainError):
        dg.curvature_at_q(1.0, 1.0005)
    with pytest.raises(DomainError):
        dg.curvature_at_q(1.0, 0.9)


def test_curvature_homogeneity(tensors):
    # r2 -> lambda r2, t -> lambda t scales R by lambda**(-2/3)
    a = tensors[(1.0, 1e3)].sup_scaled()
    b = tensors[(1e-3, 1.0)].sup_scaled()
    assert a == pytest.approx(b, rel=1e-9)


def test_curvature_sup_is_stable():
    base = dg.curvature_sup([1e-3, 1e-2, 1e-1, 1.0], dg.ratio_grid(hi=1e3))
    ext = dg.curvature_sup([1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0], dg.ratio_grid(hi=1e4))
    assert np.all(np.isfinite(base.values))
    assert abs(ext.C_hat - base.C_hat) < 0.1 * base.C_hat
    assert base.C_hat < 2.0


def test_ratio_grid_respects_guard():
    g = dg.ratio_grid()
    assert g[0] > 1 + dg.CURVATURE_GUARD and g[-1] == pytest.approx(1e3)
    assert np.all(np.diff(g) > 0)


# ---------------------------------------------------------------------------
# comparisons


@pytest.mark.parametrize("t, r2", [(1.0, 2.0), (0.01, 3.0), (2.0, 2.02), (1.0, 1e3)])
def test_volume_ratio(t, r2):
    cmp = dg.volume_and_gradient_comparison(t, r2)
    assert cmp.vol_ratio * r2 == pytest.approx(2 / 3, rel=1e-10)


def test_grad_const_is_generalised_eigenvalue():
    t, r2 = 1.0, 2.0
    m = dg.metric_at_q(t, r2)
    cmp = dg.volume_and_gradient_comparison(t, r2)
    # brute force: sup over random covectors of |df|_e^2 / (r^(-2/3) |df|_co^2)
    rng = np.random.default_rng(0)
    a = np.linalg.inv(m.ddbar_r2)
    best = 0.0
    for _ in range(4000):
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        num = (v @ a @ v.conj()).real
        den = r2 ** (-1 / 3) * (v @ np.linalg.inv(m.g) @ v.conj()).real
        best = max(best, num / den)
    assert best <= cmp.grad_const * (1 + 1e-12)
    assert best > 0.99 * cmp.grad_const


def test_grad_const_stable():
    sup_small = max(dg.volume_and_gradient_comparison(1.0, x).grad_const for x in dg.ratio_grid(1.01, 1e2))
    sup_big = max(dg.volume_and_gradient_comparison(1.0, x).grad_const for x in dg.ratio_grid(1.01, 1e3))
    assert abs(sup_big - sup_small) < 0.05 * sup_small


def test_grad_const_cone_limit():
    # cone: (r2)_{1 1bar} = r2 / eta = r**(2/3) is the smallest eigenvalue, so C = 1
    vals = [dg.volume_and_gradient_comparison(t, 1.0).grad_const for t in (1e-2, 1e-4, 1e-6)]
    assert abs(vals[-1] - 1) < 1e-6
    assert abs(vals[0] - 1) > abs(vals[1] - 1) > abs(vals[2] - 1)


# ---------------------------------------------------------------------------
# S^3 limit


def test_s3_limit_value():
    s = dg.s3_limit(1.0, [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    assert s.expected == pytest.approx(0.5 * (2 / 3) ** (1 / 3))
    assert s.limit == pytest.approx(0.43679, abs=1e-5)
    assert abs(s.limit - s.expected) < 1e-3 * s.expected
    assert s.limit_spread < 1e-8


def test_s3_limit_scaling():
    eps = [1e-2, 5e-3, 2.5e-3]
    one = dg.s3_limit(1.0, eps).limit
    for t in (0.01, 0.3, 7.0):
        assert dg.s3_limit(t, eps).limit / one == pytest.approx(t ** (2 / 3), rel=1e-8)


def test_s3_eigenvalues_at_finite_eps():
    ev = dg.tangent_eigenvalues(1.0, 1.01)
    target = dg.s3_limit_value(1.0)
    assert ev.shape == (5,)
    assert np.all(np.abs(ev / target - 1) < 0.03)


@pytest.mark.parametrize("eps", [[1e-2], [1e-2, -1e-3], [1e-2, 1e-2], [0.0, 1e-2]])
def test_s3_limit_domain(eps):
    with pytest.raises(DomainError):
        dg.s3_limit(1.0, eps)
