import math

import numpy as np
import pytest

from conifold_lab import DomainError, VerificationError
from conifold_lab import cutoffs as co


def closed_form_min_law(spec):
    """Minimum of the cubic q(s) = 2 psi + s psi' on [c3, c4] from the roots
    of q'."""
    a0, a1, a2, a3, c3 = spec.a0, spec.a1, spec.a2, spec.a3, spec.c3
    # in u = s - c3: q = 2 psi + (u + c3) psi'
    psi = np.polynomial.Polynomial([a0, a1, a2, a3])
    q = 2 * psi + np.polynomial.Polynomial([c3, 1.0]) * psi.deriv()
    cands = [0.0, spec.c4 - c3]
    for r in q.deriv().roots():
        if abs(r.imag) < 1e-12 and 0 <= r.real <= spec.c4 - c3:
            cands.append(r.real)
    return min(q(u) for u in cands)


def test_identity_segment():
    for n in (4, 10, 100):
        sp = co.build_chi(n)
        assert co.chi_eval(sp, 1.0) == 1.0
        assert co.chi_eval(sp, 2 ** (4 / 3), 1) == 1.0


def test_c2_quadratic_root():
    sp = co.build_chi(50)
    c1 = 2 ** (4 / 3)
    x = (-6 * c1 + math.sqrt(36 * c1**2 + 96)) / 24
    assert sp.c2 == pytest.approx(2.6406, abs=1e-4)
    assert sp.c2 - sp.c1 == pytest.approx(x, rel=1e-15)
    # the defining equation of c2
    assert abs(2 * (1 - 3 * x * x) + sp.c2 * (-6 * x)) < 1e-14


def test_a0_and_tau():
    sp = co.build_chi(100)
    x = sp.c2 - sp.c1
    assert sp.tau_const == pytest.approx(sp.c2**2 * (1 - 3 * x * x), rel=1e-15)
    assert sp.a0 == pytest.approx(sp.tau_const / sp.c3**2, rel=1e-15)
    assert sp.a3 > 0 > sp.a2


@pytest.mark.parametrize("n", [4, 10, 100, 1000])
def test_psi_boundary_conditions(n):
    sp = co.build_chi(n)
    c3, c4 = sp.c3, sp.c4
    scale = sp.a0
    assert co.psi_eval(sp, c3) == pytest.approx(co.chi_eval(sp, c3, 1), rel=1e-12)
    assert co.psi_eval(sp, c3, 1) == pytest.approx(co.chi_eval(sp, c3, 2), rel=1e-12)
    assert abs(co.psi_eval(sp, c4)) < 1e-10 * scale
    assert abs(co.psi_eval(sp, c4, 1)) < 1e-10 * scale / (c4 - c3)


@pytest.mark.parametrize("n", [4, 50, 1000])
def test_joins_continuous(n):
    j = co.joins(co.build_chi(n))
    assert max(j["chi"]) < 1e-12 * co.build_chi(n).final_value
    assert max(j["chi1"]) < 1e-12
    assert j["chi2"][0] < 1e-12 and j["chi2"][1] < 1e-12


def test_law_on_inverse_segment():
    sp = co.build_chi(200)
    s = np.linspace(sp.c2, sp.c3, 1000)[1:]
    law = 2 * co.chi_eval(sp, s, 1) + s * co.chi_eval(sp, s, 2)
    assert np.max(np.abs(law)) < 1e-12
    assert np.all(co.chi_law(sp, s) == 0.0)


def test_final_matches_antiderivative():
    sp = co.build_chi(30)
    from scipy.integrate import quad

    integral, _ = quad(lambda x: co.psi_eval(sp, x), sp.c3, sp.c4, epsabs=1e-15)
    assert sp.final_value == pytest.approx(sp.chi_c3 + integral, rel=1e-13)
    assert co.chi_eval(sp, sp.c4 + 1) == sp.final_value
    assert co.chi_eval(sp, sp.c4 + 1, 1) == 0.0


def test_left_tie_break():
    sp = co.build_chi(20)
    # at c2 the cubic piece is used; its chi'' differs from the inverse law
    assert co.chi_eval(sp, sp.c2, 2) == pytest.approx(-6 * (sp.c2 - sp.c1), rel=1e-15)


def test_build_chi_domain():
    with pytest.raises(DomainError):
        co.build_chi(3)
    with pytest.raises(DomainError):
        co.chi_eval(co.build_chi(10), -1.0)


@pytest.mark.parametrize("n", [50, 100, 500, 1000])
def test_grid_min_matches_closed_form(n):
    sp = co.build_chi(n)
    d = co.chi_deficits(sp, grid_size=20001)
    exact = max(0.0, -closed_form_min_law(sp))
    assert d.item3_law == pytest.approx(exact, rel=1e-6)


def test_verify_bounds_stable():
    rep = co.verify_chi_bounds([50, 100, 500, 1000])
    assert rep.passed
    assert rep.variation < 0.20
    assert rep.law_residual < 1e-12
    for d in rep.deficits:
        assert -rep.c1_hat * d.n ** (-10 / 3) <= d.a2 < 0 < d.a3 <= rep.c1_hat * d.n ** (-11 / 3)


def test_verify_bounds_rejects_small_n():
    with pytest.raises(DomainError):
        co.verify_chi_bounds([5, 50])


def test_verify_bounds_growth_raises(monkeypatch):
    monkeypatch.setattr(co, "C1_HAT_VARIATION", 1e-6)
    with pytest.raises(VerificationError):
        co.verify_chi_bounds([50, 1000])


def test_smoothstep_plateaus():
    assert co.smoothstep_eval(co.SIGMA, 0.5) == 1.0
    assert co.smoothstep_eval(co.SIGMA, 5.0) == 0.0
    assert co.smoothstep_eval(co.RHO, 0.6) == 1.0
    assert co.smoothstep_eval(co.RHO, 0.9) == 0.0


def test_smoothstep_monotone_and_c2():
    s = np.linspace(0, 5, 5001)
    d1 = co.smoothstep_eval(co.SIGMA, s, 1)
    # -30 u^2 (1-u)^2 / w <= 0 by factorisation
    assert np.all(d1 <= 0)
    assert np.all(np.diff(co.smoothstep_eval(co.SIGMA, s)) <= 0)
    for b in (co.SIGMA.lo, co.SIGMA.hi):
        assert co.smoothstep_eval(co.SIGMA, b, 1) == 0.0
        assert abs(co.smoothstep_eval(co.SIGMA, b, 2)) < 1e-15


def test_smoothstep_derivative_fd():
    from conifold_lab.numerics import central_diff

    for s in (1.3, 2.5, 3.9):
        fd = central_diff(lambda x: co.smoothstep_eval(co.SIGMA, x), s, 1e-3)
        assert fd == pytest.approx(co.smoothstep_eval(co.SIGMA, s, 1), rel=1e-9)
        fd2 = central_diff(lambda x: co.smoothstep_eval(co.SIGMA, x, 1), s, 1e-3)
        assert fd2 == pytest.approx(co.smoothstep_eval(co.SIGMA, s, 2), rel=1e-8, abs=1e-12)
