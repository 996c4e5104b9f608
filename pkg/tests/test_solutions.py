import math

import numpy as np
import pytest

from kawasym import expr as E
from kawasym import model as M
from kawasym import solutions as S
from kawasym.expr import Const, Domain

def mk(n, a, b, s, lo=1.0, hi=2.0):
    return M.KawaharaEq(n, E.parse(a), E.parse(b), E.parse(s), Domain("t", lo, hi))


FIG1 = mk(2, "1/t", "-1/t", "-0.1/t")


# ---------------------------------------------------------------------------
# degenerate family

def test_degenerate_basic():
    eq = mk(1, "1", "t", "exp(t)")
    sol = S.degenerate_solution(eq, 0.0, 0.0)
    assert E.evaluate(sol.expr, {"t": 2.0, "x": 1.0}) == pytest.approx(0.5)
    assert S.pde_residual(eq, sol).normalized <= 1e-12


def test_degenerate_with_exponential_alpha():
    eq = mk(1, "exp(t)", "2*exp(t)", "exp(t)")
    sol = S.degenerate_solution(eq, 1.0, 2.0)
    ref = (0.5 + 1.0) / (math.exp(1.5) + 2.0)
    assert E.evaluate(sol.expr, {"t": 1.5, "x": 0.5}) == pytest.approx(ref, rel=1e-13)
    assert S.pde_residual(eq, sol).max_abs <= 1e-10


def test_degenerate_independent_of_dispersion():
    # third and fifth x-derivatives vanish, so beta and sigma never enter
    a = S.degenerate_solution(mk(1, "1", "t", "exp(t)"), 0.3, 1.0)
    b = S.degenerate_solution(mk(1, "1", "7*t^2+1", "2+sin(t)^2"), 0.3, 1.0)
    assert a.expr == b.expr
    assert S.pde_residual(b.equation, b).normalized <= 1e-12


def test_degenerate_rejects_pole_in_domain():
    eq = mk(1, "1", "t", "exp(t)")
    with pytest.raises(S.SolutionError, match="root"):
        S.degenerate_solution(eq, 0.0, -1.5)  # t - 1.5 vanishes inside [1, 2]
    with pytest.raises(S.SolutionError, match="n = 1"):
        S.degenerate_solution(mk(2, "1", "1", "1"), 0.0, 0.0)


# ---------------------------------------------------------------------------
# squared-tanh family (n = 2)

def test_tanh_fig1_closed_form_and_residual():
    sol = S.tanh_solution_n2(FIG1, 1.0, 0.0)
    for t0, x0 in [(1.0, 0.3), (1.7, -1.2), (2.0, 4.0)]:
        ref = -3.0 + 6.0 * math.tanh(x0 - 3.4 * math.log(t0)) ** 2
        assert E.evaluate(sol.expr, {"t": t0, "x": x0}) == pytest.approx(ref, abs=1e-13)
    assert S.pde_residual(FIG1, sol).normalized <= 1e-8


def test_tanh_fig2_and_fig3_configs():
    fig2 = mk(2, "1/t^2", "-1/t^2", "-0.1/t^2")
    assert S.pde_residual(fig2, S.tanh_solution_n2(fig2, 1.0, -17.0)).normalized <= 1e-8
    fig3 = mk(2, "sqrt(t)", "-sqrt(t)", "-0.1*sqrt(t)")
    assert S.pde_residual(fig3, S.tanh_solution_n2(fig3, 1.0, 15.0)).normalized <= 1e-8


def test_tanh_zero_wavenumber_is_constant():
    sol = S.tanh_solution_n2(FIG1, 0.0, 0.7)
    assert E.diff(sol.expr, "x") == Const(0.0)
    assert E.evaluate(sol.expr, {"t": 1.0, "x": 0.0}) == pytest.approx(1.0)
    assert S.pde_residual(FIG1, sol).max_abs == 0.0


def test_tanh_residual_invariant_under_phase_shift():
    base = S.pde_residual(FIG1, S.tanh_solution_n2(FIG1, 1.0, 0.0)).normalized
    for chi in (-11.0, 2.5, 40.0):
        shifted = S.pde_residual(FIG1, S.tanh_solution_n2(FIG1, 1.0, chi)).normalized
        assert shifted <= max(10 * base, 1e-12)


def test_tanh_preconditions():
    with pytest.raises(S.SolutionError, match="sigma/alpha < 0"):
        S.tanh_solution_n2(mk(2, "1", "-1", "0.1"), 1.0, 0.0)
    with pytest.raises(S.SolutionError, match="proportional"):
        S.tanh_solution_n2(mk(2, "1", "-t", "-0.1"), 1.0, 0.0)
    with pytest.raises(S.SolutionError, match="n = 2"):
        S.tanh_solution_n2(mk(1, "1", "-1", "-0.1"), 1.0, 0.0)


# ---------------------------------------------------------------------------
# solitary-wave family (n = 1)

def test_kudryashov_branch1_wavenumber_and_residual():
    sol = S.kudryashov_family(1.0, -1.0, 1.0, 1, 0.3, 0.0)
    assert sol.params["kappa"] == pytest.approx(math.sqrt(13) / 26.0, rel=1e-14)
    assert S.pde_residual(sol.equation, sol).normalized <= 1e-8


def test_kudryashov_branch2_mirror():
    one = S.kudryashov_family(2.0, 1.5, -0.3, 1, -0.2, 0.4)
    two = S.kudryashov_family(2.0, 1.5, -0.3, 2, -0.2, 0.4)
    assert two.params["kappa"] == pytest.approx(-one.params["kappa"], rel=1e-14)
    assert S.pde_residual(two.equation, two).normalized <= 1e-8


def test_kudryashov_stationary_when_mu_zero():
    sol = S.kudryashov_family(1.0, -1.0, 1.0, 1, 0.0, 0.0)
    assert E.diff(sol.expr, "t") == Const(0.0)


def test_kudryashov_complex_branches_rejected():
    for branch in (3, 4, 5, 6):
        with pytest.raises(S.ComplexBranchError):
            S.kudryashov_family(1.0, -1.0, 1.0, branch, 0.0, 0.0)
    with pytest.raises(S.SolutionError, match="beta\\*sigma < 0"):
        S.kudryashov_family(1.0, 1.0, 1.0, 1, 0.0, 0.0)


def test_mapped_kudryashov_residual():
    eq = mk(1, "1", "-t", "t^3")
    sol = S.mapped_kudryashov(eq, 0.0, 1.0, 0.0, 0.3, 0.0, 1)
    assert S.pde_residual(eq, sol).normalized <= 1e-7


def test_mapped_kudryashov_gauge_only_limit():
    # delta3 = 0, delta4 = 1 degenerates to the plain family through the gauge
    eq = mk(1, "2", "-2", "2")
    sol = S.mapped_kudryashov(eq, 0.0, 0.0, 1.0, 0.3, 0.1, 1)
    plain = S.kudryashov_family(1.0, -1.0, 1.0, 1, 0.3, 0.1)
    for t0, x0 in [(1.0, 0.2), (1.8, -2.3)]:
        got = E.evaluate(sol.expr, {"t": t0, "x": x0})
        ref = E.evaluate(plain.expr, {"t": 2.0 * t0, "x": x0})  # int(2 dt) = 2t
        assert got == pytest.approx(ref, rel=1e-12)
    assert S.pde_residual(eq, sol).normalized <= 1e-8


def test_mapped_kudryashov_matches_pushed_family():
    # two construction paths: direct formula vs pushing the constant-
    # coefficient solution through the inverse of the constant map
    eq = mk(1, "1", "-t", "t^3")
    const_eq, tr = M.map_to_constant(eq)
    bt = E.evaluate(const_eq.beta, {"t": const_eq.domain.midpoint()})
    st = E.evaluate(const_eq.sigma, {"t": const_eq.domain.midpoint()})
    plain = S.kudryashov_family(1.0, bt, st, 1, 0.3, 0.0, domain=const_eq.domain)
    pushed = tr.inverse().push_solution(plain.expr)
    direct = S.mapped_kudryashov(eq, 0.0, 1.0, 0.0, 0.3, 0.0, 1)
    ts = np.linspace(1.0, 2.0, 7)[:, None]
    xs = np.linspace(-3.0, 3.0, 7)[None, :]
    a = E.eval_grid(pushed, {"t": ts, "x": xs})
    b = E.eval_grid(direct.expr, {"t": ts, "x": xs})
    assert np.nanmax(np.abs(a - b)) <= 1e-10 * max(1.0, np.nanmax(np.abs(b)))


def test_mapped_kudryashov_requires_closed_form_antiderivative():
    eq = mk(1, "exp(t^2)", "-exp(t^2)*(t^2+1)", "exp(t^2)*(t^2+1)^3",
            lo=0.0, hi=0.8)
    with pytest.raises(S.SolutionError, match="closed form"):
        S.mapped_kudryashov(eq, 0.0, 1.0, 1.0, 0.0, 0.0, 1)


def test_mapped_kudryashov_rejects_wrong_shape():
    eq = mk(1, "1", "-t^2", "t^3")  # beta not linear in int(alpha)
    with pytest.raises(S.SolutionError):
        S.mapped_kudryashov(eq, 0.0, 1.0, 0.0, 0.0, 0.0, 1)


# ---------------------------------------------------------------------------
# residual and conservation machinery

def test_constant_candidate_has_zero_residual():
    eq = mk(1, "1", "1", "1")
    rep = S.pde_residual(eq, Const(0.7))
    assert rep.max_abs == 0.0 and rep.normalized == 0.0
    r1, r2 = S.conservation_check(eq, Const(0.7))
    assert r1.max_abs == 0.0 and r2.max_abs == 0.0


def test_residual_detects_perturbation():
    eq = mk(1, "1", "t", "exp(t)")
    good = S.degenerate_solution(eq, 0.0, 0.0)
    bad = E.add(good.expr, E.parse("0.01*x^2"))
    assert S.pde_residual(eq, bad).normalized > 1e-3


def test_conservation_on_verified_solutions():
    sol = S.tanh_solution_n2(FIG1, 1.0, 0.0)
    r1, r2 = S.conservation_check(FIG1, sol)
    assert r1.normalized <= 1e-8
    assert r2.normalized <= 1e-8
    eq = mk(1, "1", "t", "exp(t)")
    r1, r2 = S.conservation_check(eq, S.degenerate_solution(eq, 0.3, 1.0))
    assert r1.normalized <= 1e-9
    assert r2.normalized <= 1e-9


def test_pushed_solution_stays_verified():
    # equivalence maps solutions to solutions
    eq = mk(1, "1", "2*t", "5*t^3")
    const_eq, tr = M.map_to_constant(eq)
    u = S.degenerate_solution(
        M.KawaharaEq(1.0, Const(1.0), const_eq.beta, const_eq.sigma,
                     const_eq.domain), 0.5, 9.0)
    pulled = tr.inverse().push_solution(u.expr)
    assert S.pde_residual(eq, pulled).normalized <= 1e-9


def test_residual_flags_undefined_points():
    eq = mk(1, "1", "1", "1")
    u = E.parse("ln(x)")  # undefined for x <= 0
    rep = S.pde_residual(eq, u, grid=(np.linspace(1, 2, 5),
                                      np.linspace(-1.0, 2.0, 7)))
    assert rep.flagged > 0


def test_solution_validity_check():
    eq = mk(1, "1", "1", "1")
    with pytest.raises(S.SolutionError, match="unbound"):
        S.ClosedFormSolution(E.parse("k*x", ("k",)), eq, "demo")
    with pytest.raises(S.SolutionError, match="undefined"):
        S.ClosedFormSolution(E.parse("1/(t - 1.5)"), eq, "demo")
