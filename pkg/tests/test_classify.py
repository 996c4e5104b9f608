import math

import numpy as np
import pytest

from kawasym import classify as C
from kawasym import expr as E
from kawasym import model as M
from kawasym.expr import Const, Domain, Var

T12 = Domain("t", 1.0, 2.0)


def make_eq(n, alpha, beta, sigma, dom=T12):
    return M.KawaharaEq(n, E.parse(alpha), E.parse(beta), E.parse(sigma), dom)


def quad_of(eq):
    gauged, _ = M.gauge_alpha1(eq)
    return C.solve_classifying_system(gauged)


# ---------------------------------------------------------------------------
# classifying system

def test_power_pair_recovers_triple():
    quad = quad_of(make_eq(2, "1", "t^2", "t^4"))
    vec = quad.vector()[:3]
    ref = np.array([1.0, 0.0, 2.0])
    cos = vec @ ref / (np.linalg.norm(vec) * np.linalg.norm(ref))
    assert cos >= 1.0 - 1e-8


def test_arctan_pair_recovers_quadruple():
    quad = quad_of(make_eq(1, "1", "(t^2+1)^(1/2)", "(t^2+1)^(3/2)"))
    vec = quad.vector()
    ref = np.array([1.0, 0.0, 1.0, 0.0])
    cos = vec @ ref / (np.linalg.norm(vec) * np.linalg.norm(ref))
    assert cos >= 1.0 - 1e-8


def test_incompatible_pair_returns_none():
    assert quad_of(make_eq(2, "1", "t", "exp(t)")) is None


def test_quadruple_recovery_from_generated_shapes():
    # build (beta, sigma) from a known quadruple and recover it up to scale
    dom = T12
    for p, q, r, s in [(0.0, 1.0, 0.0, 1.7), (0.0, 0.0, 1.0, 0.6),
                       (1.0, 0.0, 1.0, 2.4)]:
        info = C.canonicalize(C.ClassifyingQuadruple(p, q, r, s), 1.0, dom)
        eq = M.KawaharaEq(1, Const(1.0),
                          E.mul(Const(1.3), info.beta_shape),
                          E.mul(Const(-0.8), info.sigma_shape), dom)
        quad = C.solve_classifying_system(eq)
        vec, ref = quad.vector(), np.array([p, q, r, s])
        cos = abs(vec @ ref) / (np.linalg.norm(vec) * np.linalg.norm(ref))
        assert cos >= 1.0 - 1e-8, (p, q, r, s)


def test_requires_gauged_input():
    eq = make_eq(1, "exp(t)", "exp(t)", "exp(t)")
    with pytest.raises(C.ClassifyError):
        C.solve_classifying_system(eq)


# ---------------------------------------------------------------------------
# canonicalization

def test_canonicalize_power_case():
    info = C.canonicalize(C.ClassifyingQuadruple(0.0, 1.0, 0.0, 2.0), 1.0, T12)
    assert info.case == "1'"
    assert info.params["rho"] == pytest.approx(2.0)
    assert info.metadata["equivalent_rho"] == pytest.approx(-1.0)


def test_canonicalize_exponential_and_constant_cases():
    assert C.canonicalize(C.ClassifyingQuadruple(0, 0, 1, 1), 1.0, T12).case == "2'"
    assert C.canonicalize(C.ClassifyingQuadruple(0, 0, 1, 0), 1.0, T12).case == "3'"


def test_canonicalize_oscillatory_case():
    info = C.canonicalize(C.ClassifyingQuadruple(1.0, 0.0, 1.0, 3.0), 1.0, T12)
    assert info.case == "4'"
    assert info.params["nu"] == pytest.approx(1.0)


def test_canonicalize_triples():
    assert C.canonicalize(C.ClassifyingQuadruple(1, 0, 1.5), 2.0, T12).case == "1"
    assert C.canonicalize(C.ClassifyingQuadruple(0, 1, 1), 2.0, T12).case == "2"
    assert C.canonicalize(C.ClassifyingQuadruple(0, 1, 0), 2.0, T12).case == "3"


# ---------------------------------------------------------------------------
# full classification

def gen_components(g):
    return (E.to_text(g.tau), E.to_text(g.xi), E.to_text(g.eta1), E.to_text(g.eta0))


def test_classify_case1_table_row():
    r = C.classify(make_eq(2, "1", "t", "t^(7/3)"))
    assert r.case == "1"
    assert r.params["rho"] == pytest.approx(1.0, abs=1e-10)
    assert r.params["lam"] == pytest.approx(1.0, rel=1e-10)
    assert r.params["delta"] == pytest.approx(1.0, rel=1e-10)
    assert len(r.generators) == 2
    ext = r.generators[1]
    pt = {"t": 1.3, "x": 0.7}
    # 3n t d_t + (rho+1) n x d_x + (rho-2) u d_u with n=2, rho=1
    assert E.evaluate(ext.tau, pt) == pytest.approx(6 * 1.3)
    assert E.evaluate(ext.xi, pt) == pytest.approx(4 * 0.7)
    assert E.evaluate(ext.eta1, pt) == pytest.approx(-1.0)


def test_classify_case3prime_basis():
    r = C.classify(make_eq(1, "1", "0.31", "1.7"))
    assert r.case == "3'"
    assert len(r.generators) == 3
    taus = [E.to_text(g.tau) for g in r.generators]
    assert taus == ["0", "0", "1"]
    xi_galilean = r.generators[1].xi
    assert xi_galilean == Var("t")


def test_classify_ice_preset():
    r = C.classify(M.ice_preset())
    assert r.case == "1'"
    assert r.params["rho"] == pytest.approx(0.5, abs=1e-10)
    assert r.params["lam"] == pytest.approx(2.20215e-5, rel=1e-10)
    assert r.params["delta"] == pytest.approx(1.05566e-8, rel=1e-10)


def test_classify_kernel_case():
    r = C.classify(make_eq(2, "1", "t", "exp(t)"))
    assert r.case == "0"
    assert len(r.generators) == 1


def test_classify_all_table_rows_recover_parameters():
    rows = [
        ("0", make_eq(2, "1", "t", "exp(t)"), {}),
        ("1", make_eq(2, "1", "t", "t^(7/3)"), {"rho": 1.0, "lam": 1.0, "delta": 1.0}),
        ("2", make_eq(2, "1", "exp(t)", "exp((5/3)*t)"), {"m": 1.0, "lam": 1.0, "delta": 1.0}),
        ("3", make_eq(2, "1", "1", "1"), {"lam": 1.0, "delta": 1.0}),
        ("0'", make_eq(1, "1", "t", "exp(t)"), {}),
        ("1'", make_eq(1, "1", "t^2", "t^4"), {"rho": 2.0, "lam": 1.0, "delta": 1.0}),
        ("2'", make_eq(1, "1", "exp(t)", "exp((5/3)*t)"), {"m": 1.0, "lam": 1.0, "delta": 1.0}),
        ("3'", make_eq(1, "1", "1", "1"), {"lam": 1.0, "delta": 1.0}),
        ("4'", make_eq(1, "1", "(t^2+1)^(1/2)*exp(3*arctan(t))",
                       "(t^2+1)^(3/2)*exp(5*arctan(t))"),
         {"nu": 1.0, "lam": 1.0, "delta": 1.0}),
    ]
    for case, eq, params in rows:
        r = C.classify(eq)
        assert r.case == case
        for key, val in params.items():
            assert r.params[key] == pytest.approx(val, rel=1e-8, abs=1e-10), (case, key)
        expected_size = {"0": 1, "1": 2, "2": 2, "3": 2, "0'": 2}.get(case, 3)
        assert len(r.generators) == expected_size


def test_classify_equivalence_invariance_corollary1():
    eq = make_eq(2, "1", "exp(t)", "exp((5/3)*t)")
    rng = np.random.default_rng(3)
    for _ in range(5):
        d0, d2 = rng.uniform(-1, 1, 2)
        d1 = rng.uniform(0.5, 2.0)
        d3 = rng.uniform(0.5, 2.0)
        out, _ = M.apply_equiv(eq, M.Corollary1Params(d0, d1, d2, d3))
        assert C.classify(out).case == "2"


def test_classify_pullback_through_gauge():
    # ungauged form of the power row: alpha=exp(t), T=exp(t),
    # beta = alpha*T^2, sigma = alpha*T^4
    eq = make_eq(2, "exp(t)", "exp(t)*exp(t)^2", "exp(t)*exp(t)^4")
    r = C.classify(eq)
    assert r.case == "1"
    assert r.params["rho"] == pytest.approx(2.0, abs=1e-9)
    # generators carry the alpha^-1 factor in tau and still verify exactly
    assert max(v.normalized for v in r.verifications) <= 1e-9
    ext = r.generators[-1]
    assert E.evaluate(ext.tau, {"t": 1.2}) == pytest.approx(
        3 * 2 * math.exp(1.2) / math.exp(1.2), rel=1e-12)


def test_classify_general_alpha_exponential_row():
    # ungauged exponential row with rate 2: beta = 1.3*alpha*exp(2*T),
    # sigma = 0.4*alpha*exp((10/3)*T) with alpha = t, T = t^2/2
    eq = make_eq(1, "t", "1.3*t*exp(t^2)", "0.4*t*exp((5/3)*t^2)")
    r = C.classify(eq)
    assert r.case == "2'"
    assert r.params["m"] == pytest.approx(2.0, rel=1e-9)
    assert r.params["lam"] == pytest.approx(1.3, rel=1e-9)
    assert r.params["delta"] == pytest.approx(0.4, rel=1e-9)
    assert max(v.normalized for v in r.verifications) <= 1e-9


def test_classify_through_quadrature_gauge():
    # alpha outside the closed antiderivative subset: the gauge goes through
    # the quadrature and numeric-inversion nodes, and the tiny evaluation
    # noise in the composed coefficients must not mask the case
    eq = M.KawaharaEq(1, E.parse("exp(t^2)"), E.parse("1.5*exp(t^2)"),
                      E.parse("-0.25*exp(t^2)"), Domain("t", 0.2, 1.0))
    r = C.classify(eq)
    assert r.case == "3'"
    assert r.params["lam"] == pytest.approx(1.5, rel=1e-9)
    assert r.params["delta"] == pytest.approx(-0.25, rel=1e-9)
    assert max(v.normalized for v in r.verifications) <= 1e-9


def test_classify_moebius_position_case3prime():
    base = make_eq(1, "1", "1.5", "0.7")
    p = M.Corollary2Params(1.3, 0.4, 0.5, 2.0, 0.1, -0.2, 1.1)
    out, _ = M.apply_equiv(base, p)
    r = C.classify(out)
    assert r.case == "3'"
    assert not r.metadata["canonical_position"]
    assert max(v.normalized for v in r.verifications) <= 1e-9


def test_result_serializes_to_json():
    r = C.classify(make_eq(1, "1", "t^2", "t^4"))
    doc = r.to_json()
    assert doc["case"] == "1'"
    assert len(doc["generators"]) == 3
    assert all(isinstance(v, float) for v in doc["quadruple"])


# ---------------------------------------------------------------------------
# determining equations

def test_verify_dx_is_exact_for_any_coefficients():
    eq = make_eq(2, "exp(t)", "t^2 + sin(t) + 3", "exp(t)*(2 + cos(t))")
    g = C.kernel_generators(2)[0]
    v = C.verify_generator(eq, g)
    assert v.residual == 0.0


def test_verify_galilean_needs_gauged_alpha():
    eq = make_eq(1, "1", "t^2 + sin(t) + 3", "exp(t)*(2 + cos(t))")
    g = C.kernel_generators(1)[1]
    assert C.verify_generator(eq, g).residual <= 1e-12
    # for alpha != 1 the kernel partner is int(alpha) d_x + d_u, not t d_x + d_u
    eq2 = make_eq(1, "exp(t)", "t^2 + 3", "exp(t)")
    assert C.verify_generator(eq2, g).normalized > 1e-3
    lifted = C.SymmetryGenerator(Const(0.0), E.parse("exp(t)"), Const(0.0),
                                 Const(1.0), "T*d_x + d_u")
    assert C.verify_generator(eq2, lifted).normalized <= 1e-12


def test_verify_corrupted_generator_fails_loudly():
    eq = make_eq(2, "1", "t", "t")
    bad = C.SymmetryGenerator(Const(1.0), Const(0.0), Const(0.0), Const(0.0), "d_t")
    v = C.verify_generator(eq, bad)
    assert v.normalized > 1e-3
    assert "beta" in v.worst_equation or "sigma" in v.worst_equation


def test_generator_structural_validation():
    with pytest.raises(ValueError):
        C.SymmetryGenerator(Var("x"), Const(0.0), Const(0.0), Const(0.0))
    with pytest.raises(ValueError):
        C.SymmetryGenerator(Const(0.0), Var("u"), Const(0.0), Const(0.0))


# ---------------------------------------------------------------------------
# optimal subalgebras

def test_subalgebras_case1_generic_rho():
    r = C.classify(make_eq(2, "1", "t", "t^(7/3)"))
    rows = C.optimal_subalgebras(r)
    assert [e.label for e in rows] == ["g0", "g1.1"]
    g = rows[1].generator
    assert E.evaluate(g.tau, {"t": 1.0}) == pytest.approx(6.0)


def test_subalgebras_case3_has_free_speed():
    r = C.classify(make_eq(2, "1", "1", "1"))
    rows = C.optimal_subalgebras(r)
    assert [e.label for e in rows] == ["g0", "g3"]
    assert rows[1].free_params == {"a": "real"}
    inst = rows[1].instantiate(a=2.5)
    assert E.evaluate(inst.xi, {"t": 0.0, "x": 0.0}) == pytest.approx(2.5)
    assert C.verify_generator(make_eq(2, "1", "1", "1"), inst).normalized <= 1e-12


def test_subalgebras_case4prime():
    r = C.classify(make_eq(1, "1", "(t^2+1)^(1/2)*exp(3*arctan(t))",
                           "(t^2+1)^(3/2)*exp(5*arctan(t))"))
    rows = C.optimal_subalgebras(r)
    assert [e.label for e in rows] == ["g0", "g4'"]
    g = rows[1].generator
    assert E.evaluate(g.tau, {"t": 2.0}) == pytest.approx(5.0)
    assert E.evaluate(g.eta0, {"t": 2.0, "x": 1.5}) == pytest.approx(1.5)


def test_subalgebras_case1prime_variants():
    base = C.classify(make_eq(1, "1", "t^2", "t^4"))
    labels = [e.label for e in C.optimal_subalgebras(base)]
    assert labels == ["g0", "g0'", "g1'.3"]
    neg = C.classify(make_eq(1, "1", "t^(-1)", "t^(-1)"))
    assert [e.label for e in C.optimal_subalgebras(neg)] == ["g0", "g0'", "g1'.2"]
    gen = C.classify(M.ice_preset())
    assert [e.label for e in C.optimal_subalgebras(gen)] == ["g0", "g0'", "g1'.1"]


def test_subalgebras_galilean_sign_parameter():
    r = C.classify(M.ice_preset())
    rows = C.optimal_subalgebras(r)
    assert rows[1].free_params == {"s0": "{-1,0,1}"}
    inst = rows[1].instantiate(s0=-1)
    assert E.evaluate(inst.xi, {"t": 3.0, "x": 0.0}) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        rows[1].instantiate()
    with pytest.raises(ValueError):
        rows[1].instantiate(s0=0, bogus=1)


def test_subalgebras_case0_kernel_only():
    r = C.classify(make_eq(2, "1", "t", "exp(t)"))
    assert [e.label for e in C.optimal_subalgebras(r)] == ["g0"]


def test_subalgebras_refused_at_moebius_position():
    base = make_eq(1, "1", "1.5", "0.7")
    out, _ = M.apply_equiv(base, M.Corollary2Params(1.3, 0.4, 0.5, 2.0, 0, 0, 1))
    r = C.classify(out)
    with pytest.raises(C.ClassifyError, match="canonical"):
        C.optimal_subalgebras(r)


def test_canonicalize_rejects_degenerate_triple():
    with pytest.raises(ValueError):
        C.ClassifyingQuadruple(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(C.ClassifyError, match="p\\^2 \\+ q\\^2"):
        C.canonicalize(C.ClassifyingQuadruple(0.0, 0.0, 1.0), 2.0, T12)


# ---------------------------------------------------------------------------
# randomized sweep

def test_classify_fuzz_random_row_instances():
    # random parameters for every extension case; each instance must come
    # back with its case tag, parameters to 1e-8, and a verified basis
    rng = np.random.default_rng(2024)
    checked = 0
    for trial in range(14):
        lam = float(rng.uniform(0.2, 3.0)) * (1 if rng.uniform() < 0.5 else -1)
        delta = float(rng.uniform(0.2, 3.0)) * (1 if rng.uniform() < 0.5 else -1)
        kind = trial % 4
        n = float(rng.choice([1.0, 2.0, 3.0]))
        if kind == 0:
            rho = float(rng.uniform(-2.5, 3.0))
            beta = f"{lam}*t^({rho})"
            sigma = f"{delta}*t^({(5 * rho + 2) / 3})"
            want = ("1", "1'")
            params = {"rho": rho}
        elif kind == 1:
            m = float(rng.uniform(-2.0, 2.0)) or 0.7
            beta = f"{lam}*exp({m}*t)"
            sigma = f"{delta}*exp({5 * m / 3}*t)"
            want = ("2", "2'")
            params = {"m": m}
        elif kind == 2:
            beta, sigma = f"{lam}", f"{delta}"
            want = ("3", "3'")
            params = {}
        else:
            n = 1.0
            nu = float(rng.uniform(0.0, 2.0))
            beta = f"{lam}*(t^2+1)^(1/2)*exp({3 * nu}*arctan(t))"
            sigma = f"{delta}*(t^2+1)^(3/2)*exp({5 * nu}*arctan(t))"
            want = ("4'",)
            params = {"nu": nu}
        r = C.classify(make_eq(n, "1", beta, sigma))
        expected = want[0] if n != 1 else want[-1]
        assert r.case == expected, (trial, beta, sigma, r.case)
        for key, val in params.items():
            got = r.params[key]
            assert abs(got - val) <= 1e-8 * max(1.0, abs(val)), (trial, key)
        assert r.params["lam"] == pytest.approx(lam, rel=1e-8)
        assert r.params["delta"] == pytest.approx(delta, rel=1e-8)
        assert max(v.normalized for v in r.verifications) <= 1e-9
        checked += 1
    assert checked == 14


def test_classify_fuzz_shifted_and_scaled_inputs():
    # Corollary-1 images of the power row: shifted powers with rescaled
    # amplitudes still land in case 1 with a verified basis
    rng = np.random.default_rng(7)
    base = make_eq(2, "1", "1.7*t^2", "0.9*t^4")
    for _ in range(6):
        d0 = float(rng.uniform(-0.5, 3.0))
        d1 = float(rng.uniform(0.5, 2.0))
        d2 = float(rng.uniform(-1.0, 1.0))
        d3 = float(rng.uniform(0.5, 2.0))
        out, _ = M.apply_equiv(base, M.Corollary1Params(d0, d1, d2, d3))
        r = C.classify(out)
        assert r.case == "1"
        assert r.params["rho"] == pytest.approx(2.0, rel=1e-8)
        assert max(v.normalized for v in r.verifications) <= 1e-9
