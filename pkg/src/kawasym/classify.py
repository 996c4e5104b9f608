"""Symmetry-extension case detection for the gauged class.

The coefficient pair (beta, sigma) of a gauged equation either admits only
the kernel algebra or satisfies one first-order linear constraint pair
parameterized by a triple (general n) or quadruple (n = 1).  The solver
samples the constraint system at a handful of points, extracts the null
space, and verifies the candidate densely; case tags then follow from the
root configuration of the time polynomial (discriminant sign for n = 1).

Generators are constructed exactly from the fitted triple/quadruple, pulled
back through the gauge, and checked against the determining equations by
:func:`verify_generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as E
from .expr import Const, Domain, Expr, Var, add, div, mul, neg, pow_, sub
from .model import KawaharaEq, PointTransform, gauge_alpha1

__all__ = [
    "ClassifyingQuadruple", "SymmetryGenerator", "ClassificationResult",
    "GeneratorVerification", "SubalgebraEntry",
    "solve_classifying_system", "canonicalize", "classify",
    "verify_generator", "optimal_subalgebras",
    "ClassifyError", "InternalFitError",
]

T = Var("t")
X = Var("x")
U = Var("u")

SVD_RTOL = 1e-9          # relative singular-value threshold
DENSE_RTOL = 1e-8        # classifying-ODE verification, relative sup-norm
FIT_RTOL = 1e-8          # constancy check when fitting lam/delta
SNAP = 1e-8              # clean SVD noise out of quadruple components
GEN_RTOL = 1e-9          # normalized determining-equation residual


class ClassifyError(Exception):
    pass


class InternalFitError(ClassifyError):
    pass


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class ClassifyingQuadruple:
    """Coefficients of the classifying constraint pair; s is unused (0) for
    n != 1.  Normalized so the first nonzero of (p, q, r) equals 1."""

    p: float
    q: float
    r: float
    s: float = 0.0

    def __post_init__(self):
        if self.p == 0.0 and self.q == 0.0 and self.r == 0.0:
            raise ValueError("need p^2 + q^2 + r^2 != 0")

    def vector(self) -> np.ndarray:
        return np.array([self.p, self.q, self.r, self.s])

    @property
    def discriminant(self) -> float:
        return self.q * self.q - 4.0 * self.p * self.r


@dataclass(frozen=True)
class SymmetryGenerator:
    """Vector field tau*d_t + xi*d_x + (eta1*u + eta0)*d_u."""

    tau: Expr
    xi: Expr
    eta1: Expr
    eta0: Expr
    label: str = ""

    def __post_init__(self):
        # free parameter names are allowed; the structural ban is on x, u in
        # tau and on u in the other components
        if E.free_vars(self.tau) & {"x", "u"}:
            raise ValueError("tau must depend on t only")
        if "u" in E.free_vars(self.xi):
            raise ValueError("xi must depend on (t, x) only")
        for e in (self.eta1, self.eta0):
            if "u" in E.free_vars(e):
                raise ValueError("eta must be affine in u: eta1, eta0 depend on (t, x)")

    def eta(self) -> Expr:
        return add(mul(self.eta1, U), self.eta0)

    def scaled(self, k: float) -> "SymmetryGenerator":
        c = Const(float(k))
        return SymmetryGenerator(mul(c, self.tau), mul(c, self.xi),
                                 mul(c, self.eta1), mul(c, self.eta0), self.label)

    def relabel(self, label: str) -> "SymmetryGenerator":
        return SymmetryGenerator(self.tau, self.xi, self.eta1, self.eta0, label)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "tau": E.to_text(self.tau),
            "xi": E.to_text(self.xi),
            "eta": E.to_text(self.eta()),
        }


@dataclass(frozen=True)
class GeneratorVerification:
    residual: float
    scale: float
    worst_equation: str

    @property
    def normalized(self) -> float:
        return 0.0 if self.residual == 0.0 else self.residual / max(self.scale, 1e-300)


@dataclass(frozen=True)
class ClassificationResult:
    case: str
    params: dict
    generators: tuple
    gauge: PointTransform
    quadruple: ClassifyingQuadruple | None
    equation: KawaharaEq
    gauged: KawaharaEq
    metadata: dict = field(default_factory=dict)
    verifications: tuple = ()

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "parameters": self.params,
            "generators": [g.to_json() for g in self.generators],
            "quadruple": list(self.quadruple.vector()) if self.quadruple else None,
            "gauge": self.gauge.to_json(),
            "metadata": self.metadata,
            "max_generator_residual": max((v.normalized for v in self.verifications),
                                          default=0.0),
        }


# ---------------------------------------------------------------------------
# classifying system

def _system_rows(eq: KawaharaEq, ts: np.ndarray) -> np.ndarray:
    b, s = eq.beta, eq.sigma
    bt, st = E.diff(b, "t"), E.diff(s, "t")
    bv = E.eval_grid(b, {"t": ts})
    sv = E.eval_grid(s, {"t": ts})
    btv = E.eval_grid(bt, {"t": ts})
    stv = E.eval_grid(st, {"t": ts})
    if eq.n != 1:
        rows = np.empty((2 * len(ts), 3))
        rows[0::2] = np.stack([ts * btv, btv, -bv], axis=1)
        rows[1::2] = np.stack([ts * stv - (2.0 / 3.0) * sv, stv,
                               -(5.0 / 3.0) * sv], axis=1)
    else:
        rows = np.empty((2 * len(ts), 4))
        rows[0::2] = np.stack([ts * ts * btv - ts * bv, ts * btv, btv, -bv], axis=1)
        rows[1::2] = np.stack([ts * ts * stv - 3.0 * ts * sv,
                               ts * stv - (2.0 / 3.0) * sv, stv,
                               -(5.0 / 3.0) * sv], axis=1)
    norms = np.max(np.abs(rows), axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return rows / norms


def _dense_residual(eq: KawaharaEq, vec: np.ndarray, n_points: int = 64) -> float:
    """Relative sup-norm defect of both classifying constraints.

    Normalized per point by the product of the coefficient-row and candidate
    sup-norms, so a candidate annihilating derivative rows that only carry
    quadrature rounding noise still registers as a solution.
    """
    ts = eq.domain.sample(n_points)
    b, s = eq.beta, eq.sigma
    bt, st = E.diff(b, "t"), E.diff(s, "t")
    bv = E.eval_grid(b, {"t": ts})
    sv = E.eval_grid(s, {"t": ts})
    btv = E.eval_grid(bt, {"t": ts})
    stv = E.eval_grid(st, {"t": ts})
    if eq.n != 1:
        rows1 = np.stack([ts * btv, btv, -bv], axis=1)
        rows2 = np.stack([ts * stv - (2.0 / 3.0) * sv, stv,
                          -(5.0 / 3.0) * sv], axis=1)
    else:
        rows1 = np.stack([ts * ts * btv - ts * bv, ts * btv, btv, -bv], axis=1)
        rows2 = np.stack([ts * ts * stv - 3.0 * ts * sv,
                          ts * stv - (2.0 / 3.0) * sv, stv,
                          -(5.0 / 3.0) * sv], axis=1)
    vnorm = float(np.max(np.abs(vec)))
    worst = 0.0
    for rows in (rows1, rows2):
        resid = np.abs(rows @ vec)
        scale = np.maximum(np.max(np.abs(rows), axis=1) * vnorm, 1e-300)
        worst = max(worst, float(np.max(resid / scale)))
    return worst


def solve_classifying_system(eq_gauged: KawaharaEq,
                             n_fit: int = 8) -> ClassifyingQuadruple | None:
    """Null-space fit of the sampled classifying system; None means the
    kernel-only case."""
    if not E.is_zero(sub(eq_gauged.alpha, Const(1.0)), eq_gauged.domain):
        raise ClassifyError("classifying system requires a gauged equation (alpha = 1)")
    ts = eq_gauged.domain.sample(n_fit)
    rows = _system_rows(eq_gauged, ts)
    _, svals, vt = np.linalg.svd(rows)
    if svals[-2] <= SVD_RTOL * svals[0]:
        raise InternalFitError(
            "over-determined fit: classifying system has a null space of dimension >= 2")
    vec = vt[-1]
    if _dense_residual(eq_gauged, vec) > DENSE_RTOL:
        return None
    head = vec[:3]
    nz = np.nonzero(np.abs(head) > 1e-6 * np.max(np.abs(head)))[0]
    if len(nz) == 0:
        return None
    vec = vec / head[nz[0]]
    vec[np.abs(vec) <= SNAP * np.max(np.abs(vec))] = 0.0
    if _dense_residual(eq_gauged, vec) > DENSE_RTOL:
        return None
    if eq_gauged.n != 1:
        return ClassifyingQuadruple(float(vec[0]), float(vec[1]), float(vec[2]), 0.0)
    return ClassifyingQuadruple(float(vec[0]), float(vec[1]), float(vec[2]),
                                float(vec[3]))


# ---------------------------------------------------------------------------
# canonicalization

@dataclass(frozen=True)
class CaseInfo:
    case: str
    params: dict
    beta_shape: Expr
    sigma_shape: Expr
    metadata: dict
    canonical_position: bool


def _root_factor(root: float, dom: Domain) -> Expr:
    """(t - root) oriented to stay positive on the domain."""
    if root <= dom.lo:
        return sub(T, Const(root))
    if root >= dom.hi:
        return sub(Const(root), T)
    raise ClassifyError(f"classifying-polynomial root {root} lies inside the domain "
                        f"[{dom.lo}, {dom.hi}] where coefficients must not vanish")


def canonicalize(quad: ClassifyingQuadruple, n: float,
                 dom: Domain | None = None) -> CaseInfo:
    """Case tag, fitted parameters and coefficient shape functions for a
    normalized triple/quadruple."""
    if dom is None:
        dom = Domain("t", 1.0, 2.0)
    p, q, r, s = quad.p, quad.q, quad.r, quad.s
    norm = max(abs(p), abs(q), abs(r), abs(s), 1e-300)

    if n != 1:
        if abs(p) <= 1e-12 * norm and abs(q) <= 1e-12 * norm:
            raise ClassifyError("invalid triple: the constraint pair needs "
                                "p^2 + q^2 != 0")
        if abs(p) > 1e-12 * norm:
            rho = r / p
            t0 = -q / p + 0.0  # drop negative zero
            if abs(rho) <= 1e-12:
                beta_shape: Expr = Const(1.0)
            else:
                beta_shape = pow_(_root_factor(t0, dom), Const(rho))
            rho_s = (5.0 * rho + 2.0) / 3.0
            sigma_shape = pow_(_root_factor(t0, dom), Const(rho_s))
            return CaseInfo("1", {"rho": rho, "t0": t0}, beta_shape, sigma_shape,
                            {}, True)
        if abs(r) > 1e-12 * norm:
            m = r / q
            return CaseInfo("2", {"m": m},
                            E.exp(mul(Const(m), T)),
                            E.exp(mul(Const(5.0 * m / 3.0), T)), {}, True)
        return CaseInfo("3", {}, Const(1.0), Const(1.0), {}, True)

    D = quad.discriminant
    dscale = max(q * q, abs(4.0 * p * r), 1e-300)
    if abs(D) <= 1e-7 * dscale:
        D = 0.0

    if D == 0.0:
        if abs(p) <= 1e-12 * norm:
            # double root at infinity: exponential or constant coefficients
            m = s / r
            if abs(s) <= 1e-9 * norm:
                return CaseInfo("3'", {}, Const(1.0), Const(1.0), {}, True)
            return CaseInfo("2'", {"m": m},
                            E.exp(mul(Const(m), T)),
                            E.exp(mul(Const(5.0 * m / 3.0), T)), {}, True)
        t0 = -q / (2.0 * p) + 0.0
        sbar = (s + p * t0) / p
        base = sub(T, Const(t0))
        if abs(sbar) <= 1e-7 * max(1.0, norm / abs(p)):
            case = "3'"
        else:
            case = "2'"
        wb = s / p + t0
        ws = 3.0 * t0 + (5.0 * s + 2.0 * q) / (3.0 * p)
        beta_shape = mul(base, E.exp(div(Const(-wb), base)))
        sigma_shape = mul(pow_(base, 3.0), E.exp(div(Const(-ws), base)))
        return CaseInfo(case, {"t0": t0, "sbar": sbar}, beta_shape, sigma_shape,
                        {"moebius_position": True}, False)

    if D > 0.0:
        if abs(p) <= 1e-12 * norm:
            t1 = -r / q + 0.0
            rho = s / q
            rho_s = (5.0 * s + 2.0 * q) / (3.0 * q)
            f1 = _root_factor(t1, dom)
            beta_shape = pow_(f1, Const(rho)) if abs(rho) > 1e-12 else Const(1.0)
            sigma_shape = pow_(f1, Const(rho_s)) if abs(rho_s) > 1e-12 else Const(1.0)
            canonical_rho = max(rho, 1.0 - rho)
            meta = {"canonical_rho": canonical_rho}
            if abs(rho - 2.0) <= 1e-9 or abs(rho + 1.0) <= 1e-9:
                meta["equivalent_rho"] = 1.0 - rho
            return CaseInfo("1'", {"rho": rho, "t0": t1}, beta_shape, sigma_shape,
                            meta, True)
        disc = math.sqrt(D)
        t1 = (-q - disc) / (2.0 * p)
        t2 = (-q + disc) / (2.0 * p)
        a1 = (p * t1 + s) / (p * (t1 - t2))
        a2 = (p * t2 + s) / (p * (t2 - t1))
        b1 = (3.0 * p * t1 + (5.0 * s + 2.0 * q) / 3.0) / (p * (t1 - t2))
        b2 = (3.0 * p * t2 + (5.0 * s + 2.0 * q) / 3.0) / (p * (t2 - t1))
        f1, f2 = _root_factor(t1, dom), _root_factor(t2, dom)
        beta_shape = mul(pow_(f1, Const(a1)), pow_(f2, Const(a2)))
        sigma_shape = mul(pow_(f1, Const(b1)), pow_(f2, Const(b2)))
        return CaseInfo("1'", {"rho": a1, "t0": t1},
                        beta_shape, sigma_shape,
                        {"canonical_rho": max(a1, a2), "roots": (t1, t2),
                         "moebius_position": True}, False)

    # D < 0: complex-conjugate roots mu +/- i eta
    if p < 0:
        p, q, r, s = -p, -q, -r, -s
    mu = -q / (2.0 * p) + 0.0
    eta = math.sqrt(-D) / (2.0 * p)
    nu_signed = (s / p + mu) / (3.0 * eta)
    quadratic = add(pow_(sub(T, Const(mu)), 2.0), Const(eta * eta))
    angle = E.arctan(div(sub(T, Const(mu)), Const(eta)))
    beta_shape = mul(pow_(quadratic, 0.5), E.exp(mul(Const(3.0 * nu_signed), angle)))
    sigma_shape = mul(pow_(quadratic, 1.5), E.exp(mul(Const(5.0 * nu_signed), angle)))
    canonical = abs(mu) <= 1e-9 and abs(eta - 1.0) <= 1e-9
    return CaseInfo("4'", {"nu": abs(nu_signed), "nu_signed": nu_signed,
                           "mu": mu, "eta": eta},
                    beta_shape, sigma_shape,
                    {"reflected": nu_signed < 0}, canonical)


# ---------------------------------------------------------------------------
# generators

def kernel_generators(n: float) -> list[SymmetryGenerator]:
    one, zero = Const(1.0), Const(0.0)
    gens = [SymmetryGenerator(zero, one, zero, zero, "d_x")]
    if n == 1:
        gens.append(SymmetryGenerator(zero, T, zero, one, "t*d_x + d_u"))
    return gens


def extension_generator(quad: ClassifyingQuadruple, n: float) -> SymmetryGenerator:
    """Exact extension generator determined by the fitted triple/quadruple,
    scaled to match the classification table's presentation in canonical
    position."""
    p, q, r, s = quad.p, quad.q, quad.r, quad.s
    if n != 1:
        tau = add(mul(Const(p), T), Const(q))
        xi = mul(Const((p + r) / 3.0), X)
        eta1 = Const((r - 2.0 * p) / (3.0 * n))
        g = SymmetryGenerator(tau, xi, eta1, Const(0.0), "extension")
        if abs(p) > 1e-12 or abs(r) > 1e-12:
            g = g.scaled(3.0 * n).relabel("extension")
        return g
    c2, c1, c0 = p, q / 2.0, r
    c3 = (s - q / 2.0) / 3.0
    tau = add(mul(Const(c2), pow_(T, 2.0)), add(mul(Const(2.0 * c1), T), Const(c0)))
    xi = mul(add(mul(Const(c2), T), Const(c1 + c3)), X)
    eta1 = sub(Const(c3 - c1), mul(Const(c2), T))
    eta0 = mul(Const(c2), X)
    g = SymmetryGenerator(tau, xi, eta1, eta0, "extension")
    if abs(p) <= 1e-12 and (abs(q) > 1e-12 or abs(s) > 1e-12):
        g = g.scaled(3.0).relabel("extension")
    return g


def pull_back_generator(g: SymmetryGenerator, gauge: PointTransform,
                        alpha: Expr) -> SymmetryGenerator:
    """Generator of the gauged equation -> generator of the original one.

    The gauge only reparameterizes time, so xi and eta compose with the time
    map while tau additionally divides by alpha (the time map's derivative).
    """
    if gauge.is_identity():
        return g
    compose = {"t": gauge.tmap}
    tau = div(E.subst(g.tau, compose), alpha)
    return SymmetryGenerator(tau, E.subst(g.xi, compose),
                             E.subst(g.eta1, compose), E.subst(g.eta0, compose),
                             g.label)


# ---------------------------------------------------------------------------
# determining equations

def _u_power_terms(groups: Sequence[tuple[float, list[Expr]]]) -> list[list[Expr]]:
    """Merge coefficient-term lists whose u-powers coincide."""
    merged: list[tuple[float, list[Expr]]] = []
    for power, terms in groups:
        for i, (pw, ts) in enumerate(merged):
            if abs(pw - power) <= 1e-9:
                merged[i] = (pw, ts + terms)
                break
        else:
            merged.append((power, list(terms)))
    return [ts for _, ts in merged]


def determining_equation_terms(eq: KawaharaEq, g: SymmetryGenerator
                               ) -> list[tuple[str, list[Expr]]]:
    """Each determining equation as a list of summands (for scale tracking).

    The u-polynomial identities are split into one equation per power of u,
    merging powers that coincide (the n = 1 contractions)."""
    al, b, sg, n = eq.alpha, eq.beta, eq.sigma, float(eq.n)
    tau, xi, eta1, eta0 = g.tau, g.xi, g.eta1, g.eta0
    d = E.diff
    tau_t = d(tau, "t")
    xi_t, xi_x = d(xi, "t"), d(xi, "x")
    xi_xx, xi_xxx = d(xi, "x", 2), d(xi, "x", 3)
    xi_x4, xi_x5 = d(xi, "x", 4), d(xi, "x", 5)
    e1_t, e1_x = d(eta1, "t"), d(eta1, "x")
    e1_xx, e1_xxx = d(eta1, "x", 2), d(eta1, "x", 3)
    e1_x4, e1_x5 = d(eta1, "x", 4), d(eta1, "x", 5)
    e0_t, e0_x = d(eta0, "t"), d(eta0, "x")
    e0_xxx, e0_x5 = d(eta0, "x", 3), d(eta0, "x", 5)
    b_t, s_t, al_t = d(b, "t"), d(sg, "t"), d(al, "t")

    eqs: list[tuple[str, list[Expr]]] = [
        ("eta1_x = 2 xi_xx", [e1_x, mul(Const(-2.0), xi_xx)]),
        ("third/fifth-order balance",
         [mul(Const(3.0), mul(e1_x, b)), mul(Const(-3.0), mul(xi_xx, b)),
          mul(Const(10.0), mul(e1_xxx, sg)), mul(Const(-5.0), mul(xi_x4, sg))]),
        ("sigma transport",
         [mul(tau, s_t), mul(Const(-5.0), mul(xi_x, sg)), mul(tau_t, sg)]),
        ("beta transport",
         [mul(tau, b_t), mul(Const(-3.0), mul(xi_x, b)), mul(tau_t, b),
          mul(Const(-10.0), mul(xi_xxx, sg)), mul(Const(10.0), mul(e1_xx, sg))]),
    ]
    split_a = _u_power_terms([
        (n + 1.0, [mul(al, e1_x)]),
        (n, [mul(al, e0_x)]),
        (1.0, [e1_t, mul(e1_xxx, b), mul(e1_x5, sg)]),
        (0.0, [e0_t, mul(e0_xxx, b), mul(e0_x5, sg)]),
    ])
    split_b = _u_power_terms([
        (n, [mul(tau, al_t), mul(al, tau_t), neg(mul(al, xi_x)),
             mul(Const(n), mul(al, eta1))]),
        (n - 1.0, [mul(Const(n), mul(al, eta0))]),
        (0.0, [mul(Const(3.0), mul(e1_xx, b)), neg(mul(xi_xxx, b)),
               mul(Const(5.0), mul(e1_x4, sg)), neg(mul(xi_x5, sg)), neg(xi_t)]),
    ])
    eqs += [(f"u-split A[{i}]", ts) for i, ts in enumerate(split_a)]
    eqs += [(f"u-split B[{i}]", ts) for i, ts in enumerate(split_b)]
    return eqs


def verify_generator(eq: KawaharaEq, g: SymmetryGenerator,
                     grid: int = 16, x_range: tuple[float, float] = (-5.0, 5.0)
                     ) -> GeneratorVerification:
    """Sup-norm residual of the determining equations over a (t, x) grid."""
    ts = np.linspace(eq.domain.lo, eq.domain.hi, grid)[:, None]
    xs = np.linspace(x_range[0], x_range[1], grid)[None, :]
    arrays = {"t": ts, "x": xs}
    worst = 0.0
    scale = 0.0
    worst_name = ""
    for name, terms in determining_equation_terms(eq, g):
        vals = [E.eval_grid(term, arrays) for term in terms]
        resid = float(np.nanmax(np.abs(sum(vals))))
        term_scale = max(float(np.nanmax(np.abs(v))) for v in vals)
        scale = max(scale, term_scale)
        if resid > worst:
            worst, worst_name = resid, name
    return GeneratorVerification(worst, scale, worst_name)


# ---------------------------------------------------------------------------
# fitting and the top-level entry point

def _fit_constant(values: np.ndarray, what: str) -> float:
    center = float(np.mean(values))
    spread = float(np.max(np.abs(values - center)))
    if spread > FIT_RTOL * max(abs(center), 1e-300):
        raise InternalFitError(f"{what} is not constant over the sample "
                               f"(spread {spread:.3e} around {center:.6e})")
    return center


def classify(eq: KawaharaEq) -> ClassificationResult:
    """Full pipeline: gauge, solve the classifying system, canonicalize,
    fit the coefficient amplitudes, build and verify the generator basis."""
    gauged, gauge_tr = gauge_alpha1(eq)
    quad = solve_classifying_system(gauged)
    n = float(eq.n)

    if quad is None:
        case = "0" if n != 1 else "0'"
        params: dict = {}
        metadata: dict = {}
        gens_gauged = kernel_generators(n)
    else:
        info = canonicalize(quad, n, gauged.domain)
        case = info.case
        params = dict(info.params)
        metadata = dict(info.metadata)
        metadata["canonical_position"] = info.canonical_position
        ts = gauged.domain.sample(16)
        bvals = E.eval_grid(div(gauged.beta, info.beta_shape), {"t": ts})
        svals = E.eval_grid(div(gauged.sigma, info.sigma_shape), {"t": ts})
        params["lam"] = _fit_constant(bvals, "beta / beta-shape")
        params["delta"] = _fit_constant(svals, "sigma / sigma-shape")
        gens_gauged = kernel_generators(n) + [extension_generator(quad, n)]

    gens = tuple(pull_back_generator(g, gauge_tr, eq.alpha) for g in gens_gauged)
    verifications = tuple(verify_generator(eq, g) for g in gens)
    bad = [(g.label, v.normalized) for g, v in zip(gens, verifications)
           if v.normalized > GEN_RTOL]
    if bad:
        raise ClassifyError(f"generator verification failed: {bad}")
    return ClassificationResult(case, params, gens, gauge_tr, quad, eq, gauged,
                                metadata, verifications)


# ---------------------------------------------------------------------------
# optimal subalgebras (one-dimensional)

@dataclass(frozen=True)
class SubalgebraEntry:
    """One row of the optimal-system list; ``free_params`` maps a symbolic
    parameter name to its admissible values ('real' or '{-1,0,1}')."""

    label: str
    generator: SymmetryGenerator
    free_params: dict

    def instantiate(self, **values: float) -> SymmetryGenerator:
        missing = set(self.free_params) - set(values)
        if missing:
            raise ValueError(f"subalgebra {self.label} needs values for {sorted(missing)}")
        for name in values:
            if name not in self.free_params:
                raise ValueError(f"subalgebra {self.label} has no parameter '{name}'")
        mapping = {k: Const(float(v)) for k, v in values.items()}
        g = self.generator
        return SymmetryGenerator(E.subst(g.tau, mapping), E.subst(g.xi, mapping),
                                 E.subst(g.eta1, mapping), E.subst(g.eta0, mapping),
                                 g.label)

    def to_json(self) -> dict:
        return {"label": self.label, "generator": self.generator.to_json(),
                "free_params": self.free_params}


def _entry(label, tau, xi, eta1, eta0, free) -> SubalgebraEntry:
    g = SymmetryGenerator(E.wrap(tau), E.wrap(xi), E.wrap(eta1), E.wrap(eta0), label)
    return SubalgebraEntry(label, g, free)


def optimal_subalgebras(result: ClassificationResult) -> list[SubalgebraEntry]:
    """Optimal system of one-dimensional subalgebras for the classified case,
    instantiated with the fitted parameters.

    The sign parameter of the translated Galilean subalgebra is named s0
    here (the classification tables reuse the dispersion symbol for it);
    it ranges over {-1, 0, 1}.  The parameter a is an arbitrary real.

    The rows presume the canonical coefficient positions; classifications
    obtained at a transformed (Moebius) position are refused rather than
    silently instantiated with mismatched parameters.
    """
    if result.metadata.get("canonical_position") is False:
        raise ClassifyError(
            "the optimal-system rows apply to the canonical coefficient "
            "positions; map the equation to canonical form first")
    zero, one = Const(0.0), Const(1.0)
    A = Var("a")
    S0 = Var("s0")
    n = float(result.equation.n)
    case = result.case
    p = result.params
    g0 = _entry("g0", zero, one, zero, zero, {})
    rows = [g0]
    rho = p.get("rho")
    shift = p.get("t0", 0.0) or 0.0
    t_sh = sub(T, Const(shift)) if shift else T

    if case == "0":
        return rows
    if case == "1":
        if abs(rho + 1.0) > 1e-8:
            rows.append(_entry("g1.1", mul(Const(3.0 * n), t_sh),
                               mul(Const((rho + 1.0) * n), X),
                               Const(rho - 2.0), zero, {}))
        else:
            rows.append(_entry("g1.2", mul(Const(n), t_sh), A, Const(-1.0), zero,
                               {"a": "real"}))
        return rows
    if case == "2":
        m = p["m"]
        rows.append(_entry("g2", Const(3.0 * n), mul(Const(n * m), X),
                           Const(m), zero, {}))
        return rows
    if case == "3":
        rows.append(_entry("g3", one, A, zero, zero, {"a": "real"}))
        return rows

    galilean = _entry("g0'", zero, add(T, A), zero, one, {"a": "real"})
    if case == "0'":
        rows.append(galilean)
        return rows
    galilean_s = _entry("g0'", zero, add(T, S0), zero, one, {"s0": "{-1,0,1}"})
    if case == "1'":
        rows.append(galilean_s)
        if abs(rho + 1.0) <= 1e-8:
            rows.append(_entry("g1'.2", t_sh, A, Const(-1.0), zero, {"a": "real"}))
        elif abs(rho - 2.0) <= 1e-8:
            rows.append(_entry("g1'.3", t_sh, add(X, mul(A, T)), zero, A,
                               {"a": "real"}))
        else:
            rows.append(_entry("g1'.1", mul(Const(3.0), t_sh),
                               mul(Const(rho + 1.0), X), Const(rho - 2.0), zero, {}))
        return rows
    if case == "2'":
        m = p.get("m", 1.0)
        rows.append(_entry("g0'", zero, T, zero, one, {}))
        rows.append(_entry("g2'", Const(3.0), mul(Const(m), X), Const(m), zero, {}))
        return rows
    if case == "3'":
        rows.append(_entry("g3'.1", one, zero, zero, zero, {}))
        rows.append(_entry("g3'.2", A, mul(Const(2.0), T), zero, Const(2.0),
                           {"a": "real"}))
        return rows
    if case == "4'":
        nu = p["nu"]
        rows.append(_entry("g4'", add(pow_(T, 2.0), one),
                           mul(add(T, Const(nu)), X),
                           sub(Const(nu), T), X, {}))
        return rows
    raise ClassifyError(f"unknown case tag {case!r}")
