"""Equations of the class u_t + a(t) u^n u_x + b(t) u_xxx + s(t) u_xxxxx = 0
and the point transformations acting on them.

Covers the time-reparameterization gauge that normalizes the convection
coefficient to 1, the two equivalence-group parameterizations (general n
and n = 1), their restrictions to the gauged class, the constant-coefficient
reducibility test, and the explicit map onto a constant-coefficient target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import expr as E
from .expr import (
    Antideriv, Const, Domain, Expr, InverseFn, Var,
    add, div, mul, neg, pow_, sub,
)

__all__ = [
    "KawaharaEq", "PointTransform",
    "Theorem1Params", "Theorem2Params", "Corollary1Params", "Corollary2Params",
    "ReducibilityResult",
    "gauge_alpha1", "apply_equiv", "reducibility", "map_to_constant",
    "push_solution", "ice_preset", "ice_coefficients",
    "ModelError", "GaugeError", "EquivalenceError", "NotReducibleError",
]

T = Var("t")
X = Var("x")
U = Var("u")

NONVANISHING_TOL = 1e-12

# Growing-ice model constants: lambda and delta of the beta = lambda*t^(1/2),
# sigma = delta*t^(3/2) preset, in the paper's hour-based units.
ICE_LAMBDA = 2.20215e-5
ICE_DELTA = 1.05566e-8
GRAVITY = 9.81


class ModelError(Exception):
    pass


class GaugeError(ModelError):
    pass


class EquivalenceError(ModelError):
    pass


class NotReducibleError(ModelError):
    def __init__(self, failed):
        self.failed = tuple(failed)
        super().__init__(f"equation is not reducible to constant coefficients; "
                         f"failed criteria: {', '.join(self.failed)}")


# ---------------------------------------------------------------------------
# core types

@dataclass(frozen=True)
class KawaharaEq:
    """One member of the class: the power n plus the three t-coefficients."""

    n: float
    alpha: Expr
    beta: Expr
    sigma: Expr
    domain: Domain

    def __post_init__(self):
        if self.n == 0:
            raise ValueError("n = 0 gives a linear equation; excluded from the class")
        if self.domain.var != "t":
            raise ValueError("equation domain must be in t")
        for name in ("alpha", "beta", "sigma"):
            _check_nonvanishing(getattr(self, name), self.domain, name)

    def coefficients(self) -> tuple[Expr, Expr, Expr]:
        return self.alpha, self.beta, self.sigma

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "alpha": E.to_text(self.alpha),
            "beta": E.to_text(self.beta),
            "sigma": E.to_text(self.sigma),
            "domain": [self.domain.lo, self.domain.hi],
        }

    @classmethod
    def from_json(cls, doc: Mapping, params: Mapping[str, float] | None = None) -> "KawaharaEq":
        names = tuple(params) if params else ()
        exprs = {}
        for key in ("alpha", "beta", "sigma"):
            raw = doc[key]
            e = E.parse(raw, names) if isinstance(raw, str) else E.wrap(raw)
            if params:
                e = E.subst(e, {k: Const(float(v)) for k, v in params.items()})
            exprs[key] = e
        lo, hi = doc["domain"]
        return cls(n=float(doc["n"]), domain=Domain("t", float(lo), float(hi)), **exprs)

    def residual_terms(self, u: Expr) -> list[Expr]:
        """The four summands of the equation applied to a candidate u(t, x)."""
        return [
            E.diff(u, "t"),
            mul(self.alpha, mul(pow_(u, Const(float(self.n))), E.diff(u, "x"))),
            mul(self.beta, E.diff(u, "x", 3)),
            mul(self.sigma, E.diff(u, "x", 5)),
        ]


def _check_nonvanishing(e: Expr, dom: Domain, what: str, n: int = 64):
    vals = []
    for p in dom.sample(n):
        try:
            vals.append(E.evaluate(e, {dom.var: float(p)}))
        except E.EvalError as err:
            raise ModelError(f"{what} undefined at {dom.var}={p}: {err}") from None
    if min(abs(v) for v in vals) <= NONVANISHING_TOL:
        raise ModelError(f"{what} vanishes on the domain (|{what}| <= {NONVANISHING_TOL})")
    return vals


def _sign_constant(vals, what: str):
    signs = {v > 0 for v in vals}
    if len(signs) > 1:
        raise GaugeError(f"{what} changes sign on the domain")
    return 1.0 if signs.pop() else -1.0


@dataclass(frozen=True)
class PointTransform:
    """(t, x, u) -> (T(t), X1(t) x + X0(t), U1(t,x) u + U0(t,x)) with its
    inverse time map; all pieces are expression trees in the source variables
    except ``tinv``, which is an expression in the target time."""

    tmap: Expr
    x1: Expr
    x0: Expr
    u1: Expr
    u0: Expr
    tinv: Expr
    source_domain: Domain
    target_domain: Domain

    @classmethod
    def identity(cls, dom: Domain) -> "PointTransform":
        one, zero = Const(1.0), Const(0.0)
        return cls(T, one, zero, one, zero, T, dom, dom)

    def is_identity(self) -> bool:
        return self.tmap == T and self.x1 == Const(1.0) and self.x0 == Const(0.0) \
            and self.u1 == Const(1.0) and self.u0 == Const(0.0)

    def source_point(self) -> dict[str, Expr]:
        """Source (t, x) written in the target variables (t, x)."""
        t_src = self.tinv
        x_src = div(sub(X, E.subst(self.x0, {"t": t_src})),
                    E.subst(self.x1, {"t": t_src}))
        return {"t": t_src, "x": x_src}

    def push_solution(self, u: Expr) -> Expr:
        """Closed-form solution of the source equation -> solution of the target."""
        src = self.source_point()
        return add(mul(E.subst(self.u1, src), E.subst(u, src)), E.subst(self.u0, src))

    def inverse(self) -> "PointTransform":
        src = self.source_point()
        u1_inv = div(Const(1.0), E.subst(self.u1, src))
        u0_inv = neg(div(E.subst(self.u0, src), E.subst(self.u1, src)))
        x1_inv = div(Const(1.0), E.subst(self.x1, {"t": self.tinv}))
        x0_inv = neg(div(E.subst(self.x0, {"t": self.tinv}),
                         E.subst(self.x1, {"t": self.tinv})))
        return PointTransform(self.tinv, x1_inv, x0_inv, u1_inv, u0_inv, self.tmap,
                              self.target_domain, self.source_domain)

    def to_json(self) -> dict:
        return {
            "t": E.to_text(self.tmap),
            "x1": E.to_text(self.x1),
            "x0": E.to_text(self.x0),
            "u1": E.to_text(self.u1),
            "u0": E.to_text(self.u0),
            "t_inverse": E.to_text(self.tinv),
        }


def push_solution(tr: PointTransform, u: Expr) -> Expr:
    return tr.push_solution(u)


def _tinv_expr(tmap: Expr, dom: Domain) -> Expr:
    inv = E.invert_expr(tmap, "t")
    if inv is not None:
        return inv
    return InverseFn(tmap, "t", dom.lo, dom.hi, T)


def _map_domain(tmap: Expr, dom: Domain) -> Domain:
    lo = E.evaluate(tmap, {"t": dom.lo})
    hi = E.evaluate(tmap, {"t": dom.hi})
    if lo > hi:
        lo, hi = hi, lo
    return Domain("t", lo, hi)


# ---------------------------------------------------------------------------
# the alpha = 1 gauge

def gauge_alpha1(eq: KawaharaEq) -> tuple[KawaharaEq, PointTransform]:
    """Reparameterize time by the antiderivative of alpha so the convection
    coefficient becomes 1; beta and sigma become beta/alpha, sigma/alpha
    composed with the inverse time map."""
    vals = _check_nonvanishing(eq.alpha, eq.domain, "alpha")
    _sign_constant(vals, "alpha")
    if E.is_zero(sub(eq.alpha, Const(1.0)), eq.domain):
        return eq, PointTransform.identity(eq.domain)
    tmap = E.antiderivative_expr(eq.alpha, "t", eq.domain.lo)
    tinv = _tinv_expr(tmap, eq.domain)
    target = _map_domain(tmap, eq.domain)
    bhat = E.subst(div(eq.beta, eq.alpha), {"t": tinv})
    shat = E.subst(div(eq.sigma, eq.alpha), {"t": tinv})
    gauged = KawaharaEq(eq.n, Const(1.0), bhat, shat, target)
    one, zero = Const(1.0), Const(0.0)
    tr = PointTransform(tmap, one, zero, one, zero, tinv, eq.domain, target)
    return gauged, tr


# ---------------------------------------------------------------------------
# equivalence transformations

@dataclass(frozen=True)
class Theorem1Params:
    """Usual equivalence group of the full class: x, u scalings plus an
    arbitrary time reparameterization."""

    delta1: float
    delta2: float
    delta3: float
    tmap: Expr

    def validate(self, n: float):
        if self.delta1 == 0 or self.delta3 == 0:
            raise EquivalenceError("need delta1 * delta3 != 0")
        if self.delta3 < 0 and abs(n - round(n)) > 1e-12:
            raise EquivalenceError("delta3 < 0 requires integer n")


@dataclass(frozen=True)
class Theorem2Params:
    """Generalized extended equivalence group of the n = 1 subclass; the
    x-scaling involves the antiderivative of alpha."""

    delta0: float
    delta1: float
    delta2: float
    delta3: float
    delta4: float
    tmap: Expr

    def validate(self):
        if self.delta2 == 0 or (self.delta3 == 0 and self.delta4 == 0):
            raise EquivalenceError("need delta2 != 0 and (delta3, delta4) != (0, 0)")


@dataclass(frozen=True)
class Corollary1Params:
    """Equivalence group of the gauged class (alpha = 1), arbitrary n."""

    delta0: float
    delta1: float
    delta2: float
    delta3: float

    def validate(self, n: float):
        if self.delta1 == 0 or self.delta3 == 0:
            raise EquivalenceError("need delta1 * delta3 != 0")
        if self.delta3 < 0 and abs(n - round(n)) > 1e-12:
            raise EquivalenceError("delta3 < 0 requires integer n")


@dataclass(frozen=True)
class Corollary2Params:
    """Equivalence group of the gauged n = 1 class: Moebius time map plus an
    affine (x, u) block with matrix (a b; c d), det != 0, e2 != 0."""

    a: float
    b: float
    c: float
    d: float
    e0: float
    e1: float
    e2: float

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def validate(self):
        if self.det == 0 or self.e2 == 0:
            raise EquivalenceError("need det != 0 and e2 != 0")

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


EquivParams = Theorem1Params | Theorem2Params | Corollary1Params | Corollary2Params


def _require_gauged(eq: KawaharaEq, label: str):
    if not E.is_zero(sub(eq.alpha, Const(1.0)), eq.domain):
        raise EquivalenceError(f"{label} transformations act on the alpha = 1 class; "
                               "gauge the equation first")


def apply_equiv(eq: KawaharaEq, p: EquivParams) -> tuple[KawaharaEq, PointTransform]:
    """Transform an equation by one of the four equivalence-group forms,
    returning the new equation with coefficients in the new time."""
    if isinstance(p, Theorem1Params):
        return _apply_theorem1(eq, p)
    if isinstance(p, Theorem2Params):
        return _apply_theorem2(eq, p)
    if isinstance(p, Corollary1Params):
        return _apply_corollary1(eq, p)
    if isinstance(p, Corollary2Params):
        return _apply_corollary2(eq, p)
    raise TypeError(f"unsupported parameter set {p!r}")


def _apply_theorem1(eq: KawaharaEq, p: Theorem1Params):
    p.validate(eq.n)
    tmap = p.tmap
    tt = E.diff(tmap, "t")
    _check_nonvanishing(tt, eq.domain, "T_t")
    tinv = _tinv_expr(tmap, eq.domain)
    target = _map_domain(tmap, eq.domain)
    d3n = E._pow_float(p.delta3, float(eq.n))
    alpha_new = E.subst(mul(Const(p.delta1 / d3n), div(eq.alpha, tt)), {"t": tinv})
    beta_new = E.subst(mul(Const(p.delta1 ** 3), div(eq.beta, tt)), {"t": tinv})
    sigma_new = E.subst(mul(Const(p.delta1 ** 5), div(eq.sigma, tt)), {"t": tinv})
    new_eq = KawaharaEq(eq.n, alpha_new, beta_new, sigma_new, target)
    tr = PointTransform(tmap, Const(p.delta1), Const(p.delta2),
                        Const(p.delta3), Const(0.0), tinv, eq.domain, target)
    return new_eq, tr


def _apply_theorem2(eq: KawaharaEq, p: Theorem2Params):
    if eq.n != 1:
        raise EquivalenceError("this group form applies to n = 1 only")
    p.validate()
    tmap = p.tmap
    tt = E.diff(tmap, "t")
    _check_nonvanishing(tt, eq.domain, "T_t")
    tbar = E.antiderivative_expr(eq.alpha, "t", eq.domain.lo)
    w = add(mul(Const(p.delta3), tbar), Const(p.delta4))
    _check_nonvanishing(w, eq.domain, "delta3*int(alpha)+delta4")
    x1 = div(Const(1.0), w)
    tinv = _tinv_expr(tmap, eq.domain)
    target = _map_domain(tmap, eq.domain)

    def compose(e):
        return E.subst(e, {"t": tinv})

    alpha_new = compose(div(mul(pow_(x1, 2.0), eq.alpha), mul(Const(p.delta2), tt)))
    beta_new = compose(div(mul(pow_(x1, 3.0), eq.beta), tt))
    sigma_new = compose(div(mul(pow_(x1, 5.0), eq.sigma), tt))
    new_eq = KawaharaEq(1.0, alpha_new, beta_new, sigma_new, target)
    x0 = add(mul(Const(p.delta1), x1), Const(p.delta0))
    u1 = mul(Const(p.delta2), w)
    u0 = mul(Const(-p.delta2 * p.delta3), add(X, Const(p.delta1)))
    tr = PointTransform(tmap, x1, x0, u1, u0, tinv, eq.domain, target)
    return new_eq, tr


def _apply_corollary1(eq: KawaharaEq, p: Corollary1Params):
    p.validate(eq.n)
    _require_gauged(eq, "gauged-class")
    d3n = E._pow_float(p.delta3, float(eq.n))
    rate = p.delta1 / d3n
    tmap = add(mul(Const(rate), T), Const(p.delta0))
    tinv = div(sub(T, Const(p.delta0)), Const(rate))
    target = _map_domain(tmap, eq.domain)

    beta_new = E.subst(mul(Const(p.delta1 ** 2 * d3n), eq.beta), {"t": tinv})
    sigma_new = E.subst(mul(Const(p.delta1 ** 4 * d3n), eq.sigma), {"t": tinv})
    new_eq = KawaharaEq(eq.n, Const(1.0), beta_new, sigma_new, target)
    tr = PointTransform(tmap, Const(p.delta1), Const(p.delta2),
                        Const(p.delta3), Const(0.0), tinv, eq.domain, target)
    return new_eq, tr


def _apply_corollary2(eq: KawaharaEq, p: Corollary2Params):
    if eq.n != 1:
        raise EquivalenceError("this group form applies to n = 1 only")
    p.validate()
    _require_gauged(eq, "gauged-class")
    a, b, c, d = p.a, p.b, p.c, p.d
    det = p.det
    denom = add(mul(Const(c), T), Const(d))
    _check_nonvanishing(denom, eq.domain, "c*t+d")
    tmap = div(add(mul(Const(a), T), Const(b)), denom)
    tinv = div(sub(mul(Const(d), T), Const(b)), sub(Const(a), mul(Const(c), T)))
    target = _map_domain(tmap, eq.domain)

    beta_new = E.subst(div(mul(Const(p.e2 ** 3), eq.beta), mul(denom, Const(det))),
                       {"t": tinv})
    sigma_new = E.subst(div(mul(Const(p.e2 ** 5), eq.sigma),
                            mul(pow_(denom, 3.0), Const(det))), {"t": tinv})
    new_eq = KawaharaEq(1.0, Const(1.0), beta_new, sigma_new, target)
    x1 = div(Const(p.e2), denom)
    x0 = div(add(mul(Const(p.e1), T), Const(p.e0)), denom)
    u1 = div(mul(Const(p.e2), denom), Const(det))
    u0 = div(add(mul(Const(-p.e2 * c), X), Const(-p.e0 * c + p.e1 * d)), Const(det))
    tr = PointTransform(tmap, x1, x0, u1, u0, tinv, eq.domain, target)
    return new_eq, tr


# ---------------------------------------------------------------------------
# reducibility to constant coefficients

@dataclass(frozen=True)
class ReducibilityResult:
    reducible: bool
    witness: dict
    failed: tuple = ()


def reducibility(eq: KawaharaEq) -> ReducibilityResult:
    """Test the coefficient conditions for equivalence to a constant
    coefficient member; on success the witness carries the fitted constants."""
    dom = eq.domain
    mid = {"t": dom.midpoint()}
    if eq.n != 1:
        ratios = {"beta_over_alpha": div(eq.beta, eq.alpha),
                  "sigma_over_alpha": div(eq.sigma, eq.alpha)}
        failed = [f"({name})_t != 0" for name, e in ratios.items()
                  if not E.is_zero(E.diff(e, "t"), dom)]
        if failed:
            return ReducibilityResult(False, {}, tuple(failed))
        witness = {name: E.evaluate(e, mid) for name, e in ratios.items()}
        return ReducibilityResult(True, witness)

    boa = div(eq.beta, eq.alpha)
    c1_expr = div(E.diff(boa, "t"), eq.alpha)
    s3_expr = div(mul(eq.sigma, pow_(eq.alpha, 2.0)), pow_(eq.beta, 3.0))
    failed = []
    if not E.is_zero(E.diff(c1_expr, "t"), dom):
        failed.append("((beta/alpha)_t / alpha)_t != 0")
    if not E.is_zero(E.diff(s3_expr, "t"), dom):
        failed.append("(sigma*alpha^2/beta^3)_t != 0")
    if failed:
        return ReducibilityResult(False, {}, tuple(failed))
    tbar = E.antiderivative_expr(eq.alpha, "t", dom.lo)
    c1 = E.evaluate(c1_expr, mid)
    c0 = E.evaluate(sub(boa, mul(Const(c1), tbar)), mid)
    witness = {"c1": c1, "c0": c0, "sigma_ratio": E.evaluate(s3_expr, mid)}
    return ReducibilityResult(True, witness)


def map_to_constant(eq: KawaharaEq) -> tuple[KawaharaEq, PointTransform]:
    """Explicit transform onto a constant-coefficient member (convection
    coefficient normalized to 1); requires :func:`reducibility` to hold."""
    red = reducibility(eq)
    if not red.reducible:
        raise NotReducibleError(red.failed)
    if eq.n != 1:
        gauged, tr = gauge_alpha1(eq)
        b0 = red.witness["beta_over_alpha"]
        s0 = red.witness["sigma_over_alpha"]
        const_eq = KawaharaEq(eq.n, Const(1.0), Const(b0), Const(s0),
                              gauged.domain)
        return const_eq, tr

    c1, c0 = red.witness["c1"], red.witness["c0"]
    s3 = red.witness["sigma_ratio"]
    tbar = E.antiderivative_expr(eq.alpha, "t", eq.domain.lo)
    scale = max(abs(c1), abs(c0), 1e-300)
    if abs(c1) <= 1e-9 * scale:
        delta3, delta4 = 0.0, 1.0
        beta_c = c0
    else:
        delta3, delta4 = 1.0, c0 / c1
        beta_c = c1
    sigma_c = s3 * beta_c ** 3
    w = add(mul(Const(delta3), tbar), Const(delta4))
    _check_nonvanishing(w, eq.domain, "delta3*int(alpha)+delta4")
    if delta3 == 0.0:
        tmap = div(tbar, Const(delta4 ** 2))
    else:
        tmap = div(Const(-1.0), mul(Const(delta3), w))
    tinv = _tinv_expr(tmap, eq.domain)
    target = _map_domain(tmap, eq.domain)
    const_eq = KawaharaEq(1.0, Const(1.0), Const(beta_c), Const(sigma_c), target)
    tr = PointTransform(tmap, div(Const(1.0), w), Const(0.0),
                        w, mul(Const(-delta3), X), tinv, eq.domain, target)
    return const_eq, tr


# ---------------------------------------------------------------------------
# the growing-ice preset

def ice_preset() -> KawaharaEq:
    """Long waves under growing ice after normalizing the convection term:
    n = 1, alpha = 1, beta, sigma with square-root / three-halves growth,
    over ten days measured in hours."""
    beta = mul(Const(ICE_LAMBDA), pow_(T, 0.5))
    sigma = mul(Const(ICE_DELTA), pow_(T, 1.5))
    return KawaharaEq(1.0, Const(1.0), beta, sigma, Domain("t", 1.0, 240.0))


def ice_coefficients(physical: Mapping[str, float]) -> dict:
    """Dispersion coefficients from the physical ice/fluid parameters, in SI
    units with g = 9.81 and ice thickness growing like h0 * sqrt(t).

    Keys: a, H, h0, E, nu, rho_w, rho_i, sigma0, sigma_xx, lambda_wave.
    Returns epsilon (float) plus varkappa(t) and gamma(t) expression trees.
    No unit conversion is applied.
    """
    a = float(physical["a"])
    H = float(physical["H"])
    h0 = float(physical["h0"])
    Emod = float(physical["E"])
    nu = float(physical["nu"])
    rho_w = float(physical["rho_w"])
    sigma0 = float(physical["sigma0"])
    sigma_xx = float(physical["sigma_xx"])
    lam = float(physical["lambda_wave"])
    for key in ("a", "H", "h0", "E", "rho_w", "lambda_wave"):
        if float(physical[key]) <= 0:
            raise ValueError(f"physical parameter {key} must be positive")
    h = mul(Const(h0), pow_(T, 0.5))
    varkappa = mul(Const((sigma0 - sigma_xx) / (rho_w * GRAVITY * lam ** 2)), h)
    gamma = mul(Const(Emod / (12.0 * (1.0 - nu ** 2) * rho_w * GRAVITY * lam ** 4)),
                pow_(h, 3.0))
    return {"epsilon": a / H, "varkappa": varkappa, "gamma": gamma}
