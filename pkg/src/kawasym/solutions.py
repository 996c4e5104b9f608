"""Closed-form solution families and exact residual verification.

Residual checking is fully symbolic-then-sampled: the candidate is
differentiated exactly and the equation's terms are evaluated on a grid,
so a reported residual near machine precision certifies an exact solution
with no discretization error in the loop.  The same machinery checks the
two zero-order conserved pairs (momentum and energy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as E
from .expr import Const, Domain, Expr, Var, add, div, mul, neg, pow_, sub
from .model import KawaharaEq, reducibility

__all__ = [
    "ClosedFormSolution", "ResidualReport", "SolutionError", "ComplexBranchError",
    "degenerate_solution", "tanh_solution_n2", "kudryashov_family",
    "mapped_kudryashov", "pde_residual", "conservation_check", "default_grid",
]

T = Var("t")
X = Var("x")


class SolutionError(Exception):
    pass


class ComplexBranchError(SolutionError):
    pass


@dataclass(frozen=True)
class ClosedFormSolution:
    """A candidate u(t, x) in closed form, tied to the equation it targets."""

    expr: Expr
    equation: KawaharaEq
    name: str
    params: dict = field(default_factory=dict)
    x_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        free = E.free_vars(self.expr)
        if not free <= {"t", "x"}:
            raise SolutionError(f"solution has unbound parameters: "
                                f"{sorted(free - {'t', 'x'})}")
        dom = self.equation.domain
        for tv in np.linspace(dom.lo, dom.hi, 5):
            for xv in np.linspace(self.x_range[0], self.x_range[1], 5):
                try:
                    E.evaluate(self.expr, {"t": float(tv), "x": float(xv)})
                except E.EvalError as err:
                    raise SolutionError(
                        f"solution undefined at (t, x) = ({tv}, {xv}): {err}"
                    ) from None

    def to_json(self) -> dict:
        return {"name": self.name, "u": E.to_text(self.expr),
                "parameters": self.params,
                "equation": self.equation.to_json()}


@dataclass(frozen=True)
class ResidualReport:
    max_abs: float
    scale: float
    flagged: int

    @property
    def normalized(self) -> float:
        return 0.0 if self.max_abs == 0.0 else self.max_abs / max(self.scale, 1e-300)

    def to_json(self) -> dict:
        return {"max_abs": self.max_abs, "scale": self.scale,
                "normalized": self.normalized, "flagged_points": self.flagged}


def default_grid(eq: KawaharaEq, n_t: int = 21, n_x: int = 21,
                 x_range: tuple = (-5.0, 5.0)) -> tuple[np.ndarray, np.ndarray]:
    """21 x 21 verification grid over the equation's t-domain and the given
    x-window (power-law coefficients keep t away from 0 via the domain)."""
    return (np.linspace(eq.domain.lo, eq.domain.hi, n_t),
            np.linspace(x_range[0], x_range[1], n_x))


def _sup_of_terms(terms: Sequence[Expr], ts: np.ndarray, xs: np.ndarray
                  ) -> ResidualReport:
    arrays = {"t": ts[:, None], "x": xs[None, :]}
    vals = [np.broadcast_to(E.eval_grid(term, arrays),
                            (len(ts), len(xs))) for term in terms]
    total = sum(vals)
    stack = np.stack([np.abs(v) for v in vals])
    ok = np.all(np.isfinite(stack), axis=0)
    flagged = int(ok.size - np.count_nonzero(ok))
    if not np.any(ok):
        raise SolutionError("residual undefined on the whole grid")
    max_abs = float(np.max(np.abs(total[ok])))
    scale = float(np.max(stack[:, ok]))
    return ResidualReport(max_abs, scale, flagged)


def pde_residual(eq: KawaharaEq, u, grid=None) -> ResidualReport:
    """Sup-norm of the equation applied to a closed-form candidate.

    The normalized residual divides by the largest magnitude among the
    equation's terms on the grid; grid points where a derivative is
    undefined are flagged and skipped.
    """
    u_expr = u.expr if isinstance(u, ClosedFormSolution) else u
    if grid is None:
        xr = u.x_range if isinstance(u, ClosedFormSolution) else (-5.0, 5.0)
        grid = default_grid(eq, x_range=xr)
    ts, xs = grid
    return _sup_of_terms(eq.residual_terms(u_expr), np.asarray(ts, float),
                         np.asarray(xs, float))


def conservation_check(eq: KawaharaEq, u, grid=None
                       ) -> tuple[ResidualReport, ResidualReport]:
    """Divergence of the momentum and energy conserved pairs on a candidate.

    Momentum: (u, alpha*u^(n+1)/(n+1) + beta*u_xx + sigma*u_xxxx);
    energy:   (u^2/2, alpha*u^(n+2)/(n+2) + beta*(u*u_xx - u_x^2/2)
               + sigma*(u*u_xxxx - u_x*u_xxx + u_xx^2/2)).
    Both vanish on exact solutions.
    """
    u_expr = u.expr if isinstance(u, ClosedFormSolution) else u
    if grid is None:
        xr = u.x_range if isinstance(u, ClosedFormSolution) else (-5.0, 5.0)
        grid = default_grid(eq, x_range=xr)
    ts, xs = np.asarray(grid[0], float), np.asarray(grid[1], float)
    n = float(eq.n)
    ux = E.diff(u_expr, "x")
    uxx = E.diff(u_expr, "x", 2)
    uxxx = E.diff(u_expr, "x", 3)
    uxxxx = E.diff(u_expr, "x", 4)

    dens1 = u_expr
    flux1 = add(add(mul(eq.alpha, div(pow_(u_expr, Const(n + 1.0)), Const(n + 1.0))),
                    mul(eq.beta, uxx)),
                mul(eq.sigma, uxxxx))
    dens2 = div(pow_(u_expr, 2.0), Const(2.0))
    flux2 = add(add(mul(eq.alpha, div(pow_(u_expr, Const(n + 2.0)), Const(n + 2.0))),
                    mul(eq.beta, sub(mul(u_expr, uxx), div(pow_(ux, 2.0), 2.0)))),
                mul(eq.sigma, add(sub(mul(u_expr, uxxxx), mul(ux, uxxx)),
                                  div(pow_(uxx, 2.0), 2.0))))
    out = []
    for dens, flux in ((dens1, flux1), (dens2, flux2)):
        terms = [E.diff(dens, "t"), E.diff(flux, "x")]
        out.append(_sup_of_terms(terms, ts, xs))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# solution families

def degenerate_solution(eq: KawaharaEq, c: float, a: float) -> ClosedFormSolution:
    """u = (x + c) / (int(alpha) + a): exact for every beta and sigma because
    all x-derivatives beyond the first vanish."""
    if eq.n != 1:
        raise SolutionError("the rational family solves the n = 1 subclass only")
    tbar = E.antiderivative_expr(eq.alpha, "t", eq.domain.lo)
    denom = add(tbar, Const(float(a)))
    vals = E.eval_grid(denom, {"t": eq.domain.sample(64)})
    if np.min(np.abs(vals)) <= 1e-12 or len({v > 0 for v in vals}) > 1:
        raise SolutionError("int(alpha) + a has a root inside the time domain")
    u = div(add(X, Const(float(c))), denom)
    return ClosedFormSolution(u, eq, "degenerate", {"c": float(c), "a": float(a)})


def _proportional_constants(eq: KawaharaEq) -> tuple[float, float]:
    boa = div(eq.beta, eq.alpha)
    soa = div(eq.sigma, eq.alpha)
    if not (E.is_zero(E.diff(boa, "t"), eq.domain)
            and E.is_zero(E.diff(soa, "t"), eq.domain)):
        raise SolutionError("coefficients must be proportional to alpha "
                            "(beta = b*alpha, sigma = s*alpha)")
    mid = {"t": eq.domain.midpoint()}
    return E.evaluate(boa, mid), E.evaluate(soa, mid)


def tanh_solution_n2(eq: KawaharaEq, k: float, chi: float) -> ClosedFormSolution:
    """Squared-tanh travelling profile for n = 2 with alpha-proportional
    coefficients; needs the fifth-order constant negative."""
    if eq.n != 2:
        raise SolutionError("this family targets the n = 2 subclass")
    bt, st = _proportional_constants(eq)
    if st >= 0.0:
        raise SolutionError(f"needs sigma/alpha < 0 for a real amplitude, "
                            f"got {st}")
    s = math.sqrt(-10.0 * st)
    tbar = E.antiderivative_expr(eq.alpha, "t", eq.domain.lo)
    speed = (k / (10.0 * st)) * (240.0 * k ** 4 * st ** 2 + bt ** 2)
    phase = add(add(mul(Const(float(k)), X), mul(Const(speed), tbar)),
                Const(float(chi)))
    amp0 = (40.0 * k ** 2 * st - bt) / s
    amp2 = 6.0 * k ** 2 * s
    u = add(Const(amp0), mul(Const(amp2), pow_(E.tanh(phase), 2.0)))
    return ClosedFormSolution(u, eq, "tanh-squared",
                              {"k": float(k), "chi": float(chi),
                               "beta_const": bt, "sigma_const": st})


def _kappa(branch: int, bt: float, st: float) -> float:
    if branch in (3, 4, 5, 6):
        raise ComplexBranchError(
            f"branch {branch} has a complex wavenumber (proportional to "
            "sqrt(65*b*s*(31 -+ 3i*sqrt(31)))/(260*s)); it produces complex "
            "profiles and is outside the real-arithmetic scope")
    if branch not in (1, 2):
        raise SolutionError(f"branch must be 1..6, got {branch}")
    if bt * st >= 0.0:
        raise SolutionError("real branches need beta*sigma < 0")
    kappa = math.sqrt(-13.0 * bt * st) / (26.0 * st)
    return kappa if branch == 1 else -kappa


def _kudryashov_amplitudes(bt: float, st: float, kappa: float, mu: float
                           ) -> tuple[float, float, float]:
    a0 = -(264992.0 * st ** 2 * kappa ** 5 - 7280.0 * bt * st * kappa ** 3
           - 31.0 * bt ** 2 * kappa + 507.0 * st * mu) / (507.0 * st * kappa)
    a2 = -280.0 * kappa ** 2 * (bt - 104.0 * st * kappa ** 2) / 13.0
    a4 = -1680.0 * st * kappa ** 4
    return a0, a2, a4


def kudryashov_family(alpha_c: float, beta_c: float, sigma_c: float,
                      branch: int, mu: float, chi: float,
                      domain: Domain | None = None) -> ClosedFormSolution:
    """Solitary-wave family of the constant-coefficient n = 1 equation:
    tanh^2 + tanh^4 profile with the wavenumber pinned by the dispersion
    constants.  Real branches are 1 and 2; 3..6 are rejected (complex)."""
    if alpha_c == 0.0 or beta_c == 0.0 or sigma_c == 0.0:
        raise SolutionError("dispersion constants must be nonzero")
    kappa = _kappa(branch, beta_c, sigma_c)
    dom = domain if domain is not None else Domain("t", 1.0, 2.0)
    eq = KawaharaEq(1.0, Const(float(alpha_c)), Const(float(beta_c)),
                    Const(float(sigma_c)), dom)
    a0, a2, a4 = _kudryashov_amplitudes(beta_c, sigma_c, kappa, mu)
    phase = add(add(mul(Const(kappa), X), mul(Const(float(mu)), T)),
                Const(float(chi)))
    th = E.tanh(phase)
    u = div(add(Const(a0), add(mul(Const(a2), pow_(th, 2.0)),
                               mul(Const(a4), pow_(th, 4.0)))),
            Const(float(alpha_c)))
    return ClosedFormSolution(u, eq, "kudryashov",
                              {"branch": branch, "kappa": kappa,
                               "mu": float(mu), "chi": float(chi)})


def mapped_kudryashov(eq: KawaharaEq, delta1: float, delta3: float,
                      delta4: float, mu: float, chi: float,
                      branch: int) -> ClosedFormSolution:
    """The solitary-wave family pulled back to a variable-coefficient member
    whose dispersion terms carry the linear-in-int(alpha) factors.

    Requires a symbolic antiderivative of alpha (the nested time map must be
    closed form) and coefficients matching the reducibility witness.
    """
    if eq.n != 1:
        raise SolutionError("the mapped family targets the n = 1 subclass")
    if delta3 == 0.0 and delta4 == 0.0:
        raise SolutionError("need (delta3, delta4) != (0, 0)")
    F = E.antiderivative(eq.alpha, "t")
    if F is E.QUADRATURE:
        raise SolutionError("int(alpha) has no closed form; the nested time "
                            "map of this family requires one")
    red = reducibility(eq)
    if not red.reducible:
        raise SolutionError("equation is not reducible to constant "
                            f"coefficients: {red.failed}")
    w = add(mul(Const(float(delta3)), F), Const(float(delta4)))
    vals = E.eval_grid(w, {"t": eq.domain.sample(64)})
    if np.min(np.abs(vals)) <= 1e-12 or len({v > 0 for v in vals}) > 1:
        raise SolutionError("delta3*int(alpha) + delta4 vanishes inside the "
                            "time domain")
    bt_expr = div(eq.beta, mul(eq.alpha, w))
    st_expr = div(eq.sigma, mul(eq.alpha, pow_(w, 3.0)))
    for name, e in (("beta", bt_expr), ("sigma", st_expr)):
        if not E.is_zero(E.diff(e, "t"), eq.domain, eps=1e-8):
            raise SolutionError(f"{name} does not carry the expected "
                                "linear-in-int(alpha) factor for these deltas")
    mid = {"t": eq.domain.midpoint()}
    bt = E.evaluate(bt_expr, mid)
    st = E.evaluate(st_expr, mid)
    kappa = _kappa(branch, bt, st)
    if delta3 != 0.0:
        tmap = div(Const(-1.0), mul(Const(float(delta3)), w))
    else:
        tmap = div(F, Const(float(delta4) ** 2))
    xmap = div(add(X, Const(float(delta1))), w)
    a0, a2, a4 = _kudryashov_amplitudes(bt, st, kappa, mu)
    phase = add(add(mul(Const(kappa), xmap), mul(Const(float(mu)), tmap)),
                Const(float(chi)))
    th = E.tanh(phase)
    inner = add(mul(Const(float(delta3)), add(X, Const(float(delta1)))),
                add(Const(a0), add(mul(Const(a2), pow_(th, 2.0)),
                                   mul(Const(a4), pow_(th, 4.0)))))
    u = div(inner, w)
    return ClosedFormSolution(u, eq, "mapped-kudryashov",
                              {"branch": branch, "kappa": kappa,
                               "delta1": float(delta1), "delta3": float(delta3),
                               "delta4": float(delta4), "mu": float(mu),
                               "chi": float(chi), "beta_const": bt,
                               "sigma_const": st})
