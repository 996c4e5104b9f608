"""Similarity reductions to fifth-order ODEs and solution reconstruction.

Every fifth-order reduction row fits one normal form,

    delta*phi''''' + lam*phi''' + (phi^n + c1*w + c0)*phi' + c2*phi
        + c3*w + c4 = 0,

so a reduction is the similarity variable w(t, x), the ansatz
u = A(t, x) * phi(w) + B(t, x), the normal-form coefficients, and the
multiplier K(t, x) with  PDE[u] = K * ODE[phi]  for any smooth phi.  The
multiplier makes the substitution identity directly testable with a
manufactured phi (see :func:`manufactured_defect`), independently of any
integration.

The Galilean row reduces to a first-order equation with the closed-form
rational solution family; it is returned as such.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as E
from .expr import Const, Domain, Expr, Var, add, div, mul, neg, pow_, sub
from .classify import ClassificationResult, optimal_subalgebras
from .model import KawaharaEq
from .ode import ODESolution, OdeCoeffs

__all__ = [
    "Reduction", "InvariantBVP", "GridSolution", "ReduceError",
    "build_reduction", "bvp_to_ivp", "reconstruct",
    "manufactured_defect", "boundary_residuals",
]

T = Var("t")
X = Var("x")
W = Var("omega")


class ReduceError(Exception):
    pass


class NonCanonicalPosition(ReduceError):
    """Classification sits away from the table's coefficient positions."""


@dataclass(frozen=True)
class Reduction:
    """Similarity ansatz plus reduced equation in normal form."""

    case: str
    subalgebra: str
    omega: Expr
    amplitude: Expr
    shift: Expr
    multiplier: Expr | None
    coeffs: OdeCoeffs | None
    params: dict
    closed_form: Expr | None = None
    ode_text: str | None = None
    linking: dict | None = None

    def ansatz_expr(self, phi: Expr) -> Expr:
        """u(t, x) for a concrete profile phi given as an expression in omega."""
        return add(mul(self.amplitude, E.subst(phi, {"omega": self.omega})),
                   self.shift)

    def ansatz_text(self) -> str:
        a = E.to_text(self.amplitude)
        b = E.to_text(self.shift)
        out = f"({a}) * phi(omega)"
        if b != "0":
            out += f" + ({b})"
        return out

    def to_json(self) -> dict:
        doc = {
            "case": self.case,
            "subalgebra": self.subalgebra,
            "omega": E.to_text(self.omega),
            "ansatz": self.ansatz_text(),
            "parameters": self.params,
        }
        if self.coeffs is not None:
            doc["ode"] = self.coeffs.to_json()
            doc["ode_form"] = ("delta*phi''''' + lam*phi''' + (phi^n + c1*omega"
                               " + c0)*phi' + c2*phi + c3*omega + c4 = 0")
        if self.closed_form is not None:
            doc["closed_form"] = E.to_text(self.closed_form)
            doc["ode_form"] = self.ode_text
        if self.linking:
            doc["linking"] = self.linking
        return doc


@dataclass(frozen=True)
class InvariantBVP:
    """Half-line boundary value problem invariant under the case-1 scaling;
    gamma are the boundary coefficients of u and its first four
    x-derivatives at x = 0."""

    n: float
    rho: float
    lam: float
    delta: float
    gammas: tuple
    t0: float

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if len(self.gammas) != 5:
            raise ValueError("need exactly five boundary coefficients")
        if self.gammas[0] == 0.0:
            raise ValueError("gamma0 must be nonzero")
        if self.lam == 0.0 or self.delta == 0.0:
            raise ValueError("lam and delta must be nonzero")
        if self.t0 <= 0.0:
            raise ValueError("t0 must be positive")
        if self.n < 1 or abs(self.n - round(self.n)) > 1e-12:
            raise ValueError("the invariant problem takes positive integer n")
        if abs(self.rho + 1.0) <= 1e-12:
            raise ValueError("rho = -1 breaks the scaling pattern of the data")


# ---------------------------------------------------------------------------
# table rows (gauged canonical variables)

def _row_scaling(n: float, rho: float, lam: float, delta: float, t0: float):
    theta = (rho + 1.0) / 3.0
    gam = (rho - 2.0) / (3.0 * n)
    tb = sub(T, Const(t0)) if t0 else T
    omega = mul(X, pow_(tb, Const(-theta)))
    amp = pow_(tb, Const(gam))
    mult = pow_(tb, Const(gam - 1.0))
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=n, c1=-theta, c2=gam)
    return omega, amp, Const(0.0), mult, coeffs


def _row_log_drift(n: float, lam: float, delta: float, t0: float, a: float):
    tb = sub(T, Const(t0)) if t0 else T
    omega = sub(X, mul(Const(a / n), E.ln(tb)))
    amp = pow_(tb, Const(-1.0 / n))
    mult = pow_(tb, Const(-1.0 / n - 1.0))
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=n, c0=-a / n, c2=-1.0 / n)
    return omega, amp, Const(0.0), mult, coeffs


def _row_exponential(n: float, m: float, lam: float, delta: float):
    omega = mul(X, E.exp(mul(Const(-m / 3.0), T)))
    amp = E.exp(mul(Const(m / (3.0 * n)), T))
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=n, c1=-m / 3.0, c2=m / (3.0 * n))
    return omega, amp, Const(0.0), amp, coeffs


def _row_travelling(n: float, a: float, lam: float, delta: float):
    omega = sub(X, mul(Const(a), T)) if a else X
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=n, c0=-a)
    return omega, Const(1.0), Const(0.0), Const(1.0), coeffs


def _row_parabolic_drift(a: float, lam: float, delta: float):
    if a == 0.0:
        raise ReduceError("this drift row divides by its parameter; a = 0 is "
                          "excluded")
    omega = sub(X, div(pow_(T, 2.0), Const(a)))
    shift = div(mul(Const(2.0), T), Const(a))
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=1.0, c4=2.0 / a)
    return omega, Const(1.0), shift, Const(1.0), coeffs


def _row_arctan(nu: float, lam: float, delta: float):
    quadratic = add(pow_(T, 2.0), Const(1.0))
    decay = E.exp(mul(Const(-nu), E.arctan(T)))
    grow = E.exp(mul(Const(nu), E.arctan(T)))
    omega = div(mul(X, decay), pow_(quadratic, 0.5))
    amp = div(grow, pow_(quadratic, 0.5))
    shift = div(mul(X, T), quadratic)
    mult = div(grow, pow_(quadratic, 1.5))
    coeffs = OdeCoeffs(delta=delta, lam=lam, n=1.0, c1=-nu, c2=nu, c3=1.0)
    return omega, amp, shift, mult, coeffs


def _row_galilean(a: float):
    # first-order reduction (w + a) phi' + phi = 0: phi = C / (w + a),
    # giving the rational family u = (x + C)/(t + a)
    omega = T
    denom = add(T, Const(a))
    closed = div(add(X, Var("C")), denom)
    return omega, Const(1.0), div(X, denom), closed


# ---------------------------------------------------------------------------
# building reductions from a classification

_NEEDS_A = {"g1.2", "g3", "g0'", "g1'.2", "g1'.3", "g3'.2"}
_NEEDS_S0 = set()


def _get_param(params: Mapping | None, label: str, key: str) -> float:
    params = params or {}
    if key not in params:
        raise ReduceError(f"subalgebra {label} needs the parameter '{key}'")
    return float(params[key])


def build_reduction(result: ClassificationResult, label: str,
                    params: Mapping | None = None) -> Reduction:
    """Instantiate the reduction row for one subalgebra of the optimal system.

    The pure x-translation g0 is refused (its invariant solutions are the
    constants).  For classifications obtained away from the canonical
    coefficient positions (Moebius-transformed inputs) no table row applies;
    map the equation to canonical form first.
    """
    if result.metadata.get("canonical_position") is False:
        raise NonCanonicalPosition(
            "classification sits at a non-canonical coefficient position; "
            "apply the equivalence map to canonical form before reducing")
    if label == "g0":
        raise ReduceError("reduction over the x-translation gives constant "
                          "solutions only")
    labels = [e.label for e in optimal_subalgebras(result)]
    if label not in labels:
        raise ReduceError(f"subalgebra {label!r} is not in the optimal system "
                          f"for case {result.case}: {labels[1:]}")

    case = result.case
    p = result.params
    n = float(result.equation.n)
    lam, delta = p.get("lam"), p.get("delta")
    t0 = p.get("t0", 0.0) or 0.0
    linking = None
    row_params: dict = {}

    if label in ("g1.1", "g1'.1"):
        rho = p["rho"]
        omega, amp, shift, mult, coeffs = _row_scaling(n, rho, lam, delta, t0)
        row_params = {"rho": rho, "lam": lam, "delta": delta, "n": n, "t0": t0}
    elif label in ("g1.2", "g1'.2"):
        a = _get_param(params, label, "a")
        omega, amp, shift, mult, coeffs = _row_log_drift(n, lam, delta, t0, a)
        row_params = {"a": a, "lam": lam, "delta": delta, "n": n, "t0": t0}
    elif label == "g1'.3":
        # the rho = 2 row is equivalent to rho = -1; hand back that reduction
        # together with the linking point transformation
        a = _get_param(params, label, "a")
        omega, amp, shift, mult, coeffs = _row_log_drift(n, lam, delta, 0.0, a)
        linking = {"t": "1/t", "x": "-x/t", "u": "t*u - x",
                   "note": "reduction is stated for the linked equation with "
                           "beta = lam/t, sigma = delta/t"}
        row_params = {"a": a, "lam": lam, "delta": delta, "n": n}
    elif label in ("g2", "g2'"):
        m = p.get("m", 1.0)
        omega, amp, shift, mult, coeffs = _row_exponential(n, m, lam, delta)
        row_params = {"m": m, "lam": lam, "delta": delta, "n": n}
    elif label in ("g3", "g3'.1"):
        a = _get_param(params, label, "a") if label == "g3" else 0.0
        omega, amp, shift, mult, coeffs = _row_travelling(n, a, lam, delta)
        row_params = {"a": a, "lam": lam, "delta": delta, "n": n}
    elif label == "g3'.2":
        a = _get_param(params, label, "a")
        omega, amp, shift, mult, coeffs = _row_parabolic_drift(a, lam, delta)
        row_params = {"a": a, "lam": lam, "delta": delta, "n": n}
    elif label == "g4'":
        nu = p["nu"]
        omega, amp, shift, mult, coeffs = _row_arctan(nu, lam, delta)
        row_params = {"nu": nu, "lam": lam, "delta": delta, "n": n}
    elif label == "g0'":
        key = "a" if case == "0'" else "s0"
        a = _get_param(params, label, key)
        omega, amp, shift, closed = _row_galilean(a)
        red = Reduction(case, label, omega, amp, shift, None, None,
                        {key: a, "n": n}, closed_form=closed,
                        ode_text="(omega + a)*phi' + phi = 0")
        return _compose_gauge(red, result)
    else:
        raise ReduceError(f"no reduction row for subalgebra {label!r}")

    red = Reduction(case, label, omega, amp, shift, mult, coeffs, row_params,
                    linking=linking)
    return _compose_gauge(red, result)


def _compose_gauge(red: Reduction, result: ClassificationResult) -> Reduction:
    """Rewrite a reduction built in gauged time in the original variables."""
    gauge = result.gauge
    if gauge.is_identity():
        return red
    comp = {"t": gauge.tmap}
    mult = None
    if red.multiplier is not None:
        mult = mul(result.equation.alpha, E.subst(red.multiplier, comp))
    closed = E.subst(red.closed_form, comp) if red.closed_form is not None else None
    return Reduction(red.case, red.subalgebra,
                     E.subst(red.omega, comp), E.subst(red.amplitude, comp),
                     E.subst(red.shift, comp), mult, red.coeffs, red.params,
                     closed_form=closed, ode_text=red.ode_text,
                     linking=red.linking)


def bvp_to_ivp(bvp: InvariantBVP) -> tuple[Reduction, np.ndarray]:
    """Scaling-invariant boundary data collapses onto initial values for the
    case-1 reduction: phi^(i)(0) = gamma_i."""
    omega, amp, shift, mult, coeffs = _row_scaling(bvp.n, bvp.rho, bvp.lam,
                                                   bvp.delta, 0.0)
    red = Reduction("1" if bvp.n != 1 else "1'", "g1.1", omega, amp, shift,
                    mult, coeffs,
                    {"rho": bvp.rho, "lam": bvp.lam, "delta": bvp.delta,
                     "n": bvp.n, "t0": 0.0, "gammas": list(bvp.gammas),
                     "bvp_t0": bvp.t0})
    return red, np.array(bvp.gammas)


# ---------------------------------------------------------------------------
# reconstruction

@dataclass(frozen=True)
class GridSolution:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    valid: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, fh) -> None:
        fh.write("t,x,u\n")
        for i, tv in enumerate(self.t):
            for j, xv in enumerate(self.x):
                uv = f"{self.u[i, j]:.17g}" if self.valid[i, j] else "nan"
                fh.write(f"{tv:.17g},{xv:.17g},{uv}\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {**self.meta,
                "shape": [len(self.t), len(self.x)],
                "flagged_points": int(np.size(self.valid) - np.count_nonzero(self.valid))}


def reconstruct(red: Reduction, phi: ODESolution, t_vals: Sequence[float],
                x_vals: Sequence[float]) -> GridSolution:
    """Evaluate the ansatz on a (t, x) grid using the integrated profile.

    Grid points whose similarity variable falls outside the integrated span
    are flagged invalid, never extrapolated.
    """
    tv = np.asarray(t_vals, dtype=float)
    xv = np.asarray(x_vals, dtype=float)
    arrays = {"t": tv[:, None], "x": xv[None, :]}
    wg = E.eval_grid(red.omega, arrays)
    ag = np.broadcast_to(E.eval_grid(red.amplitude, arrays), wg.shape)
    bg = np.broadcast_to(E.eval_grid(red.shift, arrays), wg.shape)
    lo, hi = sorted(phi.span)
    pad = 1e-12 * max(1.0, abs(hi - lo))
    valid = np.isfinite(wg) & (wg >= lo - pad) & (wg <= hi + pad)
    u = np.full(wg.shape, np.nan)
    if np.any(valid):
        inside = np.clip(wg[valid], lo, hi)
        u[valid] = ag[valid] * phi.eval_many(inside)[:, 0] + bg[valid]
    meta = {"case": red.case, "subalgebra": red.subalgebra,
            "omega": E.to_text(red.omega), "ansatz": red.ansatz_text(),
            "parameters": red.params, "span": list(phi.span)}
    return GridSolution(tv, xv, u, valid, meta)


# ---------------------------------------------------------------------------
# verification helpers

def ode_defect_terms(coeffs: OdeCoeffs, phi: Expr) -> list[Expr]:
    """Summands of the normal form applied to a symbolic profile phi(omega)."""
    d = E.diff
    return [
        mul(Const(coeffs.delta), d(phi, "omega", 5)),
        mul(Const(coeffs.lam), d(phi, "omega", 3)),
        mul(add(pow_(phi, Const(coeffs.n)),
                add(mul(Const(coeffs.c1), W), Const(coeffs.c0))),
            d(phi, "omega")),
        mul(Const(coeffs.c2), phi),
        mul(Const(coeffs.c3), W),
        Const(coeffs.c4),
    ]


def manufactured_defect(red: Reduction, eq: KawaharaEq, phi: Expr,
                        t_range: tuple[float, float] | None = None,
                        x_range: tuple[float, float] = (-2.0, 2.0),
                        grid: int = 16) -> tuple[float, float]:
    """Substitution identity test with an arbitrary smooth profile.

    Evaluates PDE[ansatz(phi)] - K * ODE[phi] on a grid; for a correct row
    this vanishes identically no matter what phi is, so any smooth
    manufactured profile certifies the reduced equation.  Returns
    (max residual, term scale).
    """
    if red.coeffs is None or red.multiplier is None:
        raise ReduceError("defect test applies to the fifth-order rows only")
    if t_range is None:
        t_range = (eq.domain.lo, eq.domain.hi)
    u = red.ansatz_expr(phi)
    terms = eq.residual_terms(u)
    for term in ode_defect_terms(red.coeffs, phi):
        terms.append(neg(mul(red.multiplier, E.subst(term, {"omega": red.omega}))))
    ts = np.linspace(t_range[0], t_range[1], grid)[:, None]
    xs = np.linspace(x_range[0], x_range[1], grid)[None, :]
    vals = [E.eval_grid(term, {"t": ts, "x": xs}) for term in terms]
    resid = float(np.nanmax(np.abs(sum(vals))))
    scale = max(float(np.nanmax(np.abs(v))) for v in vals)
    return resid, scale


def boundary_residuals(red: Reduction, sol: ODESolution, t_vals: Sequence[float],
                       gammas: Sequence[float]) -> float:
    """Max relative mismatch of the five x = 0 boundary conditions for the
    scaling row: d^i u / dx^i (t, 0) = gamma_i * t^((rho-2-n(rho+1)i)/(3n))."""
    rho, n = red.params["rho"], red.params["n"]
    wx = E.diff(red.omega, "x")
    y0 = sol.eval_many([0.0])[0]
    worst = 0.0
    for t in t_vals:
        amp = E.evaluate(red.amplitude, {"t": float(t)})
        sx = E.evaluate(wx, {"t": float(t), "x": 0.0})
        for i in range(5):
            got = amp * sx ** i * y0[i]
            expo = (rho - 2.0 - n * (rho + 1.0) * i) / (3.0 * n)
            want = gammas[i] * float(t) ** expo
            denom = max(abs(want), abs(gammas[0]) * float(t) ** expo)
            worst = max(worst, abs(got - want) / denom)
    return worst
