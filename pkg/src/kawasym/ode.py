"""Explicit embedded Runge-Kutta 5(4) integration with dense output.

The propagating method is the Dormand-Prince pair; step-size selection uses
a PI controller and the continuous extension is the standard quartic
interpolant of the pair.  A fixed-step mode drives the convergence-order
check with the same tableau.

The reduced fifth-order equations integrate as first-order systems in
y = (phi, phi', phi'', phi''', phi'''').  They are not stiff on the spans
of interest but can blow up in finite time; a blow-up truncates the
solution and reports the reached endpoint instead of failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "OdeCoeffs", "ODESolution", "SolverStats", "ConvergenceResult",
    "integrate", "integrate_fixed", "convergence_order", "ode_residual",
    "IntegrationError", "MaxStepsExceeded",
]


class IntegrationError(Exception):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])
# quartic continuous extension: y(h*theta) = y0 + h * (K^T P) @ [theta..theta^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_BETA1 = 0.7 / 5.0
_BETA2 = 0.4 / 5.0


@dataclass
class SolverStats:
    steps: int = 0
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0

    def to_json(self) -> dict:
        return {"steps": self.steps, "accepted": self.accepted,
                "rejected": self.rejected, "rhs_evaluations": self.nfev}


class ODESolution:
    """Accepted mesh, states and per-step interpolants of one integration."""

    def __init__(self, ts: np.ndarray, ys: np.ndarray, qs: np.ndarray,
                 stats: SolverStats, status: str, reached: float):
        self.ts = ts
        self.ys = ys
        self.qs = qs  # (nsteps, d, 4)
        self.stats = stats
        self.status = status
        self.reached = reached

    @property
    def span(self) -> tuple[float, float]:
        return float(self.ts[0]), float(self.ts[-1])

    @property
    def dim(self) -> int:
        return self.ys.shape[1]

    def _locate(self, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ts = self.ts
        ascending = ts[-1] >= ts[0]
        key = ts if ascending else -ts
        w = omega if ascending else -omega
        lo, hi = key[0], key[-1]
        if np.any(w < lo - 1e-12 * max(1.0, abs(lo))) or \
           np.any(w > hi + 1e-12 * max(1.0, abs(hi))):
            raise IntegrationError("evaluation point outside the integrated span")
        idx = np.clip(np.searchsorted(key, w, side="right") - 1, 0, len(ts) - 2)
        h = ts[idx + 1] - ts[idx]
        theta = (omega - ts[idx]) / h
        return idx, theta

    def eval_many(self, omega) -> np.ndarray:
        """States at the given points via the per-step interpolant; (m, d)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        idx, theta = self._locate(omega)
        tv = np.stack([theta, theta ** 2, theta ** 3, theta ** 4], axis=-1)
        h = (self.ts[idx + 1] - self.ts[idx])[:, None]
        vals = self.ys[idx] + h * np.einsum("mdk,mk->md", self.qs[idx], tv)
        exact = omega == self.ts[idx]
        vals[exact] = self.ys[idx][exact]
        at_end = omega == self.ts[-1]
        vals[at_end] = self.ys[-1]
        return vals

    def __call__(self, omega: float) -> np.ndarray:
        return self.eval_many([omega])[0]

    def derivative_many(self, omega) -> np.ndarray:
        """d/d(omega) of the interpolant at the given points; (m, d)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        idx, theta = self._locate(omega)
        tv = np.stack([np.ones_like(theta), 2 * theta, 3 * theta ** 2,
                       4 * theta ** 3], axis=-1)
        return np.einsum("mdk,mk->md", self.qs[idx], tv)

    def to_rows(self) -> np.ndarray:
        return np.column_stack([self.ts, self.ys])


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray,
                rtol: float, atol: float) -> float:
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


def _initial_step(f, t0, y0, f0, direction, rtol, atol, span_len):
    sc = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, 0.1 * span_len)
    y1 = y0 + h0 * direction * f0
    f1 = np.asarray(f(t0 + h0 * direction, y1), dtype=float)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span_len)


def integrate(rhs: Callable, y0: Sequence[float], span: tuple[float, float],
              rtol: float = 1e-8, atol: float = 1e-10,
              max_steps: int = 10 ** 6, first_step: float | None = None
              ) -> ODESolution:
    """Adaptive integration of y' = rhs(t, y) over the span.

    A step-size underflow (finite-time blow-up) truncates the result with
    status 'blowup' and the reached endpoint; exceeding max_steps raises.
    """
    if rtol < 1e-13:
        raise ValueError("rtol below 1e-13 is not resolvable in double precision")
    t0, t1 = float(span[0]), float(span[1])
    if t0 == t1:
        raise ValueError("empty integration span")
    y = np.asarray(y0, dtype=float)
    d = len(y)
    direction = 1.0 if t1 > t0 else -1.0
    span_len = abs(t1 - t0)
    stats = SolverStats()

    def f(t, yy):
        stats.nfev += 1
        return np.asarray(rhs(t, yy), dtype=float)

    k = np.empty((7, d))
    k[0] = f(t0, y)
    h = first_step if first_step is not None else \
        _initial_step(f, t0, y, k[0], direction, rtol, atol, span_len)
    h = abs(h)

    ts = [t0]
    ys = [y.copy()]
    qs = []
    t = t0
    err_prev = 1.0
    status = "success"

    while (t - t1) * direction < 0.0:
        if stats.steps >= max_steps:
            raise MaxStepsExceeded(f"exceeded {max_steps} steps at t = {t}")
        h = min(h, abs(t1 - t))
        if h <= 16.0 * np.finfo(float).eps * max(abs(t), 1.0):
            status = "blowup"
            break
        stats.steps += 1
        hs = h * direction
        for i in range(1, 7):
            yi = y + hs * (_A[i] @ k[:i])
            k[i] = f(t + _C[i] * hs, yi)
        y1 = y + hs * (_B5 @ k)
        err_vec = hs * (_ERR @ k)
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(err_vec))):
            err = math.inf
        else:
            err = _error_norm(err_vec, y, y1, rtol, atol)
        if err <= 1.0:
            # interpolant convention: y(theta) = y + (t_next - t) * Q @ theta-vec
            qs.append(k.T @ _P)
            t = t + hs
            ts.append(t)
            ys.append(y1.copy())
            stats.accepted += 1
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_BETA1) * err_prev ** _BETA2
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(err, 1e-10)
            y = y1
            k[0] = f(t, y)  # FSAL stage reused as the next first stage
        else:
            stats.rejected += 1
            if math.isinf(err):
                h *= _MIN_FACTOR
            else:
                h *= min(1.0, max(_MIN_FACTOR, _SAFETY * err ** (-0.2)))

    ts_arr = np.array(ts)
    ys_arr = np.array(ys)
    qs_arr = np.array(qs) if qs else np.empty((0, d, 4))
    return ODESolution(ts_arr, ys_arr, qs_arr, stats, status, float(t))


def integrate_fixed(rhs: Callable, y0: Sequence[float], span: tuple[float, float],
                    n_steps: int) -> ODESolution:
    """Same tableau, equal steps, no error control (convergence studies)."""
    t0, t1 = float(span[0]), float(span[1])
    y = np.asarray(y0, dtype=float)
    d = len(y)
    stats = SolverStats()

    def f(t, yy):
        stats.nfev += 1
        return np.asarray(rhs(t, yy), dtype=float)

    hs = (t1 - t0) / n_steps
    ts = [t0]
    ys = [y.copy()]
    qs = []
    k = np.empty((7, d))
    t = t0
    for step in range(n_steps):
        k[0] = f(t, y)
        for i in range(1, 7):
            yi = y + hs * (_A[i] @ k[:i])
            k[i] = f(t + _C[i] * hs, yi)
        y = y + hs * (_B5 @ k)
        if not np.all(np.isfinite(y)):
            return ODESolution(np.array(ts), np.array(ys),
                               np.array(qs) if qs else np.empty((0, d, 4)),
                               stats, "blowup", float(t))
        qs.append(k.T @ _P)
        t = t0 + (step + 1) * hs
        ts.append(t)
        ys.append(y.copy())
        stats.steps += 1
        stats.accepted += 1
    return ODESolution(np.array(ts), np.array(ys), np.array(qs), stats,
                       "success", float(t))


# ---------------------------------------------------------------------------
# the reduced-equation normal form

def _power(base: np.ndarray | float, n: float):
    r = round(n)
    if abs(n - r) <= 1e-12:
        return np.power(base, int(r))
    return np.power(base, n)  # requires positive base; NaN propagates to a reject


@dataclass(frozen=True)
class OdeCoeffs:
    """delta*phi''''' + lam*phi''' + (phi^n + c1*w + c0)*phi' + c2*phi
    + c3*w + c4 = 0, integrated as a first-order system of dimension 5."""

    delta: float
    lam: float
    n: float
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0

    def __post_init__(self):
        if self.delta == 0.0:
            raise ValueError("leading coefficient delta must be nonzero")

    def rhs(self) -> Callable:
        delta, lam, n = self.delta, self.lam, self.n
        c0, c1, c2, c3, c4 = self.c0, self.c1, self.c2, self.c3, self.c4

        def f(w, y):
            phi5 = -(lam * y[3] + (_power(y[0], n) + c1 * w + c0) * y[1]
                     + c2 * y[0] + c3 * w + c4) / delta
            return np.array([y[1], y[2], y[3], y[4], phi5])

        return f

    def residual_terms(self, w: np.ndarray, y: np.ndarray,
                       phi5: np.ndarray) -> list[np.ndarray]:
        """Summands of the normal form with an externally supplied phi'''''."""
        return [
            self.delta * phi5,
            self.lam * y[:, 3],
            (_power(y[:, 0], self.n) + self.c1 * w + self.c0) * y[:, 1],
            self.c2 * y[:, 0],
            self.c3 * w,
            np.full_like(w, self.c4),
        ]

    def to_json(self) -> dict:
        return {"delta": self.delta, "lam": self.lam, "n": self.n,
                "c0": self.c0, "c1": self.c1, "c2": self.c2,
                "c3": self.c3, "c4": self.c4}


def ode_residual(coeffs: OdeCoeffs, sol: ODESolution, probes: int = 256
                 ) -> tuple[float, float]:
    """Defect of the dense output against the normal form.

    phi ... phi'''' come from the interpolant; phi''''' is the interpolant's
    derivative, so the returned sup-norm measures how far the continuous
    solution is from satisfying the equation (it shrinks with rtol).
    Returns (residual, scale) with scale the largest term magnitude.
    """
    a, b = sol.span
    ws = np.linspace(a, b, probes)
    y = sol.eval_many(ws)
    phi5 = sol.derivative_many(ws)[:, 4]
    terms = coeffs.residual_terms(ws, y, phi5)
    resid = np.abs(sum(terms))
    scale = max(float(np.nanmax(np.abs(tv))) for tv in terms)
    return float(np.nanmax(resid)), scale


@dataclass(frozen=True)
class ConvergenceResult:
    order: float | None
    exact: bool
    errors: tuple

    def __str__(self):
        return "EXACT" if self.exact else f"order {self.order:.3f}"


def convergence_order(rhs: Callable, y0: Sequence[float],
                      span: tuple[float, float], exact=None,
                      n0: int = 32, levels: int = 4) -> ConvergenceResult:
    """Observed order from step halving in fixed-step mode.

    ``exact`` is either a callable t -> y or a reference endpoint vector;
    when omitted a tight adaptive run supplies the reference.  Zero error at
    every level reports EXACT instead of an order.
    """
    if callable(exact):
        ref = np.asarray(exact(span[1]), dtype=float)
    elif exact is not None:
        ref = np.asarray(exact, dtype=float)
    else:
        ref = integrate(rhs, y0, span, rtol=1e-13, atol=1e-14).ys[-1]
    errors = []
    for level in range(levels):
        sol = integrate_fixed(rhs, y0, span, n0 * 2 ** level)
        errors.append(float(np.max(np.abs(sol.ys[-1] - ref))))
    scale = float(np.max(np.abs(ref))) + 1.0
    if max(errors) <= 1e-13 * scale:
        return ConvergenceResult(None, True, tuple(errors))
    orders = [math.log2(errors[i] / errors[i + 1])
              for i in range(len(errors) - 1)
              if errors[i + 1] > 0 and errors[i] > 0]
    if not orders:
        return ConvergenceResult(None, True, tuple(errors))
    return ConvergenceResult(float(np.median(orders)), False, tuple(errors))
