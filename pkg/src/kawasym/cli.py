"""Command-line front end.

Subcommands: classify | reduce | solve | exact | verify | map-to-constant.
Configuration comes from a positional JSON file; common flags override
tolerances and output locations.  Reports are printed to stdout as JSON with
all floats at 17 significant digits, so identical configs produce
byte-identical output; human-readable summaries go to stderr.  File-emitting
commands write CSVs (and PNG figures, unless --no-plot) into --out-dir.

Exit codes: 0 success, 2 configuration error, 3 mathematical failure
(kernel-only classification when a case was demanded, blow-up before the
requested span, unverifiable solution, non-reducible equation).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Mapping

import numpy as np

from . import expr as E
from . import ode as O
from . import reduction as R
from . import solutions as S
from .classify import ClassifyError, classify, optimal_subalgebras
from .model import (KawaharaEq, ModelError, NotReducibleError, ice_preset,
                    map_to_constant, reducibility)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MATH = 3

CASE_SUMMARY = {
    "0": "kernel algebra only (x-translations)",
    "1": "power-law dispersion, two-dimensional algebra",
    "2": "exponential dispersion, two-dimensional algebra",
    "3": "constant dispersion, two-dimensional algebra",
    "0'": "kernel algebra only (x-translations and Galilean boosts)",
    "1'": "power-law dispersion, three-dimensional algebra",
    "2'": "exponential dispersion, three-dimensional algebra",
    "3'": "constant dispersion, three-dimensional algebra",
    "4'": "arctangent-oscillatory dispersion, three-dimensional algebra",
}


class ConfigError(Exception):
    pass


class MathFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic JSON

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if f != f:
            return '"nan"'
        if f in (float("inf"), float("-inf")):
            return f'"{f}"'
        return f"{f:.17g}"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(item) for item in v) + "]"
    if isinstance(v, Mapping):
        items = (f"{json.dumps(str(k))}: {_fmt(v[k])}" for k in sorted(v))
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def render_json(doc: Mapping) -> str:
    return _fmt(doc) + "\n"


# ---------------------------------------------------------------------------
# config loading

def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _load_equation(cfg: Mapping) -> KawaharaEq:
    if cfg.get("preset") == "ice":
        return ice_preset()
    if "preset" in cfg:
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    doc = cfg.get("equation")
    if not isinstance(doc, dict):
        raise ConfigError("config needs an 'equation' object or a 'preset'")
    for key in ("n", "alpha", "beta", "sigma", "domain"):
        if key not in doc:
            raise ConfigError(f"equation is missing '{key}'")
    dom = doc["domain"]
    if not (isinstance(dom, (list, tuple)) and len(dom) == 2):
        raise ConfigError("equation domain must be [lo, hi]")
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'params' must map names to numbers")
    try:
        return KawaharaEq.from_json(doc, params=params or None)
    except (E.ParseError, ModelError, ValueError) as err:
        raise ConfigError(f"invalid equation: {err}") from None


def _positive(cfg: Mapping, key: str, default: float) -> float:
    val = float(cfg.get(key, default))
    if val <= 0:
        raise ConfigError(f"'{key}' must be positive")
    return val


def _grid_from_config(cfg: Mapping, eq: KawaharaEq,
                      default_x=(-5.0, 5.0, 21), default_nt=21):
    spec = cfg.get("grid", {})
    if not isinstance(spec, dict):
        raise ConfigError("'grid' must be an object like "
                          '{"t": [lo, hi, n], "x": [lo, hi, n]}')

    def axis(name, fallback):
        raw = spec.get(name)
        if raw is None:
            return np.linspace(*fallback)
        if not (isinstance(raw, (list, tuple)) and len(raw) == 3):
            raise ConfigError(f"grid '{name}' must be [lo, hi, n]")
        lo, hi, n = float(raw[0]), float(raw[1]), int(raw[2])
        if n < 2 or not hi > lo:
            raise ConfigError(f"grid '{name}' needs lo < hi and n >= 2")
        return np.linspace(lo, hi, n)

    ts = axis("t", (eq.domain.lo, eq.domain.hi, default_nt))
    xs = axis("x", default_x)
    return ts, xs


def _emit(doc: Mapping, out_dir: str | None, name: str) -> None:
    text = render_json(doc)
    sys.stdout.write(text)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text, encoding="utf-8")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_classify(cfg: Mapping, args) -> int:
    eq = _load_equation(cfg)
    try:
        result = classify(eq)
    except ClassifyError as err:
        raise MathFailure(f"classification failed: {err}") from None
    doc = result.to_json()
    if result.metadata.get("canonical_position") is False:
        doc["subalgebras"] = None  # table rows apply at canonical positions
    else:
        doc["subalgebras"] = [e.to_json() for e in optimal_subalgebras(result)]
    doc["summary"] = f"case {result.case}: {CASE_SUMMARY[result.case]}"
    expected = cfg.get("expect_case") or args.case
    _emit(doc, args.out_dir, "classification.json")
    _say(doc["summary"])
    if expected is not None and expected != result.case:
        raise MathFailure(f"expected case {expected!r} but classified as "
                          f"{result.case!r}")
    return EXIT_OK


def _resolve_reduction(cfg: Mapping, args):
    eq = _load_equation(cfg)
    try:
        result = classify(eq)
    except ClassifyError as err:
        raise MathFailure(f"classification failed: {err}") from None
    expected = cfg.get("expect_case") or args.case
    if expected is not None and expected != result.case:
        raise MathFailure(f"expected case {expected!r} but classified as "
                          f"{result.case!r}")
    label = args.subalgebra or cfg.get("subalgebra")
    if not label:
        raise ConfigError("choose a subalgebra ('subalgebra' key or "
                          "--subalgebra)")
    params = cfg.get("subalgebra_params", {})
    if not isinstance(params, dict):
        raise ConfigError("'subalgebra_params' must be an object")
    try:
        red = R.build_reduction(result, label, params)
    except R.NonCanonicalPosition as err:
        raise MathFailure(str(err)) from None
    except R.ReduceError as err:
        raise ConfigError(str(err)) from None
    return eq, result, red


def cmd_reduce(cfg: Mapping, args) -> int:
    _eq, result, red = _resolve_reduction(cfg, args)
    doc = red.to_json()
    doc["case_summary"] = f"case {result.case}: {CASE_SUMMARY[result.case]}"
    _emit(doc, args.out_dir, "reduction.json")
    _say(f"reduced by {red.subalgebra}: omega = {E.to_text(red.omega)}")
    return EXIT_OK


def cmd_solve(cfg: Mapping, args) -> int:
    eq = _load_equation(cfg)
    try:
        result = classify(eq)
    except ClassifyError as err:
        raise MathFailure(f"classification failed: {err}") from None
    if result.case not in ("1", "1'"):
        raise MathFailure(f"the invariant boundary problem needs the scaling "
                          f"case; classified as {result.case!r}")
    if result.metadata.get("canonical_position") is False:
        raise MathFailure("equation is not in canonical coefficient position")
    ivp = cfg.get("ivp")
    if not isinstance(ivp, dict) or "gammas" not in ivp:
        raise ConfigError("solve needs an 'ivp' object with 'gammas'")
    gammas = ivp["gammas"]
    if not (isinstance(gammas, (list, tuple)) and len(gammas) == 5):
        raise ConfigError("'gammas' must list five boundary coefficients")
    span = ivp.get("span", [0.0, 5.0])
    if not (isinstance(span, (list, tuple)) and len(span) == 2):
        raise ConfigError("'span' must be [start, end]")
    rtol = args.rtol if args.rtol is not None else _positive(ivp, "rtol", 1e-8)
    atol = args.atol if args.atol is not None else _positive(ivp, "atol", 1e-10)
    try:
        bvp = R.InvariantBVP(n=result.equation.n, rho=result.params["rho"],
                             lam=result.params["lam"],
                             delta=result.params["delta"], gammas=gammas,
                             t0=eq.domain.lo)
    except ValueError as err:
        raise ConfigError(f"invalid boundary data: {err}") from None
    red, y0 = R.bvp_to_ivp(bvp)
    sol = O.integrate(red.coeffs.rhs(), y0, (float(span[0]), float(span[1])),
                      rtol=rtol, atol=atol)
    resid, scale = O.ode_residual(red.coeffs, sol, probes=args.probes)
    bc_ts = np.linspace(eq.domain.lo, eq.domain.hi, 7)
    bc_err = R.boundary_residuals(red, sol, bc_ts, bvp.gammas)

    theta = (bvp.rho + 1.0) / (3.0)
    x_hi = sorted(sol.span)[1] * eq.domain.lo ** theta
    ts, xs = _grid_from_config(cfg, eq, default_x=(0.0, x_hi, 41), default_nt=21)
    grid = R.reconstruct(red, sol, ts, xs)

    doc = {
        "status": sol.status,
        "reached": sol.reached,
        "requested_span": [float(span[0]), float(span[1])],
        "reduction": red.to_json(),
        "ode_residual": {"max_abs": resid, "scale": scale,
                         "normalized": resid / max(scale, 1e-300)},
        "boundary_condition_error": bc_err,
        "stats": sol.stats.to_json(),
        "rtol": rtol,
        "atol": atol,
        "grid": grid.to_json(),
    }
    out = args.out_dir
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "profile.csv", "w", encoding="utf-8") as fh:
            fh.write("omega,phi,phi1,phi2,phi3,phi4\n")
            for row in sol.to_rows():
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        with open(Path(out) / "solution.csv", "w", encoding="utf-8") as fh:
            grid.to_csv(fh)
        if not args.no_plot:
            from . import plots
            plots.save_profile_plot(sol, Path(out) / "profile.png",
                                    title=f"reduced profile ({red.subalgebra})")
            plots.save_grid_plot(grid, Path(out) / "solution.png",
                                 title="reconstructed u(t, x)")
    _emit(doc, out, "solve.json")
    if sol.status == "blowup":
        _say(f"blow-up before the requested span: reached omega = "
             f"{sol.reached:.10g}")
        return EXIT_MATH
    _say(f"integrated to omega = {sol.reached:.10g}; "
         f"ode residual {resid:.3e} (scale {scale:.3e})")
    return EXIT_OK


def _build_family(cfg: Mapping, eq: KawaharaEq | None) -> S.ClosedFormSolution:
    spec = cfg.get("solution")
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("exact needs a 'solution' object with a 'family'")
    fam = spec["family"]
    try:
        if fam == "kudryashov":
            # the family carries its own constant-coefficient equation
            return S.kudryashov_family(
                float(spec.get("alpha", 1.0)), float(spec["beta"]),
                float(spec["sigma"]), int(spec.get("branch", 1)),
                float(spec.get("mu", 0.0)), float(spec.get("chi", 0.0)),
                domain=eq.domain if eq is not None else None)
        if eq is None:
            raise ConfigError(f"solution family {fam!r} needs an 'equation'")
        if fam == "degenerate":
            return S.degenerate_solution(eq, float(spec.get("c", 0.0)),
                                         float(spec.get("a", 0.0)))
        if fam == "tanh-n2":
            return S.tanh_solution_n2(eq, float(spec.get("k", 1.0)),
                                      float(spec.get("chi", 0.0)))
        if fam == "mapped-kudryashov":
            return S.mapped_kudryashov(
                eq, float(spec.get("delta1", 0.0)), float(spec["delta3"]),
                float(spec["delta4"]), float(spec.get("mu", 0.0)),
                float(spec.get("chi", 0.0)), int(spec.get("branch", 1)))
    except KeyError as err:
        raise ConfigError(f"solution family {fam!r} is missing {err}") from None
    except S.SolutionError as err:
        raise MathFailure(str(err)) from None
    raise ConfigError(f"unknown solution family {fam!r}")


def cmd_exact(cfg: Mapping, args) -> int:
    has_eq = "equation" in cfg or "preset" in cfg
    eq = _load_equation(cfg) if has_eq else None
    sol = _build_family(cfg, eq)
    eq = eq if eq is not None else sol.equation
    ts, xs = _grid_from_config(cfg, eq)
    report = S.pde_residual(eq, sol, grid=(ts, xs))
    tol = float(cfg.get("tolerances", {}).get("residual", 1e-7))
    doc = {"solution": sol.to_json(), "residual": report.to_json(),
           "verified": bool(report.normalized <= tol), "tolerance": tol}
    if report.normalized > tol:
        _emit(doc, args.out_dir, "exact.json")
        raise MathFailure(f"candidate failed verification: normalized "
                          f"residual {report.normalized:.3e} > {tol:g}")
    out = args.out_dir
    u_grid = E.eval_grid(sol.expr, {"t": ts[:, None], "x": xs[None, :]})
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "exact.csv", "w", encoding="utf-8") as fh:
            fh.write("t,x,u\n")
            for i, tv in enumerate(ts):
                for j, xv in enumerate(xs):
                    fh.write(f"{tv:.17g},{xv:.17g},{u_grid[i, j]:.17g}\n")
        if not args.no_plot:
            from . import plots
            plots.save_surface_plot(ts, xs, u_grid, Path(out) / "exact.png",
                                    title=sol.name)
    _emit(doc, out, "exact.json")
    _say(f"{sol.name}: normalized residual {report.normalized:.3e} "
         f"(verified <= {tol:g})")
    return EXIT_OK


def cmd_verify(cfg: Mapping, args) -> int:
    eq = _load_equation(cfg)
    raw = cfg.get("candidate")
    if not isinstance(raw, str):
        raise ConfigError("verify needs a 'candidate' expression string")
    params = cfg.get("params", {})
    try:
        u = E.parse(raw, tuple(params))
    except E.ParseError as err:
        raise ConfigError(f"candidate does not parse: {err}") from None
    if params:
        u = E.subst(u, {k: E.Const(float(v)) for k, v in params.items()})
    free = E.free_vars(u) - {"t", "x"}
    if free:
        raise ConfigError(f"candidate has unbound parameters: {sorted(free)}")
    ts, xs = _grid_from_config(cfg, eq)
    pde = S.pde_residual(eq, u, grid=(ts, xs))
    momentum, energy = S.conservation_check(eq, u, grid=(ts, xs))
    doc = {"candidate": E.to_text(u),
           "pde": pde.to_json(),
           "momentum": momentum.to_json(),
           "energy": energy.to_json()}
    _emit(doc, args.out_dir, "verify.json")
    _say(f"pde {pde.normalized:.3e} | momentum {momentum.normalized:.3e} | "
         f"energy {energy.normalized:.3e} (normalized)")
    return EXIT_OK


def cmd_map_to_constant(cfg: Mapping, args) -> int:
    eq = _load_equation(cfg)
    red = reducibility(eq)
    doc: dict = {"reducible": red.reducible, "witness": red.witness,
                 "failed_criteria": list(red.failed)}
    if not red.reducible:
        _emit(doc, args.out_dir, "map.json")
        raise MathFailure("equation is not reducible to constant coefficients: "
                          + "; ".join(red.failed))
    const_eq, tr = map_to_constant(eq)
    mid = {"t": const_eq.domain.midpoint()}
    doc["constants"] = {"alpha": 1.0,
                        "beta": E.evaluate(const_eq.beta, mid),
                        "sigma": E.evaluate(const_eq.sigma, mid)}
    doc["transform"] = tr.to_json()
    doc["target_domain"] = [const_eq.domain.lo, const_eq.domain.hi]
    _emit(doc, args.out_dir, "map.json")
    _say(f"constants: beta = {doc['constants']['beta']:.6g}, "
         f"sigma = {doc['constants']['sigma']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kawasym",
        description="Symmetry classification, reductions and verified "
                    "solutions for variable-coefficient generalized Kawahara "
                    "equations.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "classify": "detect the symmetry-extension case and emit generators",
        "reduce": "build the similarity reduction for one subalgebra",
        "solve": "integrate an invariant boundary problem and reconstruct u",
        "exact": "construct a closed-form family and verify it",
        "verify": "residual- and conservation-check a candidate expression",
        "map-to-constant": "map a reducible equation onto constant "
                           "coefficients",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the JSON job description")
        p.add_argument("-o", "--out-dir", default=None,
                       help="directory for CSV/JSON/PNG artifacts")
        p.add_argument("--rtol", type=float, default=None,
                       help="integration relative tolerance override")
        p.add_argument("--atol", type=float, default=None,
                       help="integration absolute tolerance override")
        p.add_argument("--grid", default=None,
                       help="grid override 'tlo:thi:nt,xlo:xhi:nx'")
        p.add_argument("--case", default=None,
                       help="demand a specific classification case")
        p.add_argument("--subalgebra", default=None,
                       help="subalgebra label for reduce")
        p.add_argument("--zero-tol", type=float, default=None,
                       help="identity-test tolerance override")
        p.add_argument("--probes", type=int, default=256,
                       help="probe count for the ODE residual")
        p.add_argument("--no-plot", action="store_true",
                       help="skip PNG rendering next to the CSVs")
    return parser


def _apply_grid_flag(cfg: dict, flag: str | None) -> None:
    if not flag:
        return
    try:
        t_part, x_part = flag.split(",")
        tlo, thi, nt = t_part.split(":")
        xlo, xhi, nx = x_part.split(":")
        cfg.setdefault("grid", {})
        cfg["grid"]["t"] = [float(tlo), float(thi), int(nt)]
        cfg["grid"]["x"] = [float(xlo), float(xhi), int(nx)]
    except ValueError:
        raise ConfigError("--grid expects 'tlo:thi:nt,xlo:xhi:nx'") from None


_COMMANDS = {
    "classify": cmd_classify,
    "reduce": cmd_reduce,
    "solve": cmd_solve,
    "exact": cmd_exact,
    "verify": cmd_verify,
    "map-to-constant": cmd_map_to_constant,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.zero_tol is not None:
        os.environ["KAWAHARA_SEED_TOL"] = repr(args.zero_tol)
    try:
        cfg = _load_config(args.config)
        _apply_grid_flag(cfg, args.grid)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        _say(f"config error: {err}")
        return EXIT_CONFIG
    except MathFailure as err:
        _say(f"mathematical failure: {err}")
        return EXIT_MATH
    except (ModelError, NotReducibleError) as err:
        _say(f"mathematical failure: {err}")
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
