"""Symmetry analysis, similarity reductions and verified closed-form
solutions for variable-coefficient generalized Kawahara equations

    u_t + alpha(t) u^n u_x + beta(t) u_xxx + sigma(t) u_xxxxx = 0.
"""

from .expr import Domain, Expr, QUADRATURE, diff, evaluate, is_zero, parse, to_text
from .model import (KawaharaEq, PointTransform, Theorem1Params, Theorem2Params,
                    Corollary1Params, Corollary2Params, apply_equiv,
                    gauge_alpha1, ice_coefficients, ice_preset,
                    map_to_constant, push_solution, reducibility)
# the classify *function* stays at kawasym.classify.classify: re-exporting it
# here would shadow the submodule binding
from .classify import (ClassificationResult, ClassifyingQuadruple,
                       SymmetryGenerator, canonicalize,
                       optimal_subalgebras, solve_classifying_system,
                       verify_generator)
from .reduction import (GridSolution, InvariantBVP, Reduction, boundary_residuals,
                        build_reduction, bvp_to_ivp, manufactured_defect,
                        reconstruct)
from .ode import (ODESolution, OdeCoeffs, convergence_order, integrate,
                  integrate_fixed, ode_residual)
from .solutions import (ClosedFormSolution, conservation_check,
                        degenerate_solution, kudryashov_family,
                        mapped_kudryashov, pde_residual, tanh_solution_n2)

__version__ = "0.1.0"
