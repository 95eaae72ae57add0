"""Prescribed scalar curvature with flat critical points on domains of R^n.

Green's functions by images or walk-on-spheres, the Euler-Hopf type
existence count over tuples of critical points, bubble diagnostics and a
reduced pseudo-gradient flow on bubble parameters.
"""
__version__ = "0.1.0"

from .bubbles import (BubbleConfiguration, DimensionalConstants, QuadratureRule, delta,
                      dimensional_constants, fit_parameters, functional_J, membership_V_p_eps,
                      p_delta, reduced_J, slaved_alpha)
from .criterion import (build_full_matrix, enumerate_C_infinity, euler_hopf_verdict,
                        infinity_index, interaction_matrix)
from .errors import (AssumptionsViolated, CapExceededError, ConfigError, DegenerateGeometryError,
                     DomainError, EulerHopfError, FitError, IntegratorError, QuadratureError,
                     ShellError, SingularityError)
from .geometry import Ball, Domain, Generic, unit_ball
from .greens import Estimate, GreensEvaluator
from .kfield import CriticalPointSpec, KField, check_assumptions, morse_like_index
from .pseudoflow import (FlowModel, FlowParams, FlowTrajectory, RegionLabel,
                         assemble_pseudogradient, classify_region, detect_blowup,
                         integrate_flow, reduced_gradient_a, reduced_gradient_lambda)
