"""Bracket filtration analysis, commutator flow certificates and steering
for distributions spanned by smooth vector fields on a coordinate box."""

from .commutator import (OrderResult, TaylorReport, approx_velocity,
                         commutator_program, flow_count, rescaled_program,
                         shifted_program, verify_taylor)
from .dpath import (Arc, DPath, ValidationReport, build_dpath, load_dpath,
                    merge_arcs, validate_dpath, write_dpath)
from .errors import (BracketReachError, BudgetExceeded, DomainEscape,
                     FrameDeficient, HypercubeExhausted, NoConvergence,
                     ScheduleDomain, SingularJacobian, Stalled, StepUnderflow,
                     UnknownScenario)
from .expr import ParseError
from .fields import (BracketWord, DistributionSpec, SmoothField,
                     iterated_bracket, lie_bracket)
from .filtration import (DepthResult, FiltrationReport, FrameSelection,
                         analyze_distribution, filtration_ranks, grid_samples,
                         minimal_depth, right_nested_words, select_frame)
from .flows import (Const, FlowProgram, PlainT, SignedRoot, apply_program,
                    flow_trajectory, integrate_flow, invert_program)
from .reach import (BoundsEstimate, ConnectParams, EndpointJacobian,
                    FormulaRadius, Frame, RadiusCertificate, certified_radius,
                    connect, endpoint_map, endpoint_program, estimate_bounds,
                    formula_exponent, formula_radius, frame_at,
                    jacobian_endpoint, operational_delta_max, probe_targets,
                    steer)
from .scenarios import BUILTIN_SCENARIOS, Scenario, builtin_names, load_scenario

__version__ = "0.1.0"
