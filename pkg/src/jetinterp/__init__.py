"""Jet interpolation by flows of complete polynomial vector fields on C^n."""

from .errors import (AnchorMismatch, BudgetViolated, DegenerateJet, DomainVanishing, InfeasibleDecomposition,
                     JetInterpError, NoConvergence, NotSL, NumericOverflow, PathStuck, PreconditionViolated,
                     RankDeficient, SampleFailed, SchemaError, UnderdeterminedFit)
from .flow_atlas import (FlowWord, OvershearField, PolynomialField, ShearField, SpanningBasis, build_spanning_basis,
                         decompose_field, decompose_monomial_field, flow_eval, lift_at)
from .jet_core import (Jet, JetTuple, TruncatedPolyMap, dim_Y, index_set, jet_compose, jet_distance, jet_inverse,
                       jet_of_map, jets_of_map, tuple_compose, tuple_inverse)
from .parametric_engine import (JetHomotopy, ParamFlowFamily, ParamGrid, ParamJetFamily, StageSchedule,
                                certify_convergence, diag_family, fit_times, homotopy_surgery, param_realize,
                                run_induction, theta_generator)
from .realizer import (RealizationProblem, RealizationResult, certify, prepare_basis, realize_local, realize_path,
                       realize_points)
from .sl_factor import (ElementaryFactor, FactorWord, SeriesAt1, factor_constant, factor_diagonal_family,
                        obstruction_check, psi_rank)

__version__ = "0.1.0"
