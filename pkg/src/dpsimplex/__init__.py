"""Differentially private stochastic optimization over probability simplices.

Library layout:

* :mod:`dpsimplex.simplex` - simplex points, log-domain iterates, vertex
  sampling and sparsification
* :mod:`dpsimplex.oracles` - per-sample objectives, datasets, truncated
  geometric levels and the bias-reduced gradient estimator
* :mod:`dpsimplex.privacy` - budgets, composition rules, the exponential
  mechanism and the schedule planners
* :mod:`dpsimplex.solvers` - the private saddle-point solvers and the
  non-private baseline
* :mod:`dpsimplex.sco` - the private convex solver with anytime averaging
* :mod:`dpsimplex.problems` - benchmark problems and evaluation oracles
* :mod:`dpsimplex.verify` - Monte-Carlo verification of the sparsification
  bounds
* :mod:`dpsimplex.cli` - seeded experiment runner
"""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    ConfigError,
    DatasetError,
    DpSimplexError,
    OracleError,
    PlannerError,
)
from .oracles import (
    Dataset,
    PerSampleObjective,
    PopulationObjective,
    SaddleGradient,
    TruncGeom,
    batch_gradient,
    bias_reduced_gradient,
    check_objective,
    sample_trunc_geom,
)
from .privacy import (
    BrPlan,
    PrivacyParams,
    ScoPlan,
    SsmdPlan,
    adaptive_budget_ok,
    advanced_composition_eps,
    exp_mech_sample,
    max_step_anytime_sco,
    max_step_vertex_smd,
    max_stop_weight_bias_reduced,
    plan_anytime_sco,
    plan_bias_reduced,
    plan_vertex_smd,
)
from .problems import (
    BilinearObjective,
    ComponentLoss,
    GapReport,
    MatrixGame,
    MaxLossProblem,
    NashReport,
    SeparableQuadratic,
    SynthDataProblem,
    SynthReport,
    dp_smoke_first_vertex,
    exact_gap_bilinear,
    gap_general,
    make_max_loss_objective,
    make_synth_data_objective,
    nash_value_bruteforce,
    smoothed_max_bilinear,
    synth_data_generate,
)
from .rng import RngStream
from .sco import (
    ConvexObjective,
    ScoSolution,
    anytime_average_regret_decomposition,
    solve_dp_sco,
)
from .simplex import (
    LogWeights,
    SimplexPoint,
    mwu_step,
    running_average,
    sample_vertex,
    sparsify,
    to_point,
)
from .solvers import (
    BrRunTrace,
    SaddleSolution,
    boosting_shape,
    solve_boosted,
    solve_smd_bias_reduced,
    solve_smd_nonprivate,
    solve_smd_vertex,
)
from .verify import SUITE_NAMES, SuiteReport, run_all_suites, verify_maurey_suite

__all__ = [
    "BilinearObjective",
    "BrPlan",
    "BrRunTrace",
    "BudgetError",
    "ComponentLoss",
    "ConfigError",
    "ConvexObjective",
    "Dataset",
    "DatasetError",
    "DpSimplexError",
    "GapReport",
    "LogWeights",
    "MatrixGame",
    "MaxLossProblem",
    "NashReport",
    "OracleError",
    "PerSampleObjective",
    "PlannerError",
    "PopulationObjective",
    "PrivacyParams",
    "RngStream",
    "SUITE_NAMES",
    "SaddleGradient",
    "SaddleSolution",
    "ScoPlan",
    "ScoSolution",
    "SeparableQuadratic",
    "SimplexPoint",
    "SsmdPlan",
    "SuiteReport",
    "SynthDataProblem",
    "SynthReport",
    "TruncGeom",
    "adaptive_budget_ok",
    "advanced_composition_eps",
    "anytime_average_regret_decomposition",
    "batch_gradient",
    "bias_reduced_gradient",
    "boosting_shape",
    "check_objective",
    "dp_smoke_first_vertex",
    "exact_gap_bilinear",
    "exp_mech_sample",
    "gap_general",
    "make_max_loss_objective",
    "make_synth_data_objective",
    "max_step_anytime_sco",
    "max_step_vertex_smd",
    "max_stop_weight_bias_reduced",
    "mwu_step",
    "nash_value_bruteforce",
    "plan_anytime_sco",
    "plan_bias_reduced",
    "plan_vertex_smd",
    "run_all_suites",
    "running_average",
    "sample_trunc_geom",
    "sample_vertex",
    "smoothed_max_bilinear",
    "solve_boosted",
    "solve_dp_sco",
    "solve_smd_bias_reduced",
    "solve_smd_nonprivate",
    "solve_smd_vertex",
    "sparsify",
    "synth_data_generate",
    "to_point",
    "verify_maurey_suite",
]
