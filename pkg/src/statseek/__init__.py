"""Active learning of stationary action profiles in multi-agent systems.

An external observer repeatedly queries private agents, fits affine models
of their action-reaction laws with a Kalman-filter recursion, and steers
its queries toward a profile every agent reacts to with itself.
"""

from .agents import (
    AgentOracle,
    DareFailure,
    EmptyReactionSet,
    GameBundle,
    LqrInstance,
    QpAgentSpec,
    dare_solve,
    make_game,
    random_lqr_instance,
)
from .engine import (
    RunConfig,
    RunTrace,
    SolverAbort,
    StatsResult,
    SweepResult,
    Verdict,
    run,
    stats,
    sweep,
)
from .oracle import (
    OracleNotConverged,
    PseudoGradientGame,
    brute_force_fixed_points,
    extragradient,
    stationarity_residual,
)
from .profiles import (
    CollectiveProfile,
    EmptyFeasibleSet,
    Partition,
    Polytope,
    box,
    contains,
    project,
)
from .query import (
    QpError,
    QpInfeasible,
    QpMaxIterations,
    QueryProblem,
    QueryResult,
    build_query_problem,
    min_norm_query,
    qp_solve,
    solve_linear_fixed_point,
)
from .surrogate import (
    AffineSurrogate,
    KalmanBank,
    SampleLog,
    batch_refit,
    kf_step,
    predict,
    residual_mse,
)

__version__ = "0.1.0"

__all__ = [
    "AffineSurrogate",
    "AgentOracle",
    "CollectiveProfile",
    "DareFailure",
    "EmptyFeasibleSet",
    "EmptyReactionSet",
    "GameBundle",
    "KalmanBank",
    "LqrInstance",
    "OracleNotConverged",
    "Partition",
    "Polytope",
    "PseudoGradientGame",
    "QpAgentSpec",
    "QpError",
    "QpInfeasible",
    "QpMaxIterations",
    "QueryProblem",
    "QueryResult",
    "RunConfig",
    "RunTrace",
    "SampleLog",
    "SolverAbort",
    "StatsResult",
    "SweepResult",
    "Verdict",
    "batch_refit",
    "box",
    "brute_force_fixed_points",
    "build_query_problem",
    "contains",
    "dare_solve",
    "extragradient",
    "kf_step",
    "make_game",
    "min_norm_query",
    "predict",
    "project",
    "qp_solve",
    "random_lqr_instance",
    "residual_mse",
    "run",
    "solve_linear_fixed_point",
    "stationarity_residual",
    "stats",
    "sweep",
]
