"""Online natural actor-critic for average-cost linear-quadratic control.

The package splits into a model layer (problem data, packed quadratic
features), an exact oracle (Lyapunov and Riccati closed forms used as
ground truth), a linear-Gaussian simulator, a projected primal-dual
temporal-difference critic, the natural-gradient actor loop, and a
harness for generation, verification, and seeded batch experiments.
"""

__version__ = "0.1.0"

from .errors import (
    DivergenceError,
    GenerationFailed,
    IllConditioned,
    InstabilityDuringRun,
    LqrError,
    NoConvergence,
    RatioOverflow,
    StateOverflow,
    UnstablePolicy,
)
from .lqr_model import (
    PolicyParams,
    ProblemInstance,
    StateActionPair,
    cost,
    feature,
    feature_dim,
    feature_matrix,
    smat,
    svec,
    sym_kron,
)
from .exact_oracle import (
    CriticTarget,
    ExactEvaluation,
    cost_difference_series,
    evaluate,
    gradient_dominance_bounds,
    joint_covariance,
    joint_dynamics,
    joint_noise_covariance,
    solve_dare,
    solve_p,
    solve_sigma,
    spectral_radius,
    value_functions,
    xi_matrix,
)
from .simulator import (
    BurnIn,
    ExactStationary,
    FromState,
    SimConfig,
    TrajectoryStep,
    default_burn_in,
    dump_trajectory_csv,
    rollout,
    rollout_behavior,
)
from .gtd_critic import (
    CriticDiagnostics,
    CriticState,
    ProjectionSpec,
    evaluate_policy,
    gtd_step_off_policy,
    gtd_step_on_policy,
    project_omega,
    project_theta,
    projection_spec,
)
from .natural_actor_critic import (
    ActorConfig,
    CriticMode,
    Exact,
    Gtd,
    GtdOffPolicy,
    RunLog,
    RunRecord,
    auto_gamma,
    natural_gradient_step,
    run,
)
from .experiment_harness import (
    CriticTargetReport,
    ExperimentConfig,
    GradientReport,
    InstanceSpec,
    generate_instance,
    initial_stable_gain,
    main,
    run_experiment,
    verify_critic_target,
    verify_gradient,
)

__all__ = [
    "__version__",
    # errors
    "LqrError",
    "UnstablePolicy",
    "IllConditioned",
    "NoConvergence",
    "GenerationFailed",
    "DivergenceError",
    "StateOverflow",
    "RatioOverflow",
    "InstabilityDuringRun",
    # model
    "ProblemInstance",
    "PolicyParams",
    "StateActionPair",
    "svec",
    "smat",
    "sym_kron",
    "feature",
    "feature_dim",
    "feature_matrix",
    "cost",
    # oracle
    "ExactEvaluation",
    "CriticTarget",
    "spectral_radius",
    "solve_sigma",
    "solve_p",
    "evaluate",
    "value_functions",
    "joint_dynamics",
    "joint_noise_covariance",
    "joint_covariance",
    "xi_matrix",
    "solve_dare",
    "cost_difference_series",
    "gradient_dominance_bounds",
    # simulator
    "ExactStationary",
    "BurnIn",
    "FromState",
    "SimConfig",
    "TrajectoryStep",
    "default_burn_in",
    "rollout",
    "rollout_behavior",
    "dump_trajectory_csv",
    # critic
    "CriticState",
    "ProjectionSpec",
    "CriticDiagnostics",
    "projection_spec",
    "project_theta",
    "project_omega",
    "gtd_step_on_policy",
    "gtd_step_off_policy",
    "evaluate_policy",
    # actor
    "Gtd",
    "GtdOffPolicy",
    "Exact",
    "CriticMode",
    "ActorConfig",
    "RunRecord",
    "RunLog",
    "natural_gradient_step",
    "auto_gamma",
    "run",
    # harness
    "InstanceSpec",
    "ExperimentConfig",
    "GradientReport",
    "CriticTargetReport",
    "generate_instance",
    "initial_stable_gain",
    "verify_gradient",
    "verify_critic_target",
    "run_experiment",
    "main",
]
