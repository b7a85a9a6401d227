"""Budget-constrained adaptive scheduling of anytime multi-passage readers.

The package schedules transformer-layer executions across the retrieved
passages of a question: local early exit, confidence-greedy global
scheduling, and a policy-gradient-trained global scheduler, evaluated
against static baselines on trace corpora that stand in for a real reader.
"""

from .calibration import (CalibrationTable, TemperatureScaler,
                          apply_calibration, calibrate, default_grid, sigmoid)
from .estimators import (BaseScheduler, EfficientBaseline,
                         GreedySkylineBuilder, PolicySkylineBuilder,
                         RandomScheduler, StandardBaseline, TopKBaseline,
                         TowerBuilder)
from .evaluation import (Diagnostics, EvalPoint, EvalReport, ReductionResult,
                         compute_diagnostics, evaluate, reduction_factor,
                         run_all, sweep)
from .policy import (PolicyGradient, PolicyParams, TowerFeatures,
                     count_parameters, features, greedy_equivalent_params,
                     init_policy_params, log_policy_prob, log_prob_gradient,
                     policy_distribution, priority, select_action)
from .schedulers import (SchedulerConfig, empty_tower_priority, expand,
                         output_phase, run_greedy_skyline, run_policy_skyline,
                         run_scheduler, run_static, run_tower_builder,
                         run_uniform_random)
from .synthetic import GeneratorConfig, generate
from .traces import (Budget, PassageTrace, QuestionInstance, ScheduleLog,
                     Skyline, TraceFormatError, TraceInvariantError,
                     canonical_real, load_logs, load_traces, save_logs,
                     save_traces)
from .training import (TrainConfig, TrainingDivergedError, TrainingHistory,
                       discounted_returns, step_reward, train)

__version__ = "0.1.0"

__all__ = [
    "Budget", "BaseScheduler", "CalibrationTable", "Diagnostics",
    "EfficientBaseline", "EvalPoint", "EvalReport", "GeneratorConfig",
    "GreedySkylineBuilder", "PassageTrace", "PolicyGradient", "PolicyParams",
    "PolicySkylineBuilder", "QuestionInstance", "RandomScheduler",
    "ReductionResult", "ScheduleLog", "SchedulerConfig", "Skyline",
    "StandardBaseline", "TemperatureScaler", "TopKBaseline", "TowerBuilder",
    "TowerFeatures", "TraceFormatError", "TraceInvariantError", "TrainConfig",
    "TrainingDivergedError", "TrainingHistory", "apply_calibration",
    "calibrate", "canonical_real", "compute_diagnostics", "count_parameters",
    "default_grid", "discounted_returns", "empty_tower_priority", "evaluate",
    "expand", "features", "generate", "greedy_equivalent_params",
    "init_policy_params", "load_logs", "load_traces", "log_policy_prob",
    "save_logs",
    "log_prob_gradient", "output_phase", "policy_distribution", "priority",
    "reduction_factor", "run_all", "run_greedy_skyline", "run_policy_skyline",
    "run_scheduler", "run_static", "run_tower_builder", "run_uniform_random",
    "save_traces", "select_action", "sigmoid", "step_reward", "sweep",
    "train",
]
