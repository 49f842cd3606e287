"""Multi-region SIHR epidemic simulation with multi-agent mobility control.

Regions decide what share of each inbound route to admit; the package
simulates the resulting spread, scores it with pandemic and lockdown costs,
and trains per-region controllers whose objective mixes their own reward
with the system-wide reward.
"""

from .environment import Observation, PandemicEnv, StepOutcome
from .epidemic import EpidemicRates, PandemicState, VisiblePandemicState
from .errors import (
    ConfigurationError,
    ContractViolation,
    InfeasibleMobilityError,
    PandemicMarlError,
)
from .evaluation import (
    MetricReport,
    Trajectory,
    TrainedPolicy,
    compute_metrics,
    load_policy,
    run_episode,
    sweep,
    type_wise,
)
from .learner import IRCLearner, TrainConfig, load_train_config, train
from .policies import FixedPolicy, Policy, ThresholdPolicy
from .rewards import LockdownLedger, RegionProfile
from .scenario import Scenario, load_scenario, outbreak_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ContractViolation", "EpidemicRates", "FixedPolicy",
    "IRCLearner", "InfeasibleMobilityError", "LockdownLedger", "MetricReport", "Observation",
    "PandemicEnv", "PandemicMarlError", "PandemicState", "Policy", "RegionProfile",
    "Scenario", "StepOutcome", "ThresholdPolicy", "TrainConfig", "TrainedPolicy",
    "Trajectory", "VisiblePandemicState", "compute_metrics", "load_policy",
    "load_scenario", "load_train_config", "outbreak_scenario", "run_episode", "sweep",
    "train", "type_wise",
]
