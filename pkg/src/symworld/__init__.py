"""Symbolic gridworlds, interval rule models and novelty adaptation."""

from .adaptation import (
    AdaptationConfig,
    MixSchedule,
    imagine_rollout,
    model_learning_curve,
    probe_error,
    random_policy_return,
    run_baseline,
    run_worldcloner,
)
from .detector import DetectionEvent, DetectorState
from .exceptions import (
    ConfigError,
    ContractError,
    DomainError,
    InsufficientDataError,
    InvariantViolation,
    SchemaError,
    SymWorldError,
)
from .features import FeatureSchema, FeatureSpec, SymbolicState, StateDelta, diff, make_state
from .geometry import AABI
from .gridenv import Action, GridEnv, NoveltySpec, build_env
from .harness import ExperimentSpec, run_experiment, write_result
from .metrics import MetricReport, adaptive_efficiency, build_report, moving_average, update_efficiency
from .policy import TabularQPolicy, UpdateBuffer
from .rules import UNKNOWN, Effect, IntervalRuleModel, Prediction, Rule
from .transition import Provenance, Transition

__version__ = "0.1.0"

__all__ = [
    "AABI",
    "Action",
    "AdaptationConfig",
    "ConfigError",
    "ContractError",
    "DetectionEvent",
    "DetectorState",
    "DomainError",
    "Effect",
    "ExperimentSpec",
    "FeatureSchema",
    "FeatureSpec",
    "GridEnv",
    "InsufficientDataError",
    "IntervalRuleModel",
    "InvariantViolation",
    "MetricReport",
    "MixSchedule",
    "NoveltySpec",
    "Prediction",
    "Provenance",
    "Rule",
    "SchemaError",
    "StateDelta",
    "SymWorldError",
    "SymbolicState",
    "TabularQPolicy",
    "Transition",
    "UNKNOWN",
    "UpdateBuffer",
    "adaptive_efficiency",
    "build_env",
    "build_report",
    "diff",
    "imagine_rollout",
    "make_state",
    "model_learning_curve",
    "moving_average",
    "probe_error",
    "random_policy_return",
    "run_baseline",
    "run_experiment",
    "run_worldcloner",
    "update_efficiency",
    "write_result",
]
