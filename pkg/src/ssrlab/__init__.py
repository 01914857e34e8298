"""Simulation lab for two-stage trials with blinded sample size re-estimation."""
from .errors import (
    BudgetError,
    ConfigError,
    DegenerateDataError,
    DomainError,
    NoSecondStageError,
    UnsupportedDesignError,
)
from .finaltests import Sidedness, TestKind, TestOutcome
from .mc import MCEstimate, ScenarioConfig, power_curve, run_replicate, run_scenario, run_scenario_multi
from .ssr import FixedRule, KieserFriedeRule, NonInferiorityRule, ThresholdRule
from .trial import DesignKind, StageData, TrialData, TrialParams

__version__ = "0.1.0"
