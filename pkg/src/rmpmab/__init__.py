"""Restless multi-process multi-armed bandits.

Ensembles of two-state Markov chains grouped into arms, closed-form Whittle
indices with a value-iteration oracle, baseline policies, a strong-regret
simulator, parameter estimation and offline replay.
"""

__version__ = "0.1.0"

from .markov import ChainParams, RateParams, m_step_matrix, qm_pm, stationary_distribution  # noqa: E402
from .ensemble import CountDistribution, EnsembleSpec, conditional_pmf, conditional_mean  # noqa: E402
from .belief import BeliefState, Regime  # noqa: E402
from .policies import ContinuousLimitArm, DiscreteLimitArm, FiniteArm, PolicySpec, select  # noqa: E402
from .simulator import ExperimentConfig, ParamSampler, run_experiment, run_trial  # noqa: E402

__all__ = [
    "ChainParams", "RateParams", "m_step_matrix", "qm_pm", "stationary_distribution",
    "CountDistribution", "EnsembleSpec", "conditional_pmf", "conditional_mean",
    "BeliefState", "Regime",
    "ContinuousLimitArm", "DiscreteLimitArm", "FiniteArm", "PolicySpec", "select",
    "ExperimentConfig", "ParamSampler", "run_experiment", "run_trial",
]
