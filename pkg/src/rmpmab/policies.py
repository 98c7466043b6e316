"""Arm-selection policies: Whittle indices, the myopic rule and the standard baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import BeliefState, BeliefTable, Regime, ThompsonBelief
from .errors import DegenerateDiscountError, DomainError, InvalidParameterError, UnknownPolicyError
from .markov import ChainParams, RateParams, decay_power

POLICY_IDS = (
    "whittle",
    "whittle-limit-discrete",
    "whittle-limit-continuous",
    "myopic",
    "round-robin",
    "epsilon-greedy",
    "bayes-ucb",
    "thompson",
    "genie",
)
INDEX_POLICIES = ("whittle", "whittle-limit-discrete", "whittle-limit-continuous", "myopic")

DEFAULT_EPSILON = 0.15
DEFAULT_UCB_C = 1.96


# -- arm descriptions -------------------------------------------------------

@dataclass(frozen=True)
class FiniteArm:
    """``n_processes`` chains with per-step probabilities ``params``."""

    params: ChainParams
    n_processes: int
    arm_id: int = 1

    def __post_init__(self):
        if int(self.n_processes) != self.n_processes or self.n_processes < 1:
            raise InvalidParameterError(f"n_processes must be a positive integer, got {self.n_processes!r}")

    @property
    def steady_count(self) -> float:
        return self.n_processes * self.params.active_fraction


@dataclass(frozen=True)
class DiscreteLimitArm:
    """Many chains with vanishing activation: aggregate activation ``alpha_bar``, deactivation ``beta``."""

    alpha_bar: float
    beta: float
    arm_id: int = 1

    def __post_init__(self):
        if not self.alpha_bar > 0.0:
            raise InvalidParameterError("alpha_bar must be positive")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParameterError("beta must lie in (0, 1)")

    @property
    def steady_count(self) -> float:
        return self.alpha_bar / self.beta


@dataclass(frozen=True)
class ContinuousLimitArm:
    rates: RateParams
    arm_id: int = 1

    @property
    def steady_count(self) -> float:
        return self.rates.steady_count


ArmConfig = FiniteArm | DiscreteLimitArm | ContinuousLimitArm


@dataclass(frozen=True)
class PolicySpec:
    """A policy id plus its tuning knobs. ``label`` names output files."""

    policy_id: str
    gamma: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    c: float = DEFAULT_UCB_C
    L: int = 1
    label: str | None = None

    def __post_init__(self):
        if self.policy_id not in POLICY_IDS:
            raise UnknownPolicyError(f"unknown policy id {self.policy_id!r}; expected one of {', '.join(POLICY_IDS)}")
        if not 0.0 <= self.gamma < 1.0:
            raise DegenerateDiscountError(f"discount factor must lie in [0, 1), got {self.gamma!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParameterError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if not self.c >= 0.0:
            raise InvalidParameterError(f"c must be nonnegative, got {self.c!r}")
        if int(self.L) != self.L or self.L < 1:
            raise InvalidParameterError(f"L must be a positive integer, got {self.L!r}")
        if self.label is None:
            object.__setattr__(self, "label", self.policy_id)

    @property
    def uses_belief_matrix(self) -> bool:
        return self.policy_id == "thompson"


# -- index formulas ---------------------------------------------------------

def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise DegenerateDiscountError(f"discount factor must lie in [0, 1), got {gamma!r}")


def whittle_general(C0, Cm, Cm1, D0, Dm, Dm1, j, gamma):
    """Index for any arm whose conditional mean is affine in the last observation.

    ``C(.)`` and ``D(.)`` are the intercept and slope of ``E[Y | j, m]`` at
    delays ``0``, ``m`` and ``m + 1``.
    """
    denom = 1.0 - gamma * D0
    if not denom > 0.0:
        raise DegenerateDiscountError(f"1 - gamma*D(0) = {denom} must be positive")
    return (Cm - gamma * Cm1 + gamma * C0) / denom + j * (Dm - gamma * Dm1) / denom


def _transient_weight(decay, gamma):
    return (1.0 - gamma * decay) / (1.0 - gamma)


def _finite_index(steady, decay, j, m, gamma):
    return steady + _transient_weight(decay, gamma) * decay_power(decay, m) * (j - steady)


def whittle_discrete(arm: FiniteArm, belief: BeliefState, gamma: float) -> float:
    _check_gamma(gamma)
    if belief.regime is not Regime.DISCRETE:
        raise DomainError("finite-arm index needs a discrete belief")
    if belief.last_observation > arm.n_processes:
        raise DomainError(f"observation {belief.last_observation} exceeds N={arm.n_processes}")
    return float(_finite_index(arm.steady_count, arm.params.decay, belief.last_observation, belief.delay, gamma))


def whittle_discrete_limit(arm: DiscreteLimitArm, belief: BeliefState, gamma: float) -> float:
    _check_gamma(gamma)
    if belief.regime is not Regime.DISCRETE:
        raise DomainError("discrete limit index needs a discrete belief")
    return float(_finite_index(arm.steady_count, 1.0 - arm.beta, belief.last_observation, belief.delay, gamma))


def whittle_continuous(arm: ContinuousLimitArm, belief: BeliefState, gamma: float) -> float:
    _check_gamma(gamma)
    if belief.regime is not Regime.CONTINUOUS:
        raise DomainError("continuous index needs a continuous belief")
    bb = arm.rates.beta_bar
    steady = arm.steady_count
    weight = (1.0 - gamma * math.exp(-bb)) / (1.0 - gamma)
    return steady + weight * math.exp(-bb * belief.delay) * (belief.last_observation - steady)


# -- vectorised arm tables --------------------------------------------------

class ArmSet:
    """Column view over a list of same-kind arms for vectorised scoring."""

    def __init__(self, arms):
        arms = list(arms)
        if not arms:
            raise DomainError("empty arm set")
        kinds = {type(a) for a in arms}
        if len(kinds) != 1:
            raise DomainError("all arms in one decision loop must share a kind")
        self.arms = arms
        self.kind = kinds.pop()
        self.ids = [a.arm_id for a in arms]
        if len(set(self.ids)) != len(self.ids):
            raise DomainError("arm ids must be distinct")
        if self.kind is FiniteArm:
            self.n = np.array([a.n_processes for a in arms], dtype=np.int64)
            self.alpha = np.array([a.params.alpha for a in arms])
            self.beta = np.array([a.params.beta for a in arms])
            self.decay = 1.0 - self.alpha - self.beta
            self.steady = self.n * self.alpha / (self.alpha + self.beta)
        elif self.kind is DiscreteLimitArm:
            self.alpha_bar = np.array([a.alpha_bar for a in arms])
            self.beta = np.array([a.beta for a in arms])
            self.decay = 1.0 - self.beta
            self.steady = self.alpha_bar / self.beta
        else:
            self.alpha_bar = np.array([a.rates.alpha_bar for a in arms])
            self.beta_bar = np.array([a.rates.beta_bar for a in arms])
            self.steady = self.alpha_bar / self.beta_bar

    def __len__(self):
        return len(self.arms)

    @property
    def regime(self) -> Regime:
        return Regime.CONTINUOUS if self.kind is ContinuousLimitArm else Regime.DISCRETE

    @property
    def max_counts(self):
        return list(self.n) if self.kind is FiniteArm else None

    def conditional_mean(self, j, delay):
        if self.kind is ContinuousLimitArm:
            return self.steady + np.exp(-self.beta_bar * delay) * (j - self.steady)
        return self.steady + decay_power(self.decay, delay) * (j - self.steady)

    def index(self, policy_id, j, delay, gamma):
        _check_gamma(gamma)
        if policy_id == "myopic":
            return self.conditional_mean(j, delay)
        if policy_id == "whittle":
            if self.kind is not FiniteArm:
                raise DomainError("policy 'whittle' needs finite arms")
            return _finite_index(self.steady, self.decay, j, delay, gamma)
        if policy_id == "whittle-limit-discrete":
            if self.kind is FiniteArm:
                # alpha_bar = alpha * N for a finite arm viewed in the vanishing-activation limit
                steady = self.alpha * self.n / self.beta
                return _finite_index(steady, 1.0 - self.beta, j, delay, gamma)
            if self.kind is DiscreteLimitArm:
                return _finite_index(self.steady, self.decay, j, delay, gamma)
            raise DomainError("policy 'whittle-limit-discrete' needs discrete arms")
        if policy_id == "whittle-limit-continuous":
            if self.kind is not ContinuousLimitArm:
                raise DomainError("policy 'whittle-limit-continuous' needs continuous-limit arms")
            weight = (1.0 - gamma * np.exp(-self.beta_bar)) / (1.0 - gamma)
            return self.steady + weight * np.exp(-self.beta_bar * delay) * (j - self.steady)
        raise UnknownPolicyError(f"{policy_id!r} is not an index policy")


# -- empirical statistics for the baselines ---------------------------------

@dataclass
class BaselineStats:
    """Running sample mean and variance of one arm's observed rewards."""

    sample_mean: float = 0.0
    pull_count: int = 0
    _m2: float = field(default=0.0, repr=False)

    @property
    def sample_variance(self) -> float:
        # Undefined with a single sample; zero keeps the UCB bonus off until a second pull.
        if self.pull_count < 2:
            return 0.0
        return max(self._m2 / (self.pull_count - 1), 0.0)

    def record(self, reward: float):
        self.pull_count += 1
        delta = reward - self.sample_mean
        self.sample_mean += delta / self.pull_count
        self._m2 += delta * (reward - self.sample_mean)


class StatsTable:
    """Vectorised counterpart of a list of :class:`BaselineStats`."""

    def __init__(self, n_arms: int):
        self.count = np.zeros(n_arms, dtype=np.int64)
        self.mean = np.zeros(n_arms)
        self.m2 = np.zeros(n_arms)

    @classmethod
    def from_stats(cls, stats) -> "StatsTable":
        stats = list(stats)
        table = cls(len(stats))
        for k, s in enumerate(stats):
            table.count[k] = s.pull_count
            table.mean[k] = s.sample_mean
            table.m2[k] = s._m2
        return table

    def record(self, k: int, reward: float):
        self.count[k] += 1
        delta = reward - self.mean[k]
        self.mean[k] += delta / self.count[k]
        self.m2[k] += delta * (reward - self.mean[k])

    def variance(self) -> np.ndarray:
        out = np.zeros_like(self.mean)
        ok = self.count >= 2
        out[ok] = np.maximum(self.m2[ok] / (self.count[ok] - 1), 0.0)
        return out


# -- selection ----------------------------------------------------------------

@dataclass(frozen=True)
class PolicyDecision:
    selected: tuple
    scores: np.ndarray
    positions: tuple = ()


def top_l(scores: np.ndarray, L: int) -> np.ndarray:
    """Positions of the ``L`` largest scores; ties go to the lower position."""
    scores = np.where(np.isnan(scores), -np.inf, scores)
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:L]


def warmup_steps(n_arms: int, L: int = 1) -> int:
    return -(-n_arms // L)


def select(policy: PolicySpec, arms, beliefs: BeliefTable, stats: StatsTable | None, step: int,
           rng: np.random.Generator | None = None, belief_matrices=None, true_counts=None) -> PolicyDecision:
    """Choose ``policy.L`` arms at decision epoch ``step``.

    During the first ``ceil(K / L)`` epochs every policy except the genie
    observes the arms in id order. ``beliefs`` must already be aged to the current epoch.
    """
    arm_set = arms if isinstance(arms, ArmSet) else ArmSet(arms)
    K = len(arm_set)
    L = policy.L
    if L > K:
        raise DomainError(f"cannot select L={L} of K={K} arms")
    pid = policy.policy_id
    if isinstance(stats, (list, tuple)):
        stats = StatsTable.from_stats(stats)

    if pid == "genie":
        # the reference policy sees the latent counts, so it needs no warm-up
        if true_counts is None:
            raise DomainError("genie needs the true active counts")
        scores = np.asarray(true_counts, dtype=float)
        positions = top_l(scores, L)
    elif step < warmup_steps(K, L) or pid == "round-robin":
        positions = (step * L + np.arange(L)) % K
        scores = np.zeros(K)
        scores[positions] = 1.0
    elif pid in INDEX_POLICIES:
        if not beliefs.observed.all():
            raise DomainError("index policies need every arm observed at least once")
        scores = arm_set.index(pid, beliefs.last, beliefs.delay, policy.gamma)
        positions = top_l(scores, L)
    elif pid == "epsilon-greedy":
        _need_rng(rng, pid)
        if rng.random() < policy.epsilon:
            scores = rng.random(K)
        else:
            scores = stats.mean.copy()
        positions = top_l(scores, L)
    elif pid == "bayes-ucb":
        pulls = np.maximum(stats.count, 1)
        scores = stats.mean + policy.c * np.sqrt(stats.variance() / pulls)
        positions = top_l(scores, L)
    elif pid == "thompson":
        _need_rng(rng, pid)
        if belief_matrices is None:
            raise DomainError("thompson needs per-arm belief matrices")
        scores = thompson_sample(belief_matrices, rng)
        positions = top_l(scores, L)
    else:
        raise UnknownPolicyError(pid)
    positions = tuple(int(p) for p in positions)
    return PolicyDecision(tuple(arm_set.ids[p] for p in positions), np.asarray(scores, dtype=float), positions)


def _need_rng(rng, pid):
    if rng is None:
        raise DomainError(f"policy {pid!r} needs a random generator")


def thompson_sample(belief_matrices, rng: np.random.Generator) -> np.ndarray:
    """Draw every process state from its marginal and count the active ones per arm."""
    if isinstance(belief_matrices, ThompsonBelief):
        return belief_matrices.sample_counts(rng)
    sizes = [m.per_process_active_prob.size for m in belief_matrices]
    marg = np.concatenate([m.per_process_active_prob for m in belief_matrices])
    draws = rng.random(marg.size) < marg
    bounds = np.cumsum([0] + sizes)
    return np.add.reduceat(draws, bounds[:-1]).astype(float) if marg.size else np.zeros(len(sizes))
