"""Per-arm sufficient statistics and the full per-process belief used by Thompson sampling."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DelayOverflowError, DomainError
from .markov import ChainParams, qm_pm

MAX_DELAY = 2 ** 32


class Regime(str, Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class BeliefState:
    """Last observed active count and the delay since that observation.

    ``max_count`` is the arm's process count ``N`` for finite arms and
    ``None`` for limit-regime arms whose counts are unbounded.
    """

    last_observation: int
    delay: float = 0
    regime: Regime = Regime.DISCRETE
    max_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        _check_observation(self.last_observation, self.max_count)
        if self.regime is Regime.DISCRETE:
            if int(self.delay) != self.delay or self.delay < 0:
                raise DomainError(f"discrete delay must be a nonnegative integer, got {self.delay!r}")
            object.__setattr__(self, "delay", int(self.delay))
        elif not self.delay >= 0.0:
            raise DomainError(f"elapsed time must be nonnegative, got {self.delay!r}")
        if self.delay >= MAX_DELAY:
            raise DelayOverflowError(f"delay {self.delay} reached the {MAX_DELAY}-step limit")


def _check_observation(value, max_count):
    if int(value) != value or value < 0 or (max_count is not None and value > max_count):
        upper = "" if max_count is None else f"..{max_count}"
        raise DomainError(f"observation {value!r} outside 0{upper}")


def update_selected(belief: BeliefState, observed: int) -> BeliefState:
    _check_observation(observed, belief.max_count)
    return BeliefState(int(observed), 0, belief.regime, belief.max_count)


def update_unselected(belief: BeliefState, dt: float = 1) -> BeliefState:
    if belief.regime is Regime.DISCRETE:
        if dt != 1:
            raise DomainError(f"discrete beliefs age by exactly one step, got increment {dt!r}")
    elif not dt > 0.0:
        raise DomainError(f"continuous increment must be positive, got {dt!r}")
    return BeliefState(belief.last_observation, belief.delay + dt, belief.regime, belief.max_count)


@dataclass(frozen=True)
class BeliefMatrix:
    """Per-process probability of being active (the active row of the belief matrix)."""

    per_process_active_prob: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.per_process_active_prob, dtype=float)
        if probs.ndim != 1:
            raise DomainError("belief marginals must be a 1-d array")
        if np.any((probs < 0.0) | (probs > 1.0)):
            raise DomainError("belief marginals must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "per_process_active_prob", probs)

    def expected_count(self) -> float:
        return float(self.per_process_active_prob.sum())


def propagate_matrix(belief: BeliefMatrix, params: ChainParams, steps: int) -> BeliefMatrix:
    if steps == 0:
        return belief
    q, p = qm_pm(params, steps)
    marg = belief.per_process_active_prob
    return BeliefMatrix(np.clip(marg * q + (1.0 - marg) * p, 0.0, 1.0))


def collapse_matrix(observed_state) -> BeliefMatrix:
    return BeliefMatrix(np.asarray(observed_state, dtype=bool).astype(float))


def collapse_from_count(count: int, n_processes: int) -> BeliefMatrix:
    """Collapse onto a canonical state with the first ``count`` processes active.

    Processes within an arm are exchangeable, so any arrangement of ``count``
    active bits carries the same information about the aggregate.
    """
    state = np.zeros(n_processes, dtype=bool)
    state[:count] = True
    return collapse_matrix(state)


class BeliefTable:
    """Array-backed table of per-arm beliefs owned by one decision loop.

    ``observed[k]`` is False until arm ``k`` has been observed for the first time.
    """

    def __init__(self, n_arms: int, regime: Regime | str = Regime.DISCRETE, max_counts=None):
        self.regime = Regime(regime)
        self.last = np.zeros(n_arms, dtype=np.int64)
        self.delay = np.zeros(n_arms, dtype=np.int64 if self.regime is Regime.DISCRETE else float)
        self.observed = np.zeros(n_arms, dtype=bool)
        self.max_counts = None if max_counts is None else list(max_counts)

    def __len__(self):
        return self.last.size

    @classmethod
    def from_states(cls, states) -> "BeliefTable":
        states = list(states)
        if not states:
            raise DomainError("belief table needs at least one arm")
        regime = states[0].regime
        table = cls(len(states), regime, [s.max_count for s in states])
        for k, s in enumerate(states):
            if s.regime is not regime:
                raise DomainError("all beliefs in a table must share one regime")
            table.last[k] = s.last_observation
            table.delay[k] = s.delay
            table.observed[k] = True
        return table

    def __getitem__(self, k) -> BeliefState:
        if not self.observed[k]:
            raise DomainError(f"arm at position {k} has not been observed yet")
        max_count = None if self.max_counts is None else self.max_counts[k]
        return BeliefState(int(self.last[k]), self.delay[k].item(), self.regime, max_count)

    def age(self, dt: float = 1):
        """Advance the delay of every observed arm (the unselected branch of the update)."""
        if self.regime is Regime.DISCRETE and dt != 1:
            raise DomainError(f"discrete beliefs age by exactly one step, got increment {dt!r}")
        if self.regime is Regime.CONTINUOUS and not dt > 0.0:
            raise DomainError(f"continuous increment must be positive, got {dt!r}")
        self.delay[self.observed] += dt
        if self.observed.any() and self.delay[self.observed].max() >= MAX_DELAY:
            raise DelayOverflowError(f"delay reached the {MAX_DELAY}-step limit")

    def observe(self, k: int, value: int):
        max_count = None if self.max_counts is None else self.max_counts[k]
        _check_observation(value, max_count)
        self.last[k] = value
        self.delay[k] = 0
        self.observed[k] = True


class ThompsonBelief:
    """Per-process marginals of every finite arm kept in one flat array.

    Equivalent to a list of :class:`BeliefMatrix` propagated one step at a
    time, without per-arm object churn inside the simulation loop.
    """

    def __init__(self, params_list, sizes):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        q1 = np.concatenate([np.full(n, 1.0 - p.beta) for p, n in zip(params_list, self.sizes)])
        p1 = np.concatenate([np.full(n, p.alpha) for p, n in zip(params_list, self.sizes)])
        self._q1, self._p1 = q1, p1
        self.marginals = np.concatenate([np.full(n, p.active_fraction) for p, n in zip(params_list, self.sizes)])

    def propagate(self):
        m = self.marginals
        self.marginals = np.clip(m * self._q1 + (1.0 - m) * self._p1, 0.0, 1.0)

    def collapse(self, k: int, count: int):
        lo, hi = self.bounds[k], self.bounds[k + 1]
        self.marginals[lo:hi] = 0.0
        self.marginals[lo:lo + count] = 1.0

    def matrix(self, k: int) -> BeliefMatrix:
        return BeliefMatrix(self.marginals[self.bounds[k]:self.bounds[k + 1]].copy())

    def sample_counts(self, rng: np.random.Generator) -> np.ndarray:
        draws = rng.random(self.marginals.size) < self.marginals
        return np.add.reduceat(draws, self.bounds[:-1]).astype(float)
