"""Laws of the active count of N independent, identical two-state chains.

Given ``Y(h) = j`` the count ``m`` steps later is the sum of two independent
binomials: survivors ``Binomial(j, q_m)`` and newcomers ``Binomial(N - j, p_m)``.
For large N with vanishing activation the newcomers become Poisson.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError, InvalidParameterError
from .markov import ChainParams, RateParams, decay_power, qm_pm

DEFAULT_TAIL_TOLERANCE = 1e-12
# Above this many multiply-adds the convolution switches to FFT.
_DIRECT_CONVOLVE_LIMIT = 4_000_000


@dataclass(frozen=True)
class CountDistribution:
    """Probability mass over the counts ``support_offset .. support_offset + len - 1``."""

    support_offset: int
    probabilities: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidParameterError("probabilities must be a non-empty 1-d sequence")
        if np.any(probs < 0.0):
            raise InvalidParameterError("probabilities must be nonnegative")
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_offset, self.support_offset + self.probabilities.size)

    def total(self) -> float:
        return float(self.probabilities.sum())

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self.support - mu) ** 2, self.probabilities))

    def pmf(self, y) -> np.ndarray | float:
        y_arr = np.asarray(y) - self.support_offset
        inside = (y_arr >= 0) & (y_arr < self.probabilities.size)
        out = np.where(inside, self.probabilities[np.clip(y_arr, 0, self.probabilities.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def dense(self, upper: int) -> np.ndarray:
        """Masses on ``0 .. upper`` (mass beyond ``upper`` is dropped)."""
        out = np.zeros(upper + 1)
        lo = self.support_offset
        hi = min(upper + 1, lo + self.probabilities.size)
        if hi > lo:
            out[lo:hi] = self.probabilities[: hi - lo]
        return out


def total_variation(a: CountDistribution, b: CountDistribution) -> float:
    """Total-variation distance; mass missing from a truncated law counts as disagreement."""
    lo = min(a.support_offset, b.support_offset)
    hi = max(a.support_offset + a.probabilities.size, b.support_offset + b.probabilities.size)
    ys = np.arange(lo, hi)
    diff = np.abs(a.pmf(ys) - b.pmf(ys)).sum()
    missing = abs((1.0 - a.total()) - (1.0 - b.total()))
    return 0.5 * float(diff + missing)


@dataclass(frozen=True)
class EnsembleSpec:
    params: ChainParams
    n_processes: int

    def __post_init__(self):
        if int(self.n_processes) != self.n_processes or self.n_processes < 1:
            raise InvalidParameterError(f"n_processes must be a positive integer, got {self.n_processes!r}")
        object.__setattr__(self, "n_processes", int(self.n_processes))


@dataclass(frozen=True)
class LimitLaw:
    """Sum of independent ``Binomial(binomial_trials, binomial_p)`` and ``Poisson(poisson_mean)``."""

    binomial_trials: int
    binomial_p: float
    poisson_mean: float

    def __post_init__(self):
        if self.binomial_trials < 0:
            raise InvalidParameterError("binomial_trials must be nonnegative")
        if not 0.0 <= self.binomial_p <= 1.0:
            raise InvalidParameterError("binomial_p must be a probability")
        if not self.poisson_mean >= 0.0:
            raise InvalidParameterError("poisson_mean must be nonnegative")

    def mean(self) -> float:
        return self.binomial_trials * self.binomial_p + self.poisson_mean

    def variance(self) -> float:
        return self.binomial_trials * self.binomial_p * (1.0 - self.binomial_p) + self.poisson_mean


def log_binomial_pmf(n: int, p: float) -> np.ndarray:
    """``log Pr(Binomial(n, p) = k)`` for ``k = 0..n`` via log-gamma."""
    k = np.arange(n + 1)
    log_choose = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return log_choose + xlogy(k, p) + xlog1py(n - k, -p)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    return np.exp(log_binomial_pmf(n, p))


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size * b.size <= _DIRECT_CONVOLVE_LIMIT:
        return np.convolve(a, b)
    out = signal.fftconvolve(a, b)
    return np.clip(out, 0.0, None)


def _check_count(spec: EnsembleSpec, j):
    if int(j) != j or not 0 <= j <= spec.n_processes:
        raise DomainError(f"count j={j!r} outside 0..{spec.n_processes}")
    return int(j)


def _check_steps(m):
    if int(m) != m or m < 0:
        raise DomainError(f"number of steps must be a nonnegative integer, got {m!r}")
    return int(m)


def conditional_pmf(spec: EnsembleSpec, j: int, m: int) -> CountDistribution:
    """Law of ``Y(h+m)`` given ``Y(h) = j``."""
    j = _check_count(spec, j)
    m = _check_steps(m)
    q, p = qm_pm(spec.params, m)
    probs = _convolve(binomial_pmf(j, q), binomial_pmf(spec.n_processes - j, p))
    return CountDistribution(0, probs)


def conditional_mean(spec: EnsembleSpec, j: int, m: int) -> float:
    j = _check_count(spec, j)
    m = _check_steps(m)
    steady = spec.n_processes * spec.params.active_fraction
    return steady + decay_power(spec.params.decay, m) * (j - steady)


def conditional_variance(spec: EnsembleSpec, j: int, m: int) -> float:
    j = _check_count(spec, j)
    q, p = qm_pm(spec.params, _check_steps(m))
    return j * q * (1.0 - q) + (spec.n_processes - j) * p * (1.0 - p)


def aggregate_transition_matrix(spec: EnsembleSpec, m: int = 1) -> np.ndarray:
    """Row ``j`` holds ``Pr(Y(h+m) = y | Y(h) = j)``; rows sum to one."""
    n = spec.n_processes
    return np.vstack([conditional_pmf(spec, j, m).probabilities for j in range(n + 1)])


def asymptotic_pmf(spec: EnsembleSpec) -> CountDistribution:
    return CountDistribution(0, binomial_pmf(spec.n_processes, spec.params.active_fraction))


def limit_law_discrete(alpha_bar: float, beta: float, j: int, m: int) -> LimitLaw:
    """Large-N law when ``alpha = alpha_bar / N`` and ``beta`` is held fixed."""
    if not alpha_bar > 0.0:
        raise InvalidParameterError("alpha_bar must be positive")
    if not 0.0 < beta < 1.0:
        raise InvalidParameterError("beta must lie in (0, 1)")
    if int(j) != j or j < 0:
        raise DomainError(f"count j={j!r} must be a nonnegative integer")
    survive = decay_power(1.0 - beta, _check_steps(m))
    return LimitLaw(int(j), survive, alpha_bar / beta * (1.0 - survive))


def limit_law_continuous(rates: RateParams, j: int, tau: float) -> LimitLaw:
    """Large-N, small-step law after elapsed time ``tau``."""
    if not tau >= 0.0:
        raise DomainError(f"elapsed time must be nonnegative, got {tau!r}")
    if int(j) != j or j < 0:
        raise DomainError(f"count j={j!r} must be a nonnegative integer")
    survive = math.exp(-rates.beta_bar * tau)
    return LimitLaw(int(j), survive, rates.alpha_bar / rates.beta_bar * (1.0 - survive))


def poisson_truncation_point(mean: float, tail_tolerance: float) -> int:
    """Smallest ``K`` with ``Pr(Poisson(mean) > K) < tail_tolerance``.

    A Chernoff bound gives a safe upper bracket; the exact survival function
    then finds the minimal cut by bisection.
    """
    if mean == 0.0:
        return 0
    # Chernoff: Pr(W >= k) <= exp(-mean) * (e * mean / k) ** k for k > mean.
    log_tol = math.log(tail_tolerance)
    k = max(1, math.ceil(mean) + 1)
    while -mean + k * (1.0 + math.log(mean / k)) >= log_tol:
        k = k * 2
    hi = k  # Pr(W > hi) <= Pr(W >= hi) < tol
    lo = -1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if stats.poisson.sf(mid, mean) < tail_tolerance:
            hi = mid
        else:
            lo = mid
    return hi


def limit_law_pmf(law: LimitLaw, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> CountDistribution:
    if not 0.0 < tail_tolerance <= 1e-3:
        raise InvalidParameterError("tail_tolerance must lie in (0, 1e-3]")
    cut = poisson_truncation_point(law.poisson_mean, tail_tolerance)
    poisson = stats.poisson.pmf(np.arange(cut + 1), law.poisson_mean) if law.poisson_mean > 0 else np.ones(1)
    binom = binomial_pmf(law.binomial_trials, law.binomial_p)
    return CountDistribution(0, _convolve(binom, poisson), truncated=True)


def sample_ensemble_step(spec: EnsembleSpec, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance every process one step using one uniform draw per process."""
    state = np.asarray(state, dtype=bool)
    if state.shape != (spec.n_processes,):
        raise DomainError(f"state must have length {spec.n_processes}, got shape {state.shape}")
    u = rng.random(spec.n_processes)
    return np.where(state, u >= spec.params.beta, u < spec.params.alpha)


def sample_aggregate_step(spec: EnsembleSpec, counts, rng: np.random.Generator, steps: int = 1):
    """Advance active counts ``steps`` steps at once (survivors plus newcomers).

    Equal in distribution to stepping every process individually.
    """
    counts = np.asarray(counts, dtype=np.int64)
    q, p = qm_pm(spec.params, steps)
    survivors = rng.binomial(counts, q)
    arrivals = rng.binomial(spec.n_processes - counts, p)
    out = np.asarray(survivors + arrivals)
    return int(out) if out.ndim == 0 else out
