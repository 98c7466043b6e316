"""Algebra of a single two-state discrete-time Markov chain.

States are 0 (inactive) and 1 (active). Matrices are left-stochastic:
column ``j`` is the source state and row ``i`` the destination, so
``P[i, j] = Pr(X(h+1) = i | X(h) = j)`` and columns sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDiscretizationError, InvalidParameterError

# Above this exponent the decay factor is evaluated as sign * exp(m * log|r|).
EXACT_POWER_LIMIT = 64


def _check_open_unit(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and 0.0 < float(value) < 1.0):
        raise InvalidParameterError(f"{name} must lie in the open interval (0, 1), got {value!r}")


@dataclass(frozen=True)
class ChainParams:
    """Per-step activation probability ``alpha`` and deactivation probability ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        _check_open_unit("alpha", self.alpha)
        _check_open_unit("beta", self.beta)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def decay(self) -> float:
        """Second eigenvalue ``1 - alpha - beta`` of the transition matrix."""
        return 1.0 - self.alpha - self.beta

    @property
    def active_fraction(self) -> float:
        """Stationary probability of the active state."""
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class RateParams:
    """Continuous-time rates: aggregate activation ``alpha_bar`` and per-process deactivation ``beta_bar``."""

    alpha_bar: float
    beta_bar: float

    def __post_init__(self):
        for name in ("alpha_bar", "beta_bar"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer)) and float(value) > 0.0
                    and math.isfinite(float(value))):
                raise InvalidParameterError(f"{name} must be a positive finite rate, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def steady_count(self) -> float:
        return self.alpha_bar / self.beta_bar


def decay_power(r, m):
    """``r**m`` for a decay factor ``|r| <= 1`` and integer ``m >= 0`` (scalar or array).

    Small exponents are powered exactly; large ones go through the log so that
    the result flushes to zero instead of crawling through denormals.
    """
    r_arr = np.asarray(r, dtype=float)
    m_arr = np.asarray(m)
    if np.any(m_arr < 0):
        raise InvalidParameterError("number of steps must be nonnegative")
    if r_arr.ndim == 0 and m_arr.ndim == 0:
        m_int = int(m_arr)
        rv = float(r_arr)
        if m_int <= EXACT_POWER_LIMIT or rv == 0.0:
            return rv ** m_int
        sign = -1.0 if (rv < 0.0 and m_int % 2) else 1.0
        return sign * math.exp(m_int * math.log(abs(rv)))
    r_b, m_b = np.broadcast_arrays(r_arr, m_arr)
    m_f = m_b.astype(float)
    exact = np.power(r_b, m_f)
    with np.errstate(divide="ignore"):
        logmag = m_f * np.log(np.abs(r_b))
    sign = np.where((r_b < 0.0) & (np.mod(m_b, 2) == 1), -1.0, 1.0)
    far = sign * np.exp(logmag)
    return np.where(m_b <= EXACT_POWER_LIMIT, exact, far)


def transition_matrix(params: ChainParams) -> np.ndarray:
    a, b = params.alpha, params.beta
    return np.array([[1.0 - a, b], [a, 1.0 - b]])


def m_step_matrix(params: ChainParams, m: int) -> np.ndarray:
    """Closed-form ``P**m``."""
    if int(m) != m or m < 0:
        raise InvalidParameterError(f"number of steps must be a nonnegative integer, got {m!r}")
    a, b = params.alpha, params.beta
    rm = decay_power(params.decay, int(m))
    s = a + b
    return np.array([
        [(b + a * rm) / s, (b - b * rm) / s],
        [(a - a * rm) / s, (a + b * rm) / s],
    ])


def stationary_distribution(params: ChainParams) -> tuple[float, float]:
    s = params.alpha + params.beta
    return params.beta / s, params.alpha / s


def qm_pm(params: ChainParams, m):
    """Probabilities of being active ``m`` steps after starting active (q) or inactive (p).

    Accepts a scalar or an integer array for ``m``.
    """
    a, b = params.alpha, params.beta
    rm = decay_power(params.decay, m)
    s = a + b
    q = (a + b * rm) / s
    p = (a - a * rm) / s
    if np.ndim(q) == 0:
        return float(q), float(p)
    return q, p


def generator_matrix(rates: RateParams, n_processes: int) -> np.ndarray:
    """Rate matrix of one process when the aggregate activation rate is shared by ``n_processes``."""
    a = rates.alpha_bar / n_processes
    b = rates.beta_bar
    return np.array([[-a, b], [a, -b]])


def discretize_rates(rates: RateParams, n_processes: int, dt: float) -> ChainParams:
    """First-order discretisation ``alpha = alpha_bar*dt/n``, ``beta = beta_bar*dt``."""
    if int(n_processes) != n_processes or n_processes < 1:
        raise InvalidDiscretizationError(f"n_processes must be a positive integer, got {n_processes!r}")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise InvalidDiscretizationError(f"time step must be positive, got {dt!r}")
    alpha = rates.alpha_bar * dt / n_processes
    beta = rates.beta_bar * dt
    if alpha >= 1.0 or beta >= 1.0:
        raise InvalidDiscretizationError(
            f"time step {dt} too large: alpha={alpha}, beta={beta} must both be below 1")
    return ChainParams(alpha, beta)
