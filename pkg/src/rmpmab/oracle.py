"""Numerical Whittle indices for a single finite arm.

The subsidy problem is solved by value iteration on the truncated state space
``(j, m)``, ``0 <= j <= N``, ``0 <= m <= M``; the passive action at ``m = M``
stays at ``M``. The index of a state is the subsidy at which both actions are
equally good there, located by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleSpec, conditional_pmf
from .errors import DegenerateDiscountError, DomainError, InvalidParameterError, OracleFailure
from .markov import decay_power
from .policies import FiniteArm, whittle_discrete
from .belief import BeliefState

DEFAULT_MAX_ITER = 200_000
_BRACKET_EXPANSIONS = 60


def default_max_delay(arm: FiniteArm, floor: int = 16) -> int:
    """Smallest ``M`` with ``|1 - alpha - beta| ** M < 1e-12``."""
    r = abs(arm.params.decay)
    if r == 0.0:
        return floor
    return max(floor, math.ceil(math.log(1e-12) / math.log(r)) + 1)


class TruncatedArmMdp:
    """Subsidy MDP of one finite arm, with transition laws cached per state."""

    def __init__(self, arm: FiniteArm, max_delay: int, gamma: float):
        if int(max_delay) != max_delay or max_delay < 1:
            raise InvalidParameterError(f"max_delay must be a positive integer, got {max_delay!r}")
        if not 0.0 <= gamma < 1.0:
            raise DegenerateDiscountError(f"discount factor must lie in [0, 1), got {gamma!r}")
        self.arm = arm
        self.max_delay = int(max_delay)
        self.gamma = float(gamma)
        n = arm.n_processes
        spec = EnsembleSpec(arm.params, n)
        # kernel[j, m, y] = Pr(Y = y | last observation j, delay m)
        self.kernel = np.empty((n + 1, self.max_delay + 1, n + 1))
        for j in range(n + 1):
            for m in range(self.max_delay + 1):
                self.kernel[j, m] = conditional_pmf(spec, j, m).probabilities
        self.reward = self.kernel @ np.arange(n + 1)

    @property
    def shape(self):
        return self.reward.shape

    def intercept_slope(self, m):
        """``C(m)``, ``D(m)`` of the affine conditional mean ``C(m) + j D(m)``."""
        d = decay_power(self.arm.params.decay, m)
        return self.arm.steady_count * (1.0 - d), d

    def bellman(self, values: np.ndarray, lam: float):
        passive_next = np.concatenate([values[:, 1:], values[:, -1:]], axis=1)
        passive = lam + self.gamma * passive_next
        active = self.reward + self.gamma * (self.kernel @ values[:, 0])
        return passive, active


@dataclass
class ValueTable:
    values: np.ndarray
    optimal_action: np.ndarray  # True where the active action is strictly better
    passive_values: np.ndarray
    active_values: np.ndarray
    subsidy: float
    iterations: int
    mdp: TruncatedArmMdp = field(repr=False)

    def bellman_residual(self) -> float:
        p, a = self.mdp.bellman(self.values, self.subsidy)
        return float(np.abs(np.maximum(p, a) - self.values).max())

    def gap(self, j: int, m: int) -> float:
        """Passive minus active value at ``(j, m)``."""
        return float(self.passive_values[j, m] - self.active_values[j, m])


def value_iteration(mdp: TruncatedArmMdp, lam: float, tol: float = 1e-10,
                    max_iter: int = DEFAULT_MAX_ITER, initial: np.ndarray | None = None) -> ValueTable:
    """Iterate the Bellman operator until the sup-norm step is below ``tol * (1 - gamma) / gamma``."""
    if not tol > 0.0:
        raise InvalidParameterError("tol must be positive")
    g = mdp.gamma
    values = np.zeros(mdp.shape) if initial is None else np.array(initial, dtype=float)
    threshold = tol * (1.0 - g) / g if g > 0.0 else math.inf
    for it in range(1, max_iter + 1):
        passive, active = mdp.bellman(values, lam)
        new = np.maximum(passive, active)
        step = np.abs(new - values).max()
        values = new
        if g == 0.0 or step < threshold:
            passive, active = mdp.bellman(values, lam)
            return ValueTable(values, active > passive, passive, active, lam, it, mdp)
    raise OracleFailure(f"value iteration did not converge in {max_iter} iterations at subsidy {lam}")


def _bracket(mdp: TruncatedArmMdp):
    n = mdp.arm.n_processes
    return float(mdp.reward[:, 0].min()) - 1.0, float(n) + 1.0


def indifference_subsidy(mdp: TruncatedArmMdp, state, tol: float = 1e-9) -> float:
    """Subsidy at which passive and active are equally good at ``state = (j, m)``.

    Starts from the bracket ``[min_j E[Y | j, 0] - 1, N + 1]`` and widens it
    geometrically if the sign change lies outside.
    """
    j, m = state
    n = mdp.arm.n_processes
    if not (0 <= j <= n and 0 <= m <= mdp.max_delay):
        raise DomainError(f"state {state} outside the truncated space")
    vi_tol = tol / 10.0
    lo, hi = _bracket(mdp)
    cache = {}

    def gap(lam, warm=None):
        table = value_iteration(mdp, lam, vi_tol, initial=warm)
        cache["last"] = table.values
        return table.gap(j, m)

    g_lo, g_hi = gap(lo), gap(hi, cache.get("last"))
    width = hi - lo
    for _ in range(_BRACKET_EXPANSIONS):
        if g_lo <= 0.0:
            break
        lo -= width
        width *= 2.0
        g_lo = gap(lo)
    for _ in range(_BRACKET_EXPANSIONS):
        if g_hi >= 0.0:
            break
        hi += width
        width *= 2.0
        g_hi = gap(hi)
    if g_lo > 0.0 or g_hi < 0.0:
        raise OracleFailure(f"no indifference subsidy bracketed for state {state}")
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid, cache.get("last"))
        if abs(g_mid) < tol * 1e-3:
            return mid
        if g_mid > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AffineFit:
    intercept: float
    slope: float
    residual: float
    closed_intercept: float
    closed_slope: float


def affine_check(table: ValueTable, state_m: int, lambda_star: float) -> AffineFit:
    """Least-squares fit of ``V(., m)`` against ``j`` at the indifference subsidy.

    The closed-form ``A(m)``, ``B(m)`` are reported alongside the fit.
    """
    if not math.isclose(table.subsidy, lambda_star, rel_tol=0.0, abs_tol=1e-9):
        raise DomainError("table was not computed at the given subsidy")
    mdp = table.mdp
    g = mdp.gamma
    col = table.values[:, state_m]
    js = np.arange(col.size, dtype=float)
    design = np.vstack([np.ones_like(js), js]).T
    (a_fit, b_fit), *_ = np.linalg.lstsq(design, col, rcond=None)
    residual = float(np.abs(design @ np.array([a_fit, b_fit]) - col).max())
    c0, d0 = mdp.intercept_slope(0)
    cm, dm = mdp.intercept_slope(state_m)
    denom = 1.0 - g * d0
    closed_b = dm / denom
    closed_a = g * c0 / ((1.0 - g) * denom) + cm / denom
    return AffineFit(float(a_fit), float(b_fit), residual, float(closed_a), float(closed_b))


def passive_set_sweep(mdp: TruncatedArmMdp, subsidies, tol: float = 1e-10, tie_tol: float = 1e-8) -> np.ndarray:
    """Boolean array ``[len(subsidies), N+1, M+1]``; True where passivity is optimal."""
    out = []
    warm = None
    for lam in sorted(subsidies):
        table = value_iteration(mdp, lam, tol, initial=warm)
        warm = table.values
        out.append(table.passive_values >= table.active_values - tie_tol)
    return np.array(out)


def crossing_violations(passive: np.ndarray, states=None):
    """States whose passive flag ever turns back off as the subsidy grows."""
    flips_back = (passive[:-1] & ~passive[1:]).any(axis=0)
    bad = [tuple(int(v) for v in s) for s in np.argwhere(flips_back)]
    if states is not None:
        wanted = set(map(tuple, states))
        bad = [s for s in bad if s in wanted]
    return bad


@dataclass(frozen=True)
class CertificationRow:
    j: int
    m: int
    gamma: float
    closed_form: float
    oracle: float

    @property
    def abs_diff(self) -> float:
        return abs(self.closed_form - self.oracle)


def certify(arm: FiniteArm, gammas, js=None, ms=range(11), max_delay: int | None = None,
            tol: float = 1e-9):
    """Compare the closed-form index against the oracle on a grid of states."""
    js = range(arm.n_processes + 1) if js is None else js
    max_delay = default_max_delay(arm) if max_delay is None else max_delay
    rows = []
    for gamma in gammas:
        mdp = TruncatedArmMdp(arm, max_delay, gamma)
        for j in js:
            for m in ms:
                closed = whittle_discrete(arm, BeliefState(j, m, max_count=arm.n_processes), gamma)
                try:
                    oracle = indifference_subsidy(mdp, (j, m), tol)
                except OracleFailure as exc:
                    raise OracleFailure(f"state (j={j}, m={m}, gamma={gamma}): {exc}") from exc
                rows.append(CertificationRow(int(j), int(m), float(gamma), closed, oracle))
    return rows
