"""Maximum-likelihood fits of (alpha, beta) from activity traces."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .errors import BoundaryEstimateWarning, DomainError, InestimableParameterError
from .markov import ChainParams

CLAMP = 1e-6
GRID_SIZE = 50
# Above this mean number of survivor terms per pair the likelihood sums only a window around each mode.
WINDOW_THRESHOLD = 120


@dataclass(frozen=True)
class ActivityTrace:
    """Aggregate active counts of one arm on increasing timestamps."""

    arm_id: int
    timestamps: np.ndarray
    counts: np.ndarray
    n_processes: int

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        counts = np.asarray(self.counts)
        if ts.ndim != 1 or ts.shape != counts.shape:
            raise DomainError("timestamps and counts must be 1-D arrays of equal length")
        if np.any(np.diff(ts) <= 0):
            raise DomainError("timestamps must be strictly increasing")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise DomainError("counts must be integers")
        counts = counts.astype(np.int64)
        if counts.size and (counts.min() < 0 or counts.max() > self.n_processes):
            raise DomainError(f"counts must lie in [0, {self.n_processes}]")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(cls, counts, n_processes: int, arm_id: int = 1) -> "ActivityTrace":
        counts = np.asarray(counts)
        return cls(arm_id, np.arange(counts.size, dtype=float), counts, n_processes)

    def __len__(self):
        return self.counts.size


@dataclass(frozen=True)
class CountFit:
    params: ChainParams
    loglik: float
    n_points: int


def _clamp(x):
    return float(min(max(x, CLAMP), 1.0 - CLAMP))


def mle_from_bits(bits, dt_uniform: bool = True) -> ChainParams:
    """Closed-form transition-count estimator on a ``(T, N)`` bit matrix.

    ``alpha_hat = #(0->1) / #(steps starting in 0)`` and likewise for ``beta_hat``.
    """
    if not dt_uniform:
        raise DomainError("transition counting needs a uniform time grid")
    bits = np.asarray(bits)
    if bits.ndim == 1:
        bits = bits[:, None]
    if bits.ndim != 2 or bits.shape[0] < 2:
        raise DomainError("need a (T, N) bit matrix with at least two time points")
    if not np.isin(bits, (0, 1)).all():
        raise DomainError("bit matrix entries must be 0 or 1")
    bits = bits.astype(bool)
    prev, nxt = bits[:-1], bits[1:]
    from_zero = int((~prev).sum())
    from_one = int(prev.sum())
    if from_zero == 0:
        raise InestimableParameterError(0, "state 0 is never occupied before the last step; alpha is inestimable")
    if from_one == 0:
        raise InestimableParameterError(1, "state 1 is never occupied before the last step; beta is inestimable")
    alpha = int((~prev & nxt).sum()) / from_zero
    beta = int((prev & ~nxt).sum()) / from_one
    return ChainParams(_clamp(alpha), _clamp(beta))


class PairLikelihood:
    """Exact log-likelihood of one-step count transitions.

    ``P(y' | y) = sum_s C(y,s)(1-b)^s b^(y-s) C(N-y, y'-s) a^(y'-s) (1-a)^(N-y-y'+s)``
    where ``s`` counts surviving actives. Terms are precomputed per distinct
    pair so each evaluation is a handful of vector operations.
    """

    def __init__(self, counts, n_processes: int):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size < 2:
            raise DomainError("need at least two points")
        N = int(n_processes)
        pairs, weight = np.unique(np.column_stack([counts[:-1], counts[1:]]), axis=0, return_counts=True)
        y, yn = pairs[:, 0], pairs[:, 1]
        lo = np.maximum(0, yn - (N - y))
        hi = np.minimum(y, yn)
        sizes = hi - lo + 1
        group = np.repeat(np.arange(len(pairs)), sizes)
        s = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes) + np.repeat(lo, sizes)
        yg, yng = y[group], yn[group]

        def lnc(n, k):
            return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)

        self.const = lnc(yg, s) + lnc(N - yg, yng - s)
        self.survive = s.astype(float)
        self.leave = (yg - s).astype(float)
        self.arrive = (yng - s).astype(float)
        self.idle = (N - yg - yng + s).astype(float)
        self.sizes = sizes
        self.y, self.yn = y.astype(float), yn.astype(float)
        self.gap = (N - y - yn).astype(float)
        self.lo, self.hi = lo, hi
        self.windowed = self.sizes.mean() > WINDOW_THRESHOLD
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.weight = weight.astype(float)
        self.n_points = int(counts.size - 1)

    def _window(self, alpha, beta):
        """Flat term indices within about ten standard deviations of each pair's mode.

        Each pair's terms are log-concave in ``s``, so terms beyond the window
        are below ``exp(-45)`` of the peak and are dropped.
        """
        c1, c2 = (1.0 - beta) * (1.0 - alpha), alpha * beta
        y, yn, d = self.y, self.yn, self.gap
        # t(s+1)/t(s) = 1 solves c1 (y-s)(yn-s) = c2 (s+1)(d+s+1)
        qa = c1 - c2
        qb = -(c1 * (y + yn) + c2 * (d + 2.0))
        qc = c1 * y * yn - c2 * (d + 1.0)
        disc = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
        q = -0.5 * (qb - disc)  # qb < 0, so both roots follow without cancellation
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / qa
            r2 = qc / q
        inside = (r2 >= self.lo - 1) & (r2 <= self.hi + 1)
        mode = np.clip(np.where(inside | ~np.isfinite(r1), r2, r1), self.lo, self.hi)
        curv = 1.0 / (y - mode + 1.0) + 1.0 / (yn - mode + 1.0) + 1.0 / (mode + 1.0) + 1.0 / (d + mode + 1.0)
        half = np.ceil(10.0 / np.sqrt(curv)).astype(np.int64) + 5
        width = int(half.max())
        offsets = np.arange(-width, width + 1)
        s = np.rint(mode).astype(np.int64)[:, None] + offsets[None, :]
        mask = (np.abs(offsets)[None, :] <= half[:, None]) & (s >= self.lo[:, None]) & (s <= self.hi[:, None])
        idx = np.where(mask, self.starts[:, None] + s - self.lo[:, None], 0)
        return idx, mask

    def _terms(self, alpha, beta, idx=None):
        if idx is None:
            sv, lv, av, iv, cv = self.survive, self.leave, self.arrive, self.idle, self.const
        else:
            sv, lv, av, iv, cv = self.survive[idx], self.leave[idx], self.arrive[idx], self.idle[idx], self.const[idx]
        return cv + sv * np.log1p(-beta) + lv * np.log(beta) + av * np.log(alpha) + iv * np.log1p(-alpha)

    def loglik(self, alpha: float, beta: float) -> float:
        if not self.windowed:
            return self.loglik_exact(alpha, beta)
        idx, mask = self._window(alpha, beta)
        t = np.where(mask, self._terms(alpha, beta, idx), -np.inf)
        m = t.max(axis=1)
        return float(self.weight @ (m + np.log(np.exp(t - m[:, None]).sum(axis=1))))

    def loglik_exact(self, alpha: float, beta: float) -> float:
        """Sum over every term; slower reference for :meth:`loglik`."""
        t = self._terms(alpha, beta)
        m = np.maximum.reduceat(t, self.starts)
        z = np.add.reduceat(np.exp(t - np.repeat(m, self.sizes)), self.starts)
        return float(self.weight @ (m + np.log(z)))

    def loglik_and_grad(self, alpha: float, beta: float):
        if self.windowed:
            idx, mask = self._window(alpha, beta)
            t = np.where(mask, self._terms(alpha, beta, idx), -np.inf)
            m = t.max(axis=1)
            e = np.exp(t - m[:, None])
            z = e.sum(axis=1)
            w = e / z[:, None] * self.weight[:, None]
            sv, lv, av, iv = self.survive[idx], self.leave[idx], self.arrive[idx], self.idle[idx]
        else:
            t = self._terms(alpha, beta)
            m = np.maximum.reduceat(t, self.starts)
            e = np.exp(t - np.repeat(m, self.sizes))
            z = np.add.reduceat(e, self.starts)
            w = e * np.repeat(self.weight / z, self.sizes)
            sv, lv, av, iv = self.survive, self.leave, self.arrive, self.idle
        da = np.sum(w * (av / alpha - iv / (1.0 - alpha)))
        db = np.sum(w * (lv / beta - sv / (1.0 - beta)))
        return float(self.weight @ (m + np.log(z))), np.array([da, db])

    def grid(self, alphas, betas) -> np.ndarray:
        out = np.empty((len(alphas), len(betas)))
        for i, a in enumerate(alphas):
            for k, b in enumerate(betas):
                out[i, k] = self.loglik(a, b)
        return out


def mle_from_counts(trace: ActivityTrace, init: ChainParams | None = None) -> CountFit:
    """Numerical MLE from aggregate counts: 50x50 log grid, then bounded L-BFGS-B."""
    if len(trace) < 2:
        raise DomainError("need at least two points")
    lik = PairLikelihood(trace.counts, trace.n_processes)
    axis = np.geomspace(CLAMP, 1.0 - CLAMP, GRID_SIZE)
    table = lik.grid(axis, axis)
    i, k = np.unravel_index(np.argmax(table), table.shape)
    start, best = np.array([axis[i], axis[k]]), table[i, k]
    if init is not None:
        guess = lik.loglik(init.alpha, init.beta)
        if guess > best:
            start, best = np.array([init.alpha, init.beta]), guess

    def neg(x):
        value, grad = lik.loglik_and_grad(x[0], x[1])
        return -value, -grad

    res = minimize(neg, start, jac=True, method="L-BFGS-B", bounds=[(CLAMP, 1.0 - CLAMP)] * 2)
    x, value = (res.x, -res.fun) if np.isfinite(res.fun) and -res.fun >= best else (start, best)
    alpha, beta = _clamp(x[0]), _clamp(x[1])
    value = lik.loglik(alpha, beta)
    c = trace.counts
    if np.all(c == 0) or np.all(c == trace.n_processes):
        warnings.warn(f"arm {trace.arm_id}: trace is constant at {int(c[0])}; estimate sits on the clamp bound",
                      BoundaryEstimateWarning, stacklevel=2)
    return CountFit(ChainParams(alpha, beta), value, lik.n_points)


def parameters_csv(rows) -> str:
    """``rows`` are ``(arm_id, CountFit)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm_id", "alpha_hat", "beta_hat", "loglik", "n_points"])
    for arm_id, fit in rows:
        w.writerow([arm_id, repr(fit.params.alpha), repr(fit.params.beta), repr(fit.loglik), fit.n_points])
    return buf.getvalue()
