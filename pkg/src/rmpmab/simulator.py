"""Ground-truth environments, the decision loop and Monte Carlo aggregation.

Environment randomness is keyed by (seed, trial, arm) and policy randomness by
(seed, trial, policy label), so every policy in a trial faces the same latent
sample path and adding a policy never perturbs another one.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .belief import BeliefTable, Regime, ThompsonBelief
from .errors import ConfigError, DomainError, InvalidDiscretizationError, InvalidParameterError
from .markov import ChainParams, RateParams, discretize_rates, qm_pm
from .policies import ArmSet, ContinuousLimitArm, FiniteArm, PolicySpec, StatsTable, select

SAMPLER_MODES = ("heterogeneous", "homogeneous", "fixed")
SAMPLER_SCALES = ("probability", "vanishing")
INIT_MODES = ("stationary", "uniform-random", "fixed-state")
LATENT_MODES = ("auto", "bits", "counts")
# Above this many processes per arm the latent state is stepped as an aggregate count.
AUTO_BITS_LIMIT = 2000
_TIME_CHUNK = 256


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ParamSampler:
    """Per-trial arm parameters.

    ``heterogeneous`` draws ``a_k ~ U(0,1)`` and ``b_k ~ U(a_k, 1)`` for every
    arm, ``homogeneous`` draws one pair per trial shared by all arms and
    ``fixed`` uses ``alpha``/``beta`` as given (one value or one per arm).
    With ``scale="vanishing"`` the first draw is an aggregate activation
    ``alpha_bar`` and each process activates with ``alpha_bar / N``.
    In the continuous regime the pair is read as rates ``(alpha_bar, beta_bar)``.
    """

    mode: str = "heterogeneous"
    scale: str = "probability"
    alpha: tuple = ()
    beta: tuple = ()

    def __post_init__(self):
        if self.mode not in SAMPLER_MODES:
            raise InvalidParameterError(f"sampler mode must be one of {SAMPLER_MODES}, got {self.mode!r}")
        if self.scale not in SAMPLER_SCALES:
            raise InvalidParameterError(f"sampler scale must be one of {SAMPLER_SCALES}, got {self.scale!r}")
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if self.mode == "fixed":
            if not self.alpha or not self.beta:
                raise InvalidParameterError("fixed sampler needs alpha and beta")

    def sample(self, n_arms: int, rng: np.random.Generator) -> np.ndarray:
        """Return an ``(n_arms, 2)`` array of raw ``(a, b)`` pairs."""
        if self.mode == "fixed":
            a = np.broadcast_to(np.asarray(self.alpha), (n_arms,)) if len(self.alpha) in (1, n_arms) else None
            b = np.broadcast_to(np.asarray(self.beta), (n_arms,)) if len(self.beta) in (1, n_arms) else None
            if a is None or b is None:
                raise InvalidParameterError(f"fixed sampler needs 1 or {n_arms} values for alpha and beta")
            return np.column_stack([a, b]).astype(float)
        draws = n_arms if self.mode == "heterogeneous" else 1
        a = _open_uniform(rng, np.zeros(draws), np.ones(draws))
        b = _open_uniform(rng, a, np.ones(draws))
        pairs = np.column_stack([a, b])
        return np.repeat(pairs, n_arms, axis=0) if self.mode == "homogeneous" else pairs


def _open_uniform(rng, low, high):
    # Redraw the measure-zero endpoints so the chain constraints stay strict.
    out = rng.uniform(low, high)
    bad = (out <= low) | (out >= high)
    while bad.any():
        out[bad] = rng.uniform(low[bad], high[bad])
        bad = (out <= low) | (out >= high)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a Monte Carlo experiment.

    ``horizon`` counts decision epochs. In the continuous regime the latent
    chains are discretised at ``dt`` and epochs are ``epoch_spacing`` apart.
    """

    name: str = "experiment"
    n_arms: int = 10
    n_processes: int = 50
    horizon: int = 1000
    trials: int = 20
    seed: int = 0
    sampler: ParamSampler = field(default_factory=ParamSampler)
    init: str = "stationary"
    init_count: int = 0
    regime: str = "discrete"
    dt: float = 1.0
    epoch_spacing: float = 1.0
    latent: str = "auto"
    policies: tuple = (PolicySpec("whittle"),)

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        self.validate()

    def validate(self):
        def bad(key, msg):
            raise ConfigError(msg, key=key)

        if not isinstance(self.n_arms, (int, np.integer)) or self.n_arms < 1:
            bad("arms", f"number of arms must be a positive integer, got {self.n_arms!r}")
        if not isinstance(self.n_processes, (int, np.integer)) or self.n_processes < 1:
            bad("processes", f"processes per arm must be a positive integer, got {self.n_processes!r}")
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            bad("trials", f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            bad("horizon", f"horizon must be a positive integer, got {self.horizon!r}")
        if not 0 <= self.seed < 2**64:
            bad("seed", f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.init not in INIT_MODES:
            bad("init", f"init must be one of {', '.join(INIT_MODES)}, got {self.init!r}")
        if self.init == "fixed-state" and not 0 <= self.init_count <= self.n_processes:
            bad("init_count", f"init_count must lie in [0, {self.n_processes}]")
        if self.regime not in ("discrete", "continuous"):
            bad("regime", f"regime must be discrete or continuous, got {self.regime!r}")
        if self.latent not in LATENT_MODES:
            bad("latent", f"latent must be one of {', '.join(LATENT_MODES)}, got {self.latent!r}")
        if not self.policies:
            bad("policies", "at least one policy is required")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            bad("policies", "policy labels must be unique")
        for p in self.policies:
            if p.L > self.n_arms:
                bad("L", f"policy {p.label!r} selects L={p.L} of only {self.n_arms} arms")
            if self.horizon < -(-self.n_arms // p.L):
                bad("horizon", f"horizon {self.horizon} is shorter than the warm-up of policy {p.label!r}")
            if p.policy_id == "whittle-limit-continuous" and self.regime != "continuous":
                bad("policies", f"policy {p.label!r} needs the continuous regime")
        if self.regime == "continuous":
            substeps(self.dt, self.epoch_spacing)

    @property
    def use_bits(self) -> bool:
        if self.latent == "auto":
            return self.n_processes <= AUTO_BITS_LIMIT
        return self.latent == "bits"

    def policy(self, label: str) -> PolicySpec:
        for p in self.policies:
            if p.label == label:
                return p
        raise KeyError(label)


def substeps(dt: float, epoch_spacing: float) -> int:
    """Number of latent steps of length ``dt`` between decision epochs."""
    if not dt > 0.0 or not epoch_spacing > 0.0:
        raise InvalidDiscretizationError("dt and epoch spacing must be positive")
    s = round(epoch_spacing / dt)
    if s < 1 or abs(epoch_spacing / dt - s) > 1e-9 * max(s, 1):
        raise InvalidDiscretizationError(f"epoch spacing {epoch_spacing!r} is not an integer multiple of dt {dt!r}")
    return int(s)


# -- environments -------------------------------------------------------------

@dataclass
class Environment:
    """One trial's latent sample path, reduced to the active counts ``counts[h, k]``."""

    counts: np.ndarray
    finite_arms: list
    continuous_arms: list | None = None

    @property
    def horizon(self) -> int:
        return self.counts.shape[0]

    def arms_for(self, policy: PolicySpec) -> list:
        if policy.policy_id == "whittle-limit-continuous":
            if self.continuous_arms is None:
                raise DomainError("continuous-limit arms exist only in the continuous regime")
            return self.continuous_arms
        return self.finite_arms


def trial_arms(config: ExperimentConfig, trial: int):
    """Epoch-level finite arms and, in the continuous regime, the rate arms."""
    raw = config.sampler.sample(config.n_arms, rngmod.parameter_stream(config.seed, trial))
    N = config.n_processes
    finite, continuous = [], None
    if config.regime == "continuous":
        continuous = []
        s = substeps(config.dt, config.epoch_spacing)
        for k, (a, b) in enumerate(raw):
            rates = RateParams(float(a), float(b))
            chain = discretize_rates(rates, N, config.dt)
            q, p = qm_pm(chain, s)
            # s steps of the fine chain form one two-state chain at epoch resolution
            finite.append(FiniteArm(ChainParams(float(p), float(1.0 - q)), N, k + 1))
            continuous.append(ContinuousLimitArm(rates, k + 1))
    else:
        for k, (a, b) in enumerate(raw):
            alpha = a / N if config.sampler.scale == "vanishing" else a
            finite.append(FiniteArm(ChainParams(float(alpha), float(b)), N, k + 1))
    return finite, continuous


def generate_environment(config: ExperimentConfig, trial: int) -> Environment:
    finite, continuous = trial_arms(config, trial)
    streams = [rngmod.environment_stream(config.seed, trial, k) for k in range(config.n_arms)]
    alpha = np.array([a.params.alpha for a in finite])
    beta = np.array([a.params.beta for a in finite])
    if config.use_bits:
        counts = _bits_path(config, streams, alpha, beta)
    else:
        counts = _counts_path(config, streams, alpha, beta)
    return Environment(counts, finite, continuous)


def _initial_probability(config, alpha, beta):
    if config.init == "stationary":
        return alpha / (alpha + beta)
    return np.full(alpha.shape, 0.5)


def _bits_path(config, streams, alpha, beta):
    T, K, N = config.horizon, config.n_arms, config.n_processes
    if config.init == "fixed-state":
        state = np.zeros((K, N), dtype=bool)
        state[:, :config.init_count] = True
        for g in streams:
            g.random(N)  # keep the stream layout identical across init modes
    else:
        p0 = _initial_probability(config, alpha, beta)
        state = np.stack([g.random(N) < p0[k] for k, g in enumerate(streams)])
    counts = np.empty((T, K), dtype=np.int64)
    counts[0] = state.sum(axis=1)
    a, b = alpha[:, None], beta[:, None]
    for start in range(1, T, _TIME_CHUNK):
        stop = min(start + _TIME_CHUNK, T)
        block = np.stack([g.random((stop - start, N)) for g in streams], axis=1)
        for i in range(stop - start):
            u = block[i]
            state = np.where(state, u >= b, u < a)
            counts[start + i] = state.sum(axis=1)
    return counts


def _counts_path(config, streams, alpha, beta):
    T, K, N = config.horizon, config.n_arms, config.n_processes
    counts = np.empty((T, K), dtype=np.int64)
    p0 = _initial_probability(config, alpha, beta)
    for k, g in enumerate(streams):
        y = config.init_count if config.init == "fixed-state" else int(g.binomial(N, p0[k]))
        stay, arrive = 1.0 - beta[k], alpha[k]
        col = counts[:, k]
        col[0] = y
        binomial = g.binomial
        for h in range(1, T):
            y = binomial(y, stay) + binomial(N - y, arrive)
            col[h] = y
    return counts


# -- the decision loop --------------------------------------------------------

@dataclass
class RegretTrace:
    """Per-step genie reward, policy reward and the chosen arm ids of one run."""

    genie_reward: np.ndarray
    policy_reward: np.ndarray
    selections: np.ndarray

    @property
    def regret(self) -> np.ndarray:
        return self.genie_reward - self.policy_reward

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def final_regret(self) -> int:
        return int(self.regret.sum())


def genie_reward(counts: np.ndarray, L: int = 1) -> np.ndarray:
    counts = np.asarray(counts)
    if L == 1:
        return counts.max(axis=1)
    return np.sort(counts, axis=1)[:, -L:].sum(axis=1)


def run_policy_on_counts(counts, arms, policy: PolicySpec, rng: np.random.Generator | None = None,
                         epoch_spacing: float = 1.0) -> RegretTrace:
    """Play ``policy`` against a fixed matrix of active counts ``counts[h, k]``.

    The policy only sees the counts of the arms it selects. This loop is shared
    by the simulator and by offline replay, so both score decisions identically.
    """
    counts = np.asarray(counts, dtype=np.int64)
    T, K = counts.shape
    arm_set = arms if isinstance(arms, ArmSet) else ArmSet(arms)
    if len(arm_set) != K:
        raise DomainError(f"{len(arm_set)} arms for a {K}-column count matrix")
    beliefs = BeliefTable(K, arm_set.regime, arm_set.max_counts)
    step_dt = 1 if arm_set.regime is Regime.DISCRETE else float(epoch_spacing)
    stats = StatsTable(K)
    thompson = None
    if policy.policy_id == "thompson":
        if arm_set.kind is not FiniteArm:
            raise DomainError("thompson sampling needs finite arms")
        thompson = ThompsonBelief([a.params for a in arm_set.arms], arm_set.n)
    L = policy.L
    reward = np.empty(T, dtype=np.int64)
    chosen = np.empty((T, L), dtype=np.int64)
    for h in range(T):
        if h:
            beliefs.age(step_dt)
            if thompson is not None:
                thompson.propagate()
        row = counts[h]
        decision = select(policy, arm_set, beliefs, stats, h, rng, thompson, row)
        total = 0
        for i, p in enumerate(decision.positions):
            y = int(row[p])
            total += y
            beliefs.observe(p, y)
            stats.record(p, y)
            if thompson is not None:
                thompson.collapse(p, y)
            chosen[h, i] = arm_set.ids[p]
        reward[h] = total
    return RegretTrace(genie_reward(counts, L).astype(np.int64), reward, chosen)


def run_trial(config: ExperimentConfig, policy, trial_index: int, environment: Environment | None = None) -> RegretTrace:
    spec = config.policy(policy) if isinstance(policy, str) else policy
    env = environment if environment is not None else generate_environment(config, trial_index)
    g = rngmod.policy_stream(config.seed, trial_index, spec.label)
    return run_policy_on_counts(env.counts, env.arms_for(spec), spec, g, config.epoch_spacing)


def _trial_worker(args):
    config, trial, keep_env = args
    env = generate_environment(config, trial)
    traces = {p.label: run_trial(config, p, trial, env) for p in config.policies}
    return traces, (env if keep_env else None)


# -- aggregation ----------------------------------------------------------------

@dataclass
class AggregateTrace:
    """Mean cumulative regret and its standard error across trials."""

    label: str
    mean_cum_regret: np.ndarray
    stderr: np.ndarray
    n_trials: int
    final_regrets: np.ndarray
    trials: list | None = None

    @property
    def final_mean(self) -> float:
        return float(self.mean_cum_regret[-1])

    @property
    def final_stderr(self) -> float:
        return float(self.stderr[-1])


def aggregate(label: str, traces, keep: bool = False) -> AggregateTrace:
    traces = list(traces)
    cum = np.stack([t.cumulative_regret for t in traces]).astype(float)
    n = cum.shape[0]
    mean = cum.mean(axis=0)
    se = cum.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(cum.shape[1])
    return AggregateTrace(label, mean, se, n, cum[:, -1].copy(), traces if keep else None)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: dict
    environments: list | None = None

    def __getitem__(self, label) -> AggregateTrace:
        return self.traces[label]


def run_experiment(config: ExperimentConfig, threads: int = 1, keep_trials: bool = False,
                   keep_environments: bool = False) -> ExperimentResult:
    """Run every policy on every trial and aggregate per policy.

    Trials may run in worker processes; results are collected in trial order,
    so the output does not depend on ``threads``.
    """
    jobs = [(config, t, keep_environments) for t in range(config.trials)]
    if threads > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=min(threads, config.trials)) as pool:
            results = list(pool.map(_trial_worker, jobs))
    else:
        results = [_trial_worker(j) for j in jobs]
    traces = {
        p.label: aggregate(p.label, [r[0][p.label] for r in results], keep_trials)
        for p in config.policies
    }
    envs = [r[1] for r in results] if keep_environments else None
    return ExperimentResult(config, traces, envs)


def run_continuous(config: ExperimentConfig, dt: float, epoch_spacing: float, threads: int = 1,
                   keep_trials: bool = False) -> ExperimentResult:
    substeps(dt, epoch_spacing)
    return run_experiment(replace(config, regime="continuous", dt=dt, epoch_spacing=epoch_spacing),
                          threads, keep_trials)


def default_threads() -> int:
    return os.cpu_count() or 1


# -- CSV output ------------------------------------------------------------------

def regret_csv(trace: AggregateTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "mean_cum_regret", "stderr"])
    for h, (m, s) in enumerate(zip(trace.mean_cum_regret, trace.stderr)):
        w.writerow([h, repr(float(m)), repr(float(s))])
    return buf.getvalue()


def trial_csv(trace: RegretTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "genie_reward", "policy_reward", "cum_regret", "selected"])
    cum = trace.cumulative_regret
    for h in range(trace.genie_reward.size):
        w.writerow([h, int(trace.genie_reward[h]), int(trace.policy_reward[h]), int(cum[h]),
                    " ".join(str(int(a)) for a in trace.selections[h])])
    return buf.getvalue()


def write_results(result: ExperimentResult, out_dir: str, per_trial: bool = False) -> list:
    """Write ``{experiment}-{label}.csv`` per policy; return the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    name = result.config.name
    for label, trace in result.traces.items():
        path = os.path.join(out_dir, f"{name}-{label}.csv")
        _write_text(path, regret_csv(trace))
        written.append(path)
        if per_trial and trace.trials is not None:
            for t, tr in enumerate(trace.trials):
                path = os.path.join(out_dir, f"{name}-{label}-trial{t:04d}.csv")
                _write_text(path, trial_csv(tr))
                written.append(path)
    return written


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
