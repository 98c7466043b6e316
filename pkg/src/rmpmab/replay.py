"""Offline policy evaluation on recorded count traces.

Trace CSV: header ``epoch,arm_id,count`` or ``epoch,arm_id,count,percent,n_processes``,
one row per (epoch, arm). When ``count`` is blank it is derived from
``percent`` of ``n_processes`` with round-half-to-even.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation

import numpy as np

from . import rng as rngmod
from .errors import DomainError, SchemaError
from .estimation import ActivityTrace
from .markov import ChainParams
from .policies import FiniteArm, PolicySpec
from .simulator import RegretTrace, run_policy_on_counts

SHORT_HEADER = ["epoch", "arm_id", "count"]
LONG_HEADER = ["epoch", "arm_id", "count", "percent", "n_processes"]


@dataclass(frozen=True)
class ReplayDataset:
    """Counts ``counts[e, k]`` for epochs ``epochs[e]`` and arms ``arm_ids[k]``."""

    epochs: np.ndarray
    arm_ids: tuple
    counts: np.ndarray
    n_processes: tuple | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.epochs), len(self.arm_ids)):
            raise DomainError("counts must be shaped (epochs, arms)")
        if self.n_processes is not None:
            n = np.asarray(self.n_processes)
            if n.shape != (len(self.arm_ids),):
                raise DomainError("need one process count per arm")
            if np.any(counts > n[None, :]) or np.any(counts < 0):
                raise DomainError("counts must lie in [0, n_processes]")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "epochs", np.asarray(self.epochs, dtype=np.int64))
        object.__setattr__(self, "arm_ids", tuple(int(a) for a in self.arm_ids))

    @property
    def n_arms(self) -> int:
        return len(self.arm_ids)

    def window(self, start: int, stop: int) -> "ReplayDataset":
        keep = (self.epochs >= start) & (self.epochs < stop)
        return ReplayDataset(self.epochs[keep], self.arm_ids, self.counts[keep], self.n_processes, dict(self.metadata))

    def trace(self, k: int) -> ActivityTrace:
        if self.n_processes is None:
            raise DomainError("dataset does not declare process counts")
        return ActivityTrace(self.arm_ids[k], self.epochs.astype(float), self.counts[:, k], int(self.n_processes[k]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.n_processes is None:
            w.writerow(SHORT_HEADER)
            for e, row in zip(self.epochs, self.counts):
                for a, c in zip(self.arm_ids, row):
                    w.writerow([int(e), a, int(c)])
        else:
            w.writerow(LONG_HEADER)
            for e, row in zip(self.epochs, self.counts):
                for a, c, n in zip(self.arm_ids, row, self.n_processes):
                    w.writerow([int(e), a, int(c), "", int(n)])
        return buf.getvalue()


def percent_to_count(percent: str, n_processes: int) -> int:
    """``percent`` % of ``n_processes`` rounded half-to-even, computed in decimal arithmetic."""
    value = Decimal(percent) * n_processes / 100
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def _int_field(text, row, column, minimum=None):
    try:
        value = int(text)
    except ValueError:
        raise SchemaError(f"expected an integer, got {text!r}", row, column) from None
    if minimum is not None and value < minimum:
        raise SchemaError(f"value {value} is below {minimum}", row, column)
    return value


def parse_dataset(text: str, epoch_range=None, n_processes=None, source: str = "<string>") -> ReplayDataset:
    """Parse trace CSV text.

    ``epoch_range=(start, stop)`` keeps only epochs in ``[start, stop)``; rows
    outside are validated for shape but their values are never stored.
    ``n_processes`` supplies per-arm process counts for the short header
    (an int, or a mapping from arm id).
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaError("empty trace file: expected a header line", row=1)
    header = lines[0].strip().split(",")
    if header not in (SHORT_HEADER, LONG_HEADER):
        raise SchemaError(f"header must be {','.join(SHORT_HEADER)} or {','.join(LONG_HEADER)}, got {lines[0]!r}", row=1)
    long = header == LONG_HEADER
    cells, declared = {}, {}
    for lineno, fields in enumerate(csv.reader(lines[1:]), start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        epoch = _int_field(fields[0], lineno, "epoch", 0)
        arm = _int_field(fields[1], lineno, "arm_id")
        inside = epoch_range is None or epoch_range[0] <= epoch < epoch_range[1]
        if long and fields[4] != "":
            n = _int_field(fields[4], lineno, "n_processes", 1)
            if declared.setdefault(arm, n) != n:
                raise SchemaError(f"arm {arm} declares n_processes {n} after {declared[arm]}", lineno, "n_processes")
        if (epoch, arm) in cells:
            raise SchemaError(f"duplicate row for epoch {epoch}, arm {arm}", lineno)
        if not inside:
            cells[(epoch, arm)] = None
            continue
        if fields[2] != "":
            count = _int_field(fields[2], lineno, "count", 0)
        elif long and fields[3] != "":
            if arm not in declared:
                raise SchemaError("percent given without n_processes", lineno, "n_processes")
            try:
                pct = Decimal(fields[3])
            except InvalidOperation:
                raise SchemaError(f"expected a number, got {fields[3]!r}", lineno, "percent") from None
            if not 0 <= pct <= 100:
                raise SchemaError(f"percent {fields[3]} outside [0, 100]", lineno, "percent")
            count = percent_to_count(fields[3], declared[arm])
        else:
            raise SchemaError("row has neither count nor percent", lineno, "count")
        if arm in declared and count > declared[arm]:
            raise SchemaError(f"count {count} exceeds n_processes {declared[arm]}", lineno, "count")
        cells[(epoch, arm)] = count
    if not cells:
        raise SchemaError("trace file has a header but no rows", row=2)

    all_epochs = sorted({e for e, _ in cells})
    arms = sorted({a for _, a in cells})
    if all_epochs != list(range(all_epochs[0], all_epochs[-1] + 1)):
        gap = next(e for e in range(all_epochs[0], all_epochs[-1] + 1) if e not in set(all_epochs))
        raise SchemaError(f"missing epoch {gap}")
    for e in all_epochs:
        for a in arms:
            if (e, a) not in cells:
                raise SchemaError(f"missing row for epoch {e}, arm {a}")
    epochs = [e for e in all_epochs if epoch_range is None or epoch_range[0] <= e < epoch_range[1]]
    counts = np.array([[cells[(e, a)] for a in arms] for e in epochs], dtype=np.int64).reshape(len(epochs), len(arms))

    if long and declared:
        missing = [a for a in arms if a not in declared]
        if missing:
            raise SchemaError(f"arm {missing[0]} never declares n_processes", column="n_processes")
        n_proc = tuple(declared[a] for a in arms)
    elif n_processes is not None:
        n_proc = tuple(int(n_processes[a]) if isinstance(n_processes, dict) else int(n_processes) for a in arms)
    else:
        n_proc = None
    return ReplayDataset(np.array(epochs), tuple(arms), counts, n_proc, {"source": source})


def load_dataset(path, epoch_range=None, n_processes=None) -> ReplayDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_dataset(text, epoch_range, n_processes, source=str(path))


def write_dataset(dataset: ReplayDataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset.to_csv())


def dataset_from_counts(counts, n_processes, arm_ids=None, first_epoch: int = 0) -> ReplayDataset:
    counts = np.asarray(counts, dtype=np.int64)
    T, K = counts.shape
    arm_ids = tuple(range(1, K + 1)) if arm_ids is None else tuple(arm_ids)
    n = np.broadcast_to(np.asarray(n_processes), (K,))
    return ReplayDataset(np.arange(first_epoch, first_epoch + T), arm_ids, counts, tuple(int(x) for x in n))


def replay_policy(dataset: ReplayDataset, policy, params, gamma: float | None = None,
                  rng: np.random.Generator | None = None) -> RegretTrace:
    """Score ``policy`` on the recorded counts, revealing only selected arms."""
    spec = PolicySpec(policy) if isinstance(policy, str) else policy
    if gamma is not None:
        spec = PolicySpec(spec.policy_id, gamma, spec.epsilon, spec.c, spec.L, spec.label)
    params = list(params)
    if len(params) != dataset.n_arms:
        raise DomainError(f"{len(params)} parameter sets for {dataset.n_arms} arms")
    if dataset.n_processes is None:
        raise DomainError("dataset does not declare process counts")
    arms = [FiniteArm(p if isinstance(p, ChainParams) else ChainParams(*p), int(n), a)
            for p, n, a in zip(params, dataset.n_processes, dataset.arm_ids)]
    return run_policy_on_counts(dataset.counts, arms, spec, rng)


# -- synthetic stand-in dataset ---------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    n_arms: int = 96
    n_processes: int = 22500
    train_epochs: int = 30
    eval_epochs: int = 240
    beta_range: tuple = (0.05, 0.5)
    active_range: tuple = (0.01, 0.1)


def generate_synthetic(seed: int, spec: SyntheticSpec = SyntheticSpec()):
    """Plate-like trace: per arm ``beta ~ U(beta_range)``, stationary fraction ``~ U(active_range)``.

    Returns the dataset and the true per-arm ``ChainParams``.
    """
    g = rngmod.stream(seed, rngmod.SYNTHETIC)
    beta = g.uniform(*spec.beta_range, size=spec.n_arms)
    frac = g.uniform(*spec.active_range, size=spec.n_arms)
    alpha = frac * beta / (1.0 - frac)
    T = spec.train_epochs + spec.eval_epochs
    N = spec.n_processes
    counts = np.empty((T, spec.n_arms), dtype=np.int64)
    y = g.binomial(N, frac)
    counts[0] = y
    for h in range(1, T):
        y = g.binomial(y, 1.0 - beta) + g.binomial(N - y, alpha)
        counts[h] = y
    params = [ChainParams(float(a), float(b)) for a, b in zip(alpha, beta)]
    return dataset_from_counts(counts, N), params
