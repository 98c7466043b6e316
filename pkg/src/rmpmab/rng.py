"""Keyed, counter-based random streams.

Every stream is a Philox generator seeded by ``SeedSequence(seed, spawn_key=key)``,
so any (domain, trial, arm, ...) key maps to the same independent stream no
matter how many other streams exist or in which order they are created.
"""
from __future__ import annotations

import zlib

import numpy as np

ENVIRONMENT = 0
POLICY = 1
PARAMETERS = 2
SYNTHETIC = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def label_key(label: str) -> int:
    """Stable integer key for a policy label (independent of list order)."""
    return zlib.crc32(label.encode("utf-8"))


def environment_stream(seed: int, trial: int, arm: int) -> np.random.Generator:
    return stream(seed, ENVIRONMENT, trial, arm)


def policy_stream(seed: int, trial: int, label: str) -> np.random.Generator:
    return stream(seed, POLICY, trial, label_key(label))


def parameter_stream(seed: int, trial: int) -> np.random.Generator:
    return stream(seed, PARAMETERS, trial)
