"""Labeled random streams derived from a single master seed.

Every random draw in a run comes from ``stream(master, label, *keys)``. The
label is a stable string such as ``"topology/W"``; extra integer keys (replicate
index, neuron index) extend the spawn key. Swept hyperparameters (h, J, ...) are
deliberately *not* part of the key so that compared networks share connectivity,
input weights and noise.
"""
from __future__ import annotations

import hashlib

import numpy as np


def label_key(label: str) -> int:
    """Stable 64-bit integer for a label (independent of PYTHONHASHSEED)."""
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


def seed_sequence(master: int, label: str, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(label_key(label),) + tuple(int(k) for k in keys))


def stream(master: int, label: str, *keys: int) -> np.random.Generator:
    """PCG64 generator for a labeled stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, label, *keys)))


def counter_stream(master: int, label: str, *keys: int) -> np.random.Generator:
    """Philox (counter-based) generator; used for per-neuron noise."""
    return np.random.Generator(np.random.Philox(seed_sequence(master, label, *keys)))


def int_seed(master: int, label: str, *keys: int) -> int:
    """A plain 64-bit seed for APIs that take an integer."""
    return int(seed_sequence(master, label, *keys).generate_state(1, np.uint64)[0])
