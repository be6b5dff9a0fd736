"""Seeded random streams split from one 64-bit master seed.

Every consumer gets its own generator keyed by ``(role, index)`` through
:class:`numpy.random.SeedSequence` spawn keys, so adding or removing one
consumer never shifts another consumer's draws.
"""

from __future__ import annotations

import enum
import secrets

import numpy as np

SEED_BITS = 64


class Role(enum.IntEnum):
    SECRETS_ALICE = 1
    SECRETS_BOB = 2
    KEY = 3
    TP = 4
    QUANTUM = 5
    ATTACK = 6
    INPUTS = 7
    TRIALS = 8


def check_seed(seed: int) -> int:
    if not 0 <= seed < (1 << SEED_BITS):
        raise ValueError(f"seed must be an unsigned {SEED_BITS}-bit integer, got {seed}")
    return seed


def stream(seed: int, role: Role, index: int = 0) -> np.random.Generator:
    """Independent generator for one ``(role, index)`` consumer of ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(role), index))
    return np.random.Generator(np.random.PCG64(ss))


def fresh_seed() -> int:
    return secrets.randbits(SEED_BITS)
