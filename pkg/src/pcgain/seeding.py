"""Deterministic random-stream splitting.

Every random draw in the package descends from one integer root seed. A child
stream is addressed by a path of labels, e.g. ``("mask", 0.5, 3)`` for the
mask of repeat 3 at rate 0.5. Labels are folded into a numpy ``SeedSequence``
spawn key (strings via CRC32, floats via their repr), so streams are
independent of each other and of the order in which they are requested.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: object) -> int:
    if isinstance(label, (bool, np.bool_)):
        return int(label)
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    return zlib.crc32(repr(label).encode()) | (1 << 32)


def derive_seed(root: int, *path: object) -> int:
    """Return a 63-bit integer seed for the stream at ``path`` under ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(_label_key(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def rng_for(root: int, *path: object) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(root), spawn_key=tuple(_label_key(p) for p in path)))
