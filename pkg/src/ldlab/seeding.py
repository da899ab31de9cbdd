"""Labelled seed derivation.

Every random stream in the package is derived from a root seed plus a tuple of
labels, so results never depend on call order or scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label: int | str) -> int:
    if isinstance(label, (bool, np.bool_)):
        return int(label)
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"seed labels must be non-negative, got {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed_sequence(seed: int, *labels: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence([_label_to_int(seed), *(_label_to_int(x) for x in labels)])


def derive_rng(seed: int, *labels: int | str) -> np.random.Generator:
    """Return a generator keyed by ``(seed, *labels)``."""
    return np.random.default_rng(derive_seed_sequence(seed, *labels))


def round_half_up(value: float) -> int:
    """Round to nearest integer, halves away from zero (for non-negative input)."""
    return int(np.floor(value + 0.5 + 1e-12))


def derive_seed(seed: int, *labels: int | str) -> int:
    """A 32-bit integer seed keyed by ``(seed, *labels)``, for APIs taking ints."""
    return int(derive_seed_sequence(seed, *labels).generate_state(1)[0])
