"""Seeded random streams for reproducible Monte-Carlo sampling."""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, *key); the same key always yields the same draws"""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError(f"RNG seed and stream keys must be non-negative, got {(seed, *key)}")
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))

