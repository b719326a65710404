"""
Seed-splitting contract.

Every stochastic stage takes an explicit integer seed. Independent work
items (tomography settings, Monte Carlo samples, optimizer starts) draw
their own sub-seeds from ``numpy.random.SeedSequence`` so that parallel and
serial execution consume identical random streams.
"""

from typing import List

import numpy as np

from ..exceptions import ValidationError

MAX_SEED = 2 ** 64 - 1


def validate_seed(seed, parameter: str = "seed") -> int:
    """Return ``seed`` as an int in [0, 2**64)."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(parameter, seed, "integer in [0, 2**64)")
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise ValidationError(parameter, seed, "integer in [0, 2**64)")
    return seed


def split_seed(seed: int, count: int) -> List[int]:
    """
    Derive ``count`` independent sub-seeds from one parent seed.

    Args:
        seed: Parent seed
        count: Number of children

    Returns:
        List of 64-bit integer seeds, stable for a given (seed, count)
    """
    seed = validate_seed(seed)
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(validate_seed(seed))
