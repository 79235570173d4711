"""Deterministic RNG derivation from a master seed and integer key path."""

import numpy as np


def rng_for(seed, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...).

    The same (seed, key) always yields the same stream, so simulations
    keyed by replicate/transition/step indices are reproducible no matter
    how the work is scheduled. `seed` may be an int or a tuple whose
    first element is the master entropy and the rest extends the key.
    """
    if isinstance(seed, tuple):
        entropy, prefix = seed[0], tuple(seed[1:])
    else:
        entropy, prefix = seed, ()
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=prefix + tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
