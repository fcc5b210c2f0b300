"""Deterministic random substreams.

Every rollout, oracle query batch and episode draws from its own generator,
keyed by integers, so parallel and sequential execution see identical
random numbers.
"""
import numpy as np


def substream(seed, *keys):
    """Generator for the substream ``keys`` of the master ``seed``."""
    keys = tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=keys))


# purpose tags used as the first spawn key
ROLLOUT = 1
ORACLE = 2
INIT = 3
VALIDATION = 4
CORPUS = 5
ENV = 6
