"""
Named random streams.

Every stage draws its randomness from a stream derived from one master seed
and a stream name, so stages can be re-run in isolation and still see the
same numbers.
"""
import zlib

import numpy as np


def stream_seed(master_seed, name, *keys):
    """
    Build the SeedSequence for a named stream.

    Args:
        master_seed (int): Experiment master seed (non-negative)
        name (str): Stream name, e.g. "dataset" or "train"
        *keys (int): Extra non-negative integers (run seed, index, ...)

    Returns:
        numpy.random.SeedSequence: Seed sequence unique to (master, name, keys)
    """
    if master_seed < 0:
        raise ValueError("Seeds must be non-negative.")
    entropy = [int(master_seed), zlib.crc32(name.encode("utf-8"))]
    entropy.extend(int(k) for k in keys)
    return np.random.SeedSequence(entropy)


def stream(master_seed, name, *keys):
    """Return a numpy Generator for the named stream."""
    return np.random.default_rng(stream_seed(master_seed, name, *keys))
