"""Named random streams derived from one master seed.

Each consumer (hallucination, shuffling, scheduled sampling, ...) gets its
own generator, so switching one feature on does not shift another's draws.
"""
import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8")), *extra])
