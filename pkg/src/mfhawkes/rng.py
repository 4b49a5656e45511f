"""Reproducible random sub-streams.

Every stream is a Philox (counter-based) generator keyed by the root seed and
a tuple of small integers, e.g. ``(check, N, replica, purpose)``.  A replica's
draws therefore never depend on how many other replicas exist or on the order
in which they run.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    SIGNS = 0
    ARRIVALS = 1
    MARKS = 2
    ACCEPT = 3
    NOISE = 4
    W = 5
    MISC = 6


def stream(root_seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


class SimStreams:
    """The three streams that drive one thinning run.

    Candidate inter-arrival gaps, node marks and acceptance uniforms each get
    their own generator, so two simulators consuming one draw of each per
    candidate see identical randomness whatever their chunking.
    """

    def __init__(self, arrivals: np.random.Generator, marks: np.random.Generator,
                 accept: np.random.Generator):
        self.arrivals = arrivals
        self.marks = marks
        self.accept = accept

    @classmethod
    def from_key(cls, root_seed: int, *key: int) -> "SimStreams":
        return cls(stream(root_seed, *key, Purpose.ARRIVALS),
                   stream(root_seed, *key, Purpose.MARKS),
                   stream(root_seed, *key, Purpose.ACCEPT))
