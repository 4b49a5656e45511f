"""Naive reference simulator, kept as a test oracle.

Recomputes the input field from the full history at every candidate, so it is
O(events**2) and works for any kernel without an ODE lift.  It draws one gap,
one mark and one acceptance uniform per candidate from the same streams as
:func:`mfhawkes.sim.simulate`, so under a shared seed both must return the
same events.
"""
from __future__ import annotations

import numpy as np

from .model import PopulationConfig
from .rng import SimStreams
from .sim import EventData


def simulate_naive(config: PopulationConfig, signs, streams: SimStreams) -> EventData:
    signs = np.asarray(signs, dtype=np.int8)
    n = config.n
    hbar = config.transfer.bound
    phi, h = config.kernel, config.transfer
    times: list[float] = []
    nodes: list[int] = []
    n_cand = 0
    if config.horizon > 0 and hbar > 0:
        rate = n * hbar
        t = 0.0
        while True:
            t = t + streams.arrivals.standard_exponential() / rate
            if t > config.horizon:
                break
            n_cand += 1
            u_mark = streams.marks.random()
            u_acc = streams.accept.random()
            field = 0.0
            for s, j in zip(times, nodes):
                field += config.theta * signs[j] * float(phi(t - s))
            if u_acc * hbar < float(h(field)):
                j = min(int(u_mark * n), n - 1)
                times.append(t)
                nodes.append(j)
    return EventData(config, signs, np.array(times, dtype=float),
                     np.array(nodes, dtype=np.int64), n_candidates=n_cand)
