"""Exact simulation of the N-node excitatory/inhibitory Hawkes process.

The process is simulated by thinning a Poisson stream of candidates of rate
``N * sup h``.  The input field I^N is carried as a low-dimensional state that
is propagated in closed form between candidates (one scalar for the
exponential kernel, two for the Erlang kernel), so each candidate costs O(1).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import PopulationConfig, Transfer
from .rng import SimStreams

DEFAULT_DT = 1e-3


@numba.njit(cache=True, nogil=True)
def _h(x, family, p0, p1, p2):
    if family == 0:
        return p0
    z = p1 * (x - p2)
    if z >= 0.0:
        return p0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return p0 * e / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def _thin(cand_t, cand_mark, cand_acc, n_nodes, hbar, weights, kfam, lam, amp,
          tfam, tp0, tp1, tp2):
    n = cand_t.size
    out_idx = np.empty(n, dtype=np.int64)
    out_node = np.empty(n, dtype=np.int64)
    x1 = 0.0
    x2 = 0.0
    last = 0.0
    m = 0
    for i in range(n):
        t = cand_t[i]
        tau = t - last
        if kfam == 1:
            x1 *= math.exp(-lam * tau)
        elif kfam == 2:
            e = math.exp(-lam * tau)
            x2 = e * (x2 + tau * x1)
            x1 = e * x1
        last = t
        if kfam == 1:
            field_ = amp * x1
        elif kfam == 2:
            field_ = amp * x2
        else:
            field_ = 0.0
        if cand_acc[i] * hbar < _h(field_, tfam, tp0, tp1, tp2):
            j = min(int(cand_mark[i] * n_nodes), n_nodes - 1)
            out_idx[m] = i
            out_node[m] = j
            m += 1
            x1 += weights[j]
    return out_idx[:m], out_node[:m]


@numba.njit(cache=True, nogil=True)
def _field_on_grid(times, weights, n_grid, dt, kfam, lam, amp):
    out = np.zeros(n_grid)
    if kfam == 0:
        return out
    x1 = 0.0
    x2 = 0.0
    last = 0.0
    e_idx = 0
    ne = times.size
    for k in range(n_grid):
        t = k * dt
        while e_idx < ne and times[e_idx] < t:
            s = times[e_idx]
            tau = s - last
            e = math.exp(-lam * tau)
            if kfam == 2:
                x2 = e * (x2 + tau * x1)
            x1 = e * x1 + weights[e_idx]
            last = s
            e_idx += 1
        tau = t - last
        e = math.exp(-lam * tau)
        if kfam == 2:
            x2 = e * (x2 + tau * x1)
        x1 = e * x1
        last = t
        out[k] = amp * (x1 if kfam == 1 else x2)
    return out


@dataclass(frozen=True, eq=False)
class GridPath:
    """A path sampled at ``k * dt`` for ``k = 0 .. len(values) - 1``."""

    dt: float
    values: np.ndarray
    t0: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.shape[-1])

    def __len__(self):
        return self.values.shape[-1]

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def to_csv(self, column: str = "value") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", column])
        for t, v in zip(self.times, self.values):
            w.writerow([_fmt(t), _fmt(v)])
        return buf.getvalue()


def grid_size(horizon: float, dt: float) -> int:
    """Number of grid points on [0, horizon]: floor(horizon / dt) + 1."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    # tolerate horizon/dt landing a hair below an integer
    return int(math.floor(horizon / dt + 1e-9)) + 1


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class EventData:
    """One realization of Z^N.

    ``times`` are all jump times in increasing order, ``nodes`` the node (0-based)
    that jumped at each of them.  ``n_candidates`` is the number of thinning
    candidates that were examined.
    """

    config: PopulationConfig
    signs: np.ndarray
    times: np.ndarray
    nodes: np.ndarray
    n_candidates: int = 0

    @property
    def weights(self) -> np.ndarray:
        """theta_N * U_j for each jump."""
        return self.config.theta * self.signs[self.nodes].astype(float)

    @property
    def per_node(self) -> list[np.ndarray]:
        return [self.times[self.nodes == j] for j in range(self.config.n)]

    def counts(self, t: float | None = None) -> np.ndarray:
        """Per-node jump counts on [0, t] (default: the whole horizon)."""
        nodes = self.nodes if t is None else self.nodes[self.times <= t]
        return np.bincount(nodes, minlength=self.config.n)

    def __len__(self):
        return self.times.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "time", "sign"])
        for t, j in zip(self.times, self.nodes):
            w.writerow([int(j), _fmt(t), int(self.signs[j])])
        return buf.getvalue()


def candidate_times(rate: float, horizon: float, arrivals: np.random.Generator) -> np.ndarray:
    """Arrival times of a rate-``rate`` Poisson stream on [0, horizon].

    Times are accumulated one gap at a time, in the same floating-point order
    as a scalar ``t += gap`` loop.
    """
    mean = rate * horizon
    chunk = int(mean + 5.0 * math.sqrt(mean)) + 16
    parts = []
    t = 0.0
    while True:
        gaps = arrivals.standard_exponential(chunk) / rate
        ts = np.cumsum(np.concatenate(([t], gaps)))[1:]
        if ts[-1] > horizon:
            parts.append(ts[ts <= horizon])
            break
        parts.append(ts)
        t = ts[-1]
        chunk = max(16, chunk // 4)
    return np.concatenate(parts)


def simulate(config: PopulationConfig, signs, streams: SimStreams) -> EventData:
    """Simulate Z^N on [0, horizon] by thinning.

    Each candidate consumes exactly one gap from ``streams.arrivals``, one
    uniform from ``streams.marks`` (the node is ``floor(u * N)``) and one uniform
    from ``streams.accept``; a candidate at time t is kept when
    ``u * sup h < h(I^N(t-))``.
    """
    signs = np.asarray(signs, dtype=np.int8)
    if signs.shape != (config.n,):
        raise ValueError(f"expected {config.n} signs, got shape {signs.shape}")
    if not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be +1 or -1")
    if config.horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {config.horizon}")
    hbar = config.transfer.bound
    if config.horizon == 0 or hbar == 0:
        return _empty(config, signs)

    cand = candidate_times(config.n * hbar, config.horizon, streams.arrivals)
    marks = streams.marks.random(cand.size)
    acc = streams.accept.random(cand.size)
    k, tr = config.kernel, config.transfer
    weights = config.theta * signs.astype(float)
    idx, nodes = _thin(cand, marks, acc, config.n, hbar, weights, k.code, k.rate, k.amplitude,
                       tr.code, *tr.params)
    return EventData(config, signs, cand[idx], nodes, n_candidates=cand.size)


def _empty(config, signs):
    return EventData(config, signs, np.empty(0), np.empty(0, dtype=np.int64))


def field_at(events: EventData, t) -> np.ndarray:
    """I^N(t) by direct summation over the history (s < t).  O(len(t) * events)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lag = t[:, None] - events.times[None, :]
    phi = np.where(lag > 0, events.config.kernel(np.maximum(lag, 0.0)), 0.0)
    return phi @ events.weights


def compute_IN(events: EventData, dt: float = DEFAULT_DT, horizon: float | None = None) -> GridPath:
    """I^N on the grid ``k * dt``: jumps strictly before each grid time contribute."""
    horizon = events.config.horizon if horizon is None else horizon
    n_grid = grid_size(horizon, dt)
    k = events.config.kernel
    if k.family == "zero" or len(events) == 0:
        return GridPath(dt, np.zeros(n_grid))
    values = _field_on_grid(events.times, events.weights, n_grid, dt, k.code, k.rate, k.amplitude)
    return GridPath(dt, values)


def compute_JN(events: EventData, dt: float = DEFAULT_DT, horizon: float | None = None) -> GridPath:
    """J^N = theta_N * sum_j U_j Z^j on the grid (right-continuous: jumps at t count)."""
    horizon = events.config.horizon if horizon is None else horizon
    t = dt * np.arange(grid_size(horizon, dt))
    csum = np.concatenate(([0.0], np.cumsum(events.weights)))
    return GridPath(dt, csum[np.searchsorted(events.times, t, side="right")])


def compensator_path(transfer: Transfer, in_path: GridPath) -> GridPath:
    """Lambda(t) = int_0^t h(I_s) ds by the trapezoidal rule on the grid of ``in_path``."""
    hv = transfer(in_path.values)
    return GridPath(in_path.dt, cumulative_trapezoid(hv, dx=in_path.dt, initial=0.0))


def rescaled_times(events: EventData, compensator: GridPath) -> list[np.ndarray]:
    """Per-node compensator values Lambda(t_k) at the node's jump times."""
    lam = np.interp(events.times, compensator.times, compensator.values)
    return [lam[events.nodes == j] for j in range(events.config.n)]


def rescaled_spacings(events: EventData, compensator: GridPath) -> np.ndarray:
    """Pooled inter-jump compensator increments of all nodes, starting from Lambda(0) = 0.

    Under the time-change representation these are iid Exp(1).
    """
    parts = [np.diff(np.concatenate(([0.0], r))) for r in rescaled_times(events, compensator)]
    return np.concatenate(parts) if parts else np.empty(0)


def poisson_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Jump times of a homogeneous Poisson process on [0, horizon]."""
    if rate <= 0 or horizon <= 0:
        return np.empty(0)
    return candidate_times(rate, horizon, rng)


def rescaled_poisson_deviation(n: int, rng: np.random.Generator, horizon: float = 1.0) -> float:
    """sup_{s <= horizon} |Y(n s) - n s| / n for a unit-rate Poisson process Y.

    The supremum is attained just before or at a jump, or at the endpoint, so it
    is evaluated exactly from the jump times.
    """
    jumps = poisson_times(1.0, n * horizon, rng)
    k = np.arange(1, jumps.size + 1)
    cands = [abs(jumps.size - n * horizon)]
    if jumps.size:
        cands.append(np.max(np.abs(k - jumps)))
        cands.append(np.max(np.abs(k - 1 - jumps)))
    return float(max(cands)) / n
