"""Stochastic convolution equations: the critical limit and the CLT fluctuations.

All solvers take the Brownian increments as an explicit argument so that
different schemes can be driven by the same noise.  Increments may be a 1-D
array (one path) or 2-D with shape ``(paths, steps)``; ``w`` may then be a
scalar or one value per path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Kernel, Transfer
from .sim import DEFAULT_DT, GridPath, grid_size


@dataclass(frozen=True, eq=False)
class BrownianIncrements:
    dt: float
    increments: np.ndarray
    seed: int | None = None

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-1]

    @classmethod
    def generate(cls, n_steps: int, dt: float, rng: np.random.Generator, paths: int | None = None,
                 seed: int | None = None) -> "BrownianIncrements":
        shape = (n_steps,) if paths is None else (paths, n_steps)
        return cls(dt, np.sqrt(dt) * rng.standard_normal(shape), seed)

    @classmethod
    def zeros(cls, n_steps: int, dt: float, paths: int | None = None) -> "BrownianIncrements":
        shape = (n_steps,) if paths is None else (paths, n_steps)
        return cls(dt, np.zeros(shape))

    def coarsen(self) -> "BrownianIncrements":
        """Increments on the grid with step 2 dt (pairs summed; a trailing odd step is dropped)."""
        m = self.n_steps // 2
        inc = self.increments[..., : 2 * m]
        return BrownianIncrements(2 * self.dt, inc[..., 0::2] + inc[..., 1::2], self.seed)

    def truncated(self, k: int) -> "BrownianIncrements":
        """Same noise with every increment from step ``k`` on set to zero."""
        inc = self.increments.copy()
        inc[..., k:] = 0.0
        return BrownianIncrements(self.dt, inc, self.seed)

    def path(self) -> np.ndarray:
        """B on the grid, starting at 0."""
        z = np.zeros(self.increments.shape[:-1] + (1,))
        return np.concatenate((z, np.cumsum(self.increments, axis=-1)), axis=-1)


@dataclass(frozen=True)
class SdeLimitProblem:
    kernel: Kernel
    transfer: Transfer
    w: float | np.ndarray = 0.0
    i0: float = 0.0
    horizon: float = 1.0
    dt: float = DEFAULT_DT

    @property
    def n_grid(self) -> int:
        return grid_size(self.horizon, self.dt)


@dataclass(frozen=True)
class FluctuationProblem:
    kernel: Kernel
    transfer: Transfer
    p: float
    limit: GridPath
    w: float | np.ndarray = 0.0
    horizon: float = 1.0
    dt: float = DEFAULT_DT

    @property
    def n_grid(self) -> int:
        return grid_size(self.horizon, self.dt)


def _check_noise(n_grid, dt, noise):
    if noise.n_steps != n_grid - 1 or not np.isclose(noise.dt, dt, rtol=1e-12, atol=0):
        raise ValueError(f"noise grid ({noise.n_steps} steps of {noise.dt}) does not match "
                         f"problem grid ({n_grid - 1} steps of {dt})")


def _column(w, batch_shape):
    w = np.asarray(w, dtype=float)
    return w if w.ndim == 0 else w.reshape(batch_shape)


def solve_stochastic_convolution(problem: SdeLimitProblem, noise: BrownianIncrements) -> GridPath:
    """Explicit left-point scheme for I_t = i0 + w int phi(t-s) h(I_s) ds + int phi(t-s) sqrt(h(I_s)) dB_s.

    I[k] = i0 + sum_{m<k} phi((k-m) dt) * (w h(I[m]) dt + sqrt(h(I[m])) dB_m).
    """
    n, dt = problem.n_grid, problem.dt
    _check_noise(n, dt, noise)
    batch = noise.increments.shape[:-1]
    w = _column(problem.w, batch)
    h = problem.transfer
    lags_rev = problem.kernel(dt * np.arange(n - 1, 0, -1))
    I = np.empty(batch + (n,))
    incr = np.empty(batch + (n - 1,))
    I[..., 0] = problem.i0
    for k in range(n - 1):
        if k:
            I[..., k] = problem.i0 + incr[..., :k] @ lags_rev[n - 1 - k:]
            if not np.all(np.isfinite(I[..., k])):
                raise FloatingPointError(f"non-finite value at grid index {k}")
        hk = h(I[..., k])
        incr[..., k] = w * hk * dt + np.sqrt(np.maximum(hk, 0.0)) * noise.increments[..., k]
    if n > 1:
        I[..., n - 1] = problem.i0 + incr @ lags_rev
        if not np.all(np.isfinite(I[..., n - 1])):
            raise FloatingPointError(f"non-finite value at grid index {n - 1}")
    return GridPath(dt, I)


def markov_sde_oracle(problem: SdeLimitProblem, noise: BrownianIncrements) -> GridPath:
    """Euler-Maruyama for the Markov reduction of the exponential-kernel case.

    With phi(s) = a exp(-rate s) and Y = I - i0:
    dY = (a w h(I) - rate Y) dt + a sqrt(h(I)) dB.
    """
    k = problem.kernel
    if k.family != "exponential":
        raise ValueError(f"Markov reduction needs an exponential kernel, got {k.family!r}")
    n, dt = problem.n_grid, problem.dt
    _check_noise(n, dt, noise)
    batch = noise.increments.shape[:-1]
    w = _column(problem.w, batch)
    lam, a = k.rate, k.amplitude
    h = problem.transfer
    I = np.empty(batch + (n,))
    y = np.zeros(batch)
    I[..., 0] = problem.i0
    for i in range(n - 1):
        hv = h(problem.i0 + y)
        y = y + (a * w * hv - lam * y) * dt + a * np.sqrt(np.maximum(hv, 0.0)) * noise.increments[..., i]
        I[..., i + 1] = problem.i0 + y
    return GridPath(dt, I)


def solve_fluctuation(problem: FluctuationProblem, noise: BrownianIncrements) -> tuple[GridPath, GridPath]:
    """Coupled explicit scheme for the fluctuation pair (K, G).

    G[k+1] = G[k] + (w h(I[k]) + (2p-1) h'(I[k]) K[k]) dt + sqrt(h(I[k])) dB_k,
    K[k]   = sum_{m<k} phi((k-m) dt) (G[m+1] - G[m]).
    """
    n, dt = problem.n_grid, problem.dt
    if len(problem.limit) != n or not np.isclose(problem.limit.dt, dt, rtol=1e-12, atol=0):
        raise ValueError("limit path grid does not match the problem grid")
    _check_noise(n, dt, noise)
    batch = noise.increments.shape[:-1]
    w = _column(problem.w, batch)
    drift = 2.0 * problem.p - 1.0
    h = problem.transfer
    hI = h(problem.limit.values)
    dhI = h.derivative(problem.limit.values)
    sq = np.sqrt(np.maximum(hI, 0.0))
    lags_rev = problem.kernel(dt * np.arange(n - 1, 0, -1))
    K = np.zeros(batch + (n,))
    G = np.zeros(batch + (n,))
    dG = np.empty(batch + (n - 1,))
    for k in range(n - 1):
        if k:
            K[..., k] = dG[..., :k] @ lags_rev[n - 1 - k:]
        dG[..., k] = (w * hI[k] + drift * dhI[k] * K[..., k]) * dt + sq[k] * noise.increments[..., k]
        G[..., k + 1] = G[..., k] + dG[..., k]
    if n > 1:
        K[..., n - 1] = dG @ lags_rev
    return GridPath(dt, K), GridPath(dt, G)


def fluctuation_csv(K: GridPath, G: GridPath) -> str:
    lines = ["t,k,g"]
    for t, k, g in zip(K.times, K.values, G.values):
        lines.append(f"{format(t, '.17g')},{format(k, '.17g')},{format(g, '.17g')}")
    return "\n".join(lines) + "\n"
