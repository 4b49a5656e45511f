"""Deterministic mean-field limit for p != 1/2.

The limit field solves the convolution equation

    I_t = (2p - 1) * int_0^t phi(t - s) h(I_s) ds,

solved here by an explicit left-rectangle convolution quadrature.  For the
exponential kernel it reduces to ``dI/dt = -rate I + (2p - 1) a h(I)``, which
is integrated with RK4 as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Kernel, Transfer
from .sim import DEFAULT_DT, GridPath, compensator_path, grid_size


@dataclass(frozen=True)
class DetLimitProblem:
    kernel: Kernel
    transfer: Transfer
    p: float
    horizon: float
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.horizon:
            raise ValueError(f"dt={self.dt} exceeds horizon={self.horizon}")

    @property
    def n_grid(self) -> int:
        return grid_size(self.horizon, self.dt)


def solve_volterra(problem: DetLimitProblem) -> GridPath:
    """I[k] = (2p-1) * dt * sum_{m<k} phi((k-m) dt) h(I[m]), I[0] = 0."""
    n = problem.n_grid
    dt = problem.dt
    drift = 2.0 * problem.p - 1.0
    # phi at lags dt, 2dt, ..., reversed so that a contiguous slice lines up with h(I[0..k-1])
    lags_rev = problem.kernel(dt * np.arange(n - 1, 0, -1))
    I = np.zeros(n)
    hv = np.zeros(n)
    h = problem.transfer
    hv[0] = h(0.0)
    for k in range(1, n):
        I[k] = drift * dt * np.dot(lags_rev[n - 1 - k:], hv[:k])
        if not np.isfinite(I[k]):
            raise FloatingPointError(f"non-finite value at grid index {k}")
        hv[k] = h(I[k])
    return GridPath(dt, I)


def solve_ode_oracle(problem: DetLimitProblem) -> GridPath:
    """RK4 integration of dI/dt = -rate I + (2p-1) a h(I), exponential kernel only."""
    k = problem.kernel
    if k.family != "exponential":
        raise ValueError(f"ODE reduction needs an exponential kernel, got {k.family!r}")
    lam, a = k.rate, k.amplitude
    drift = (2.0 * problem.p - 1.0) * a
    h = problem.transfer

    def f(x):
        return -lam * x + drift * float(h(x))

    n, dt = problem.n_grid, problem.dt
    I = np.zeros(n)
    x = 0.0
    for i in range(1, n):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        I[i] = x
    return GridPath(dt, I)


def limit_compensator(path: GridPath, transfer: Transfer) -> GridPath:
    """Lambda_t = int_0^t h(I_s) ds (trapezoidal)."""
    return compensator_path(transfer, path)


def nested_compensator(problem: DetLimitProblem) -> GridPath:
    """Lambda from its fixed-point form, without going through I.

    Lambda_t = int_0^t h((2p-1) int_0^s phi(s-r) dLambda_r) ds, with the inner
    Stieltjes integral taken at interval midpoints and the outer one as a left
    sum.  Independent of :func:`solve_volterra`'s quadrature; used to cross-check
    :func:`limit_compensator`.
    """
    n, dt = problem.n_grid, problem.dt
    drift = 2.0 * problem.p - 1.0
    mid_rev = problem.kernel(dt * (np.arange(n - 1, 0, -1) - 0.5))
    dlam = np.zeros(n - 1)
    lam = np.zeros(n)
    for k in range(n - 1):
        inner = drift * np.dot(mid_rev[n - 1 - k:], dlam[:k]) if k else 0.0
        dlam[k] = dt * float(problem.transfer(inner))
        lam[k + 1] = lam[k] + dlam[k]
    return GridPath(dt, lam)


def reference_limit(problem: DetLimitProblem) -> GridPath:
    """Most accurate available limit path: RK4 for exponential kernels, else quadrature."""
    if problem.kernel.family == "exponential":
        return solve_ode_oracle(problem)
    return solve_volterra(problem)
