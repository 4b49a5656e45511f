# At p = 1/2 with 1/sqrt(N) weights the drift cancels and the limit is a
# stochastic Volterra equation.  For a constant transfer the variance of the
# limit at T is Phi(T)^2 + Q(T); for an exponential kernel the limit is also
# a Markov SDE.
import numpy as np

from mfhawkes import Kernel, Transfer
from mfhawkes.limit_sde import (BrownianIncrements, SdeLimitProblem, markov_sde_oracle,
                                solve_stochastic_convolution)
from mfhawkes.rng import stream

kernel, T, dt, paths = Kernel.exponential(1.0, 1.0), 1.0, 1e-3, 5000
w = stream(3, 0).standard_normal(paths)
noise = BrownianIncrements.generate(int(T / dt), dt, stream(3, 1), paths=paths)

const = SdeLimitProblem(kernel, Transfer.constant(1.0), w=w, horizon=T, dt=dt)
i_T = solve_stochastic_convolution(const, noise).values[:, -1]
oracle = float(kernel.integral(T)) ** 2 + float(kernel.squared_integral(T))
print(f"Var I_T = {i_T.var():.4f}, closed form {oracle:.4f}")

sig = SdeLimitProblem(kernel, Transfer.sigmoid(1.0, 1.0, 0.0), w=w, horizon=T, dt=dt)
conv = solve_stochastic_convolution(sig, noise).values
markov = markov_sde_oracle(sig, noise).values
print(f"sup |convolution - Markov| over all paths = {np.max(np.abs(conv - markov)):.2e}")
