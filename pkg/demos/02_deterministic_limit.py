# When p != 1/2 the field concentrates on the solution of a Volterra equation.
# Compare the solver with the ODE it reduces to for exponential kernels, and
# with a few simulated paths.
import numpy as np

from mfhawkes import Kernel, PopulationConfig, SimStreams, Transfer, draw_signs, simulate
from mfhawkes.limit_det import DetLimitProblem, solve_ode_oracle, solve_volterra
from mfhawkes.rng import Purpose, stream
from mfhawkes.sim import compute_IN

kernel, transfer = Kernel.exponential(1.0, 1.0), Transfer.sigmoid(1.0, 1.0, 0.0)
prob = DetLimitProblem(kernel, transfer, p=1.0, horizon=5.0, dt=1e-3)
volterra = solve_volterra(prob)
ode = solve_ode_oracle(prob)
print(f"sup |Volterra - ODE| = {np.max(np.abs(volterra.values - ode.values)):.2e}")

for n in (64, 256, 1024):
    cfg = PopulationConfig(n=n, p=1.0, kernel=kernel, transfer=transfer, horizon=5.0, seed=7)
    errs = []
    for r in range(50):
        signs = draw_signs(cfg, stream(cfg.seed, n, r, Purpose.SIGNS))
        path = compute_IN(simulate(cfg, signs, SimStreams.from_key(cfg.seed, n, r)), 1e-3)
        errs.append(np.max((path.values - volterra.values) ** 2))
    # the mean squared sup error should drop roughly like 1/N
    print(f"N={n:5d}  E sup (I^N - I)^2 = {np.mean(errs):.3e}  N * error = {n * np.mean(errs):.2f}")
