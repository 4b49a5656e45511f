# Run an experiment plan the same way `mfhawkes verify` does and print the
# convergence report.
from mfhawkes import Kernel, PopulationConfig, Transfer
from mfhawkes.lab import ExperimentPlan, run_plan

base = PopulationConfig(n=1, p=0.75, kernel=Kernel.exponential(1.0, 1.0),
                        transfer=Transfer.constant(1.0), horizon=3.0, seed=1)
plan = ExperimentPlan(base, n_values=(32, 64, 128, 256), replicas=200, dt=1e-3,
                      checks=("lln", "clt_fluctuation", "corollary_counts"))
report = run_plan(plan, threads=4)

print("LLN log-log slope:", round(report.value("lln.loglog_slope"), 3))
for n, ks in report.series("clt_fluctuation.ks_gaussian_oracle"):
    print(f"N={n:4d}  KS(sqrt(N)(I^N_T - I_T), Gaussian) = {ks:.3f}")
print(f"Var sqrt(N) D_N(T) at N=256: {report.value('corollary_counts.var_S', 256):.3f} (limit {base.horizon})")

# The CSV is what `verify` writes to report.csv
print(report.to_csv().splitlines()[0])
