"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the heavy criteria
(LLN ladder, CLT, critical regime, counts) take a few minutes together.
Configurations and thresholds below are fixed; thresholds were calibrated by
pilot runs and are not to be loosened.
"""
import json
import math
import os

import numpy as np
import pytest

from mfhawkes.cli import main as cli_main
from mfhawkes.lab import (ExperimentPlan, run_corollary_counts, run_critical_experiment,
                          run_fluctuation_experiment, run_lln_experiment, run_time_rescaling)
from mfhawkes.limit_det import DetLimitProblem, solve_ode_oracle, solve_volterra
from mfhawkes.limit_sde import BrownianIncrements, SdeLimitProblem, markov_sde_oracle, solve_stochastic_convolution
from mfhawkes.model import Kernel, PopulationConfig, Transfer, draw_signs
from mfhawkes.reference import simulate_naive
from mfhawkes.rng import Purpose, SimStreams, stream
from mfhawkes.sim import rescaled_poisson_deviation, simulate

THREADS = os.cpu_count()
EXP = Kernel.exponential(1.0, 1.0)
SIGMOID = Transfer.sigmoid(1.0, 1.0, 0.0)
ONE = Transfer.constant(1.0)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return emit


def _sim(cfg, *key):
    signs = draw_signs(cfg, stream(cfg.seed, *key, Purpose.SIGNS))
    return signs, SimStreams.from_key(cfg.seed, *key)


def test_criterion_01_constant_transfer_poisson(report):
    cfg = PopulationConfig(n=100, p=0.7, kernel=Kernel.erlang(1.0, 2.0), transfer=ONE, horizon=10.0, seed=101)
    counts = np.concatenate([simulate(cfg, *_sim(cfg, r)).counts() for r in range(200)]).astype(float)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    dispersion = counts.var(ddof=1) / counts.mean()
    ok = abs(counts.mean() - 10.0) < 3 * se and 0.85 <= dispersion <= 1.15
    report(1, "constant-transfer Poisson reduction", ok,
           f"mean={counts.mean():.4f} (3se={3 * se:.4f}) dispersion={dispersion:.4f}")


def test_criterion_02_simulator_oracle_equivalence(report):
    mismatches = 0
    for n in (1, 2, 3):
        for seed in range(50):
            cfg = PopulationConfig(n=n, p=0.75, kernel=EXP, transfer=SIGMOID, horizon=5.0, seed=seed)
            signs, _ = _sim(cfg, 0)
            fast = simulate(cfg, signs, SimStreams.from_key(seed, 0))
            slow = simulate_naive(cfg, signs, SimStreams.from_key(seed, 0))
            same = (np.array_equal(fast.times, slow.times) and np.array_equal(fast.nodes, slow.nodes)
                    and fast.n_candidates == slow.n_candidates)
            mismatches += not same
    report(2, "fast vs naive simulator", mismatches == 0, f"{mismatches} mismatching runs out of 150")


def test_criterion_03_time_rescaling(report):
    base = PopulationConfig(n=4, p=0.75, kernel=Kernel.exponential(1.0, 2.0),
                            transfer=Transfer.sigmoid(2.0, 2.0, 0.0), horizon=50.0, seed=3)
    rep = run_time_rescaling(ExperimentPlan(base, (4,), 100, 1e-3, ("time_rescaling",)), THREADS)
    cell = rep.get("time_rescaling.ks_exp_pass_fraction", 4)
    passes = round(cell.value * cell.replicas)
    report(3, "time-rescaling KS vs Exp(1)", cell.replicas == 100 and passes >= 90,
           f"{passes}/{cell.replicas} replicas pass at 5%, "
           f"{rep.value('time_rescaling.spacings_per_replica', 4):.0f} spacings each")


def test_criterion_04_volterra_closed_form(report):
    dt = 1e-3
    path = solve_volterra(DetLimitProblem(EXP, Transfer.constant(2.0), 1.0, 10.0, dt))
    err = np.max(np.abs(path.values - 2 * (1 - np.exp(-path.times))))
    report(4, "Volterra vs closed form", err < 5 * dt, f"sup error {err:.3e} (bound {5 * dt:.0e})")


def test_criterion_05_volterra_vs_ode(report):
    errs = []
    for dt in (1e-3, 5e-4):
        prob = DetLimitProblem(EXP, SIGMOID, 1.0, 5.0, dt)
        errs.append(np.max(np.abs(solve_volterra(prob).values - solve_ode_oracle(prob).values)))
    ratio = errs[0] / errs[1]
    report(5, "Volterra vs ODE oracle", errs[0] <= 1e-2 and 1.7 <= ratio <= 2.3,
           f"sup gap {errs[0]:.3e}, halving ratio {ratio:.3f}")


def test_criterion_06_lln_rate(report):
    base = PopulationConfig(n=1, p=1.0, kernel=EXP, transfer=SIGMOID, horizon=5.0, seed=1)
    rep = run_lln_experiment(ExperimentPlan(base, (64, 128, 256, 512, 1024), 200, 1e-3, ("lln",)), THREADS)
    slope = rep.value("lln.loglog_slope")
    violations = rep.value("lln.monotone_violations")
    series = ", ".join(f"{n}:{v:.3e}" for n, v in rep.series("lln.sup_sq_error"))
    report(6, "LLN rate", -1.3 <= slope <= -0.7 and violations == 0,
           f"slope {slope:.3f}, monotone violations {violations:.0f} [{series}]")


def test_criterion_07_clt_fluctuation(report):
    base = PopulationConfig(n=1, p=0.75, kernel=EXP, transfer=ONE, horizon=2.0, seed=1)
    rep = run_fluctuation_experiment(ExperimentPlan(base, (1024,), 2000, 1e-3, ("clt_fluctuation",)), THREADS)
    ks = rep.value("clt_fluctuation.ks_gaussian_oracle", 1024)
    report(7, "CLT fluctuation vs Gaussian oracle", ks < 0.08,
           f"KS {ks:.4f}, var {rep.value('clt_fluctuation.var_scaled_error', 1024):.4f} vs oracle "
           f"{rep.value('clt_fluctuation.var_gaussian_oracle', 1024):.4f}")


def test_criterion_08_critical_regime(report):
    base = PopulationConfig(n=1, p=0.5, regime="critical", kernel=EXP, transfer=ONE, horizon=1.0, seed=7)
    plan = ExperimentPlan(base, (1024,), 2000, 1e-3, ("critical_limit",))
    rep = run_critical_experiment(plan, THREADS)
    var, oracle = rep.value("critical_limit.var_IN_T", 1024), rep.value("critical_limit.var_oracle", 1024)
    rel = abs(var / oracle - 1)
    sig = run_critical_experiment(ExperimentPlan(base.replace(transfer=SIGMOID), (1024,), 2000, 1e-3,
                                                 ("critical_limit",)), THREADS)
    ks = sig.value("critical_limit.ks_limit_solver", 1024)
    report(8, "critical regime", rel <= 0.10 and ks < 0.08,
           f"Var(I_T)={var:.4f} vs oracle {oracle:.4f} (rel {rel:.3f}); sigmoid KS {ks:.4f}")


def test_criterion_09_markov_reduction(report):
    fine = BrownianIncrements.generate(4000, 2.5e-4, stream(3, 42), paths=10)
    gaps = []
    for nz in (fine.coarsen(), fine):
        prob = SdeLimitProblem(Kernel.exponential(1.5, 1.0), SIGMOID, w=0.8, horizon=1.0, dt=nz.dt)
        gaps.append(np.max(np.abs(solve_stochastic_convolution(prob, nz).values - markov_sde_oracle(prob, nz).values)))
    ratio = gaps[0] / gaps[1]
    dt = 1e-2
    nz = BrownianIncrements.generate(2000, dt, stream(5, 42), paths=5000)
    x = markov_sde_oracle(SdeLimitProblem(EXP, ONE, w=0.0, horizon=20.0, dt=dt), nz).values[:, -1]
    rel = abs(x.var() / 0.5 - 1)
    report(9, "Markov reduction", ratio >= 1.3 and rel <= 0.10,
           f"gap ratio {ratio:.3f}; OU variance {x.var():.4f} vs 0.5 (rel {rel:.3f})")


def test_criterion_10_corollary_counts(report):
    base = PopulationConfig(n=1, p=0.75, kernel=EXP, transfer=ONE, horizon=5.0, seed=1)
    rep = run_corollary_counts(ExperimentPlan(base, (64, 128, 256, 512, 1024), 2000, 1e-3,
                                              ("corollary_counts",)), THREADS)
    var = rep.value("corollary_counts.var_S", 512)
    rel = abs(var / 5.0 - 1)
    decreasing = rep.value("corollary_counts.mean_abs_D_decreasing") == 1.0
    series = ", ".join(f"{n}:{v:.4f}" for n, v in rep.series("corollary_counts.mean_abs_D"))
    report(10, "corollary counts", rel <= 0.10 and decreasing,
           f"Var(sqrt(N) D_N(T))={var:.4f} vs 5 (rel {rel:.3f}); mean|D| [{series}]")


def test_criterion_11_rescaled_poisson(report):
    devs = np.array([rescaled_poisson_deviation(10_000, stream(11, s)) for s in range(100)])
    hits = int(np.sum(devs < 0.05))
    report(11, "rescaled Poisson deviation", hits >= 95, f"{hits}/100 seeds below 0.05, max {devs.max():.4f}")


def test_criterion_12_determinism(report, tmp_path):
    base = PopulationConfig(n=1, p=0.75, kernel=EXP, transfer=SIGMOID, horizon=2.0, seed=12)
    plan = ExperimentPlan(base, (8, 16, 32), 10, 1e-2,
                          ("lln", "clt_fluctuation", "corollary_counts", "time_rescaling"))
    crit = ExperimentPlan(base.replace(p=0.5, regime="critical"), (8, 16), 10, 1e-2, ("critical_limit",))
    same = True
    for i, p in enumerate((plan, crit)):
        cfg = tmp_path / f"plan{i}.json"
        cfg.write_text(json.dumps(p.to_dict()))
        outs = []
        for run, threads in (("a", "1"), ("b", "4")):
            assert cli_main(["verify", "--config", str(cfg), "--out", str(tmp_path / f"{i}{run}"),
                             "--threads", threads]) == 0
            outs.append((tmp_path / f"{i}{run}" / "report.csv").read_bytes())
        same &= outs[0] == outs[1]
    report(12, "verify determinism", same, "report.csv byte-identical across repeated runs" if same
           else "report.csv differs between runs")
