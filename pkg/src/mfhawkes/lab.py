"""Monte Carlo experiments checking the finite-N process against its limits.

Each experiment simulates ``replicas`` independent copies of Z^N for every N
in the plan and compares a statistic with the corresponding limit object.
Replica ``r`` at population size ``N`` always draws from the sub-streams keyed
by ``(check, N, r, purpose)``, so results do not depend on the replica count or
on thread scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .limit_det import DetLimitProblem, reference_limit, limit_compensator
from .limit_sde import (BrownianIncrements, FluctuationProblem, SdeLimitProblem,
                        solve_fluctuation, solve_stochastic_convolution)
from .model import (ConfigError, PopulationConfig, _expect_object, _integer, _number,
                    draw_signs, parse_population, sign_statistic)
from .rng import Purpose, SimStreams, stream
from .sim import (DEFAULT_DT, EventData, compensator_path, compute_IN, field_at, grid_size,
                  rescaled_spacings, rescaled_times, simulate)

CHECKS = ("lln", "clt_fluctuation", "critical_limit", "corollary_counts", "time_rescaling")
CHECK_CODES = {name: i + 1 for i, name in enumerate(CHECKS)}
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class ExperimentPlan:
    base: PopulationConfig
    n_values: tuple[int, ...]
    replicas: int
    dt: float = DEFAULT_DT
    checks: tuple[str, ...] = ("lln",)

    def __post_init__(self):
        ns = list(self.n_values)
        if not ns or any(not isinstance(n, (int, np.integer)) or n < 1 for n in ns):
            raise ConfigError("/n_values", "must be a non-empty list of integers >= 1")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("/n_values", "must be strictly increasing")
        if not isinstance(self.replicas, (int, np.integer)) or self.replicas < 2:
            raise ConfigError("/replicas", f"must be an integer >= 2, got {self.replicas!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("/dt", f"must be positive, got {self.dt!r}")
        if not self.checks:
            raise ConfigError("/checks", "must name at least one check")
        for i, c in enumerate(self.checks):
            if c not in CHECKS:
                raise ConfigError(f"/checks/{i}", f"expected one of {list(CHECKS)}, got {c!r}")

    def config_for(self, n: int) -> PopulationConfig:
        return self.base.replace(n=int(n))

    @property
    def seed(self) -> int:
        return self.base.seed

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "n_values": [int(n) for n in self.n_values],
                "replicas": int(self.replicas), "dt": self.dt, "checks": list(self.checks)}

    @classmethod
    def from_dict(cls, obj, path: str = "") -> "ExperimentPlan":
        _expect_object(obj, path, ["base", "n_values", "replicas", "checks"], ["dt"])
        base = parse_population(obj["base"], f"{path}/base")
        ns = obj["n_values"]
        if not isinstance(ns, list) or any(isinstance(n, bool) or not isinstance(n, int) for n in ns):
            raise ConfigError(f"{path}/n_values", "expected a list of integers")
        checks = obj["checks"]
        if not isinstance(checks, list):
            raise ConfigError(f"{path}/checks", "expected a list")
        dt = _number(obj, "dt", path) if "dt" in obj else DEFAULT_DT
        return cls(base, tuple(ns), _integer(obj, "replicas", path), dt, tuple(checks))


@dataclass
class Cell:
    regime: str
    n: int
    replicas: int
    statistic: str
    value: float
    ci_lo: float
    ci_hi: float
    seed: int


@dataclass
class ConvergenceReport:
    """Cells of (statistic, value, 95% interval) per N.

    Rows with ``n == 0`` summarize the whole N ladder (regression slopes,
    monotonicity flags).  ``timings`` holds wall-clock seconds per (check, N)
    and is left out of the CSV so that the CSV is reproducible byte for byte.
    ``samples`` keeps the raw per-replica arrays for inspection.
    """

    plan: ExperimentPlan
    cells: list[Cell] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    samples: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def add(self, check, n, replicas, statistic, value, ci=(math.nan, math.nan)):
        self.cells.append(Cell(self.plan.base.regime, int(n), int(replicas), f"{check}.{statistic}",
                               float(value), float(ci[0]), float(ci[1]), int(self.plan.seed)))

    def get(self, statistic: str, n: int = 0) -> Cell:
        for c in self.cells:
            if c.statistic == statistic and c.n == n:
                return c
        raise KeyError((statistic, n))

    def value(self, statistic: str, n: int = 0) -> float:
        return self.get(statistic, n).value

    def series(self, statistic: str) -> list[tuple[int, float]]:
        return [(c.n, c.value) for c in self.cells if c.statistic == statistic and c.n]

    def merge(self, other: "ConvergenceReport") -> None:
        self.cells.extend(other.cells)
        self.timings.update(other.timings)
        self.samples.update(other.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["regime", "n", "replicas", "statistic", "value", "ci_lo", "ci_hi", "seed"])
        for c in self.cells:
            w.writerow([c.regime, c.n, c.replicas, c.statistic, _fmt(c.value), _fmt(c.ci_lo),
                        _fmt(c.ci_hi), c.seed])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "version": __version__,
            "plan": self.plan.to_dict(),
            "root_seed": int(self.plan.seed),
            "cells": [c.__dict__ for c in self.cells],
            "timings": self.timings,
        }, indent=2, allow_nan=True)


def _fmt(x: float) -> str:
    return format(x, ".17g")


# ---------------------------------------------------------------------------
# statistics

def fit_loglog_slope(pairs) -> tuple[float, float, float]:
    """OLS fit of log(statistic) on log(N); returns (slope, intercept, r**2)."""
    slope, intercept, r2, _ = _loglog(pairs)
    return slope, intercept, r2


def _loglog(pairs):
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 (N, statistic) pairs, got {len(pairs)}")
    n, y = np.array(pairs, dtype=float).T
    if np.any(y <= 0) or np.any(n <= 0):
        raise ValueError("log-log fit needs positive N and statistics")
    x, ly = np.log(n), np.log(y)
    if np.ptp(ly) == 0:
        return 0.0, float(ly[0]), 1.0, 0.0
    res = stats.linregress(x, ly)
    return float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr)


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate((a, b))
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def mean_ci(x, z: float = 1.959963984540054):
    x = np.asarray(x, dtype=float)
    m = x.mean()
    half = z * x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else math.nan
    return m, (m - half, m + half)


def var_ci(x, level: float = 0.95):
    """Sample variance with the chi-square interval."""
    x = np.asarray(x, dtype=float)
    k = x.size - 1
    v = x.var(ddof=1)
    lo = k * v / stats.chi2.ppf(0.5 + level / 2, k)
    hi = k * v / stats.chi2.ppf(0.5 - level / 2, k)
    return v, (lo, hi)


def wilson_ci(successes: int, total: int, z: float = 1.959963984540054):
    if total == 0:
        return math.nan, (math.nan, math.nan)
    p = successes / total
    denom = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return p, (centre - half, centre + half)


def ks_bootstrap_ci(a, b, rng: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES):
    """KS statistic with a percentile bootstrap interval."""
    a, b = np.asarray(a), np.asarray(b)
    d = ks_two_sample(a, b)
    boot = np.empty(resamples)
    for i in range(resamples):
        boot[i] = ks_two_sample(rng.choice(a, a.size), rng.choice(b, b.size))
    return d, (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))


# ---------------------------------------------------------------------------
# replicas

def run_replica(config: PopulationConfig, check: str, replica: int) -> EventData:
    """Draw signs and simulate one replica on its dedicated sub-streams."""
    key = (CHECK_CODES[check], config.n, replica)
    signs = draw_signs(config, stream(config.seed, *key, Purpose.SIGNS))
    return simulate(config, signs, SimStreams.from_key(config.seed, *key))


def _map(fn, items, threads):
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _limit_path(plan: ExperimentPlan):
    b = plan.base
    return reference_limit(DetLimitProblem(b.kernel, b.transfer, b.p, b.horizon, plan.dt))


def _require_subcritical(plan, check):
    b = plan.base
    if b.regime != "subcritical" or b.p == 0.5:
        raise ValueError(f"{check} needs the subcritical regime with p != 1/2 "
                         f"(got regime={b.regime!r}, p={b.p})")


def _require_critical(plan, check):
    b = plan.base
    if b.regime != "critical" or b.p != 0.5:
        raise ValueError(f"{check} needs the critical regime with p = 1/2 "
                         f"(got regime={b.regime!r}, p={b.p})")


def _timed(report, check, n, t0):
    report.timings[f"{check}/{n}"] = time.perf_counter() - t0


# ---------------------------------------------------------------------------
# experiments

def run_lln_experiment(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    """E[sup_t (I^N_t - I_t)**2] along the N ladder and its log-log slope."""
    check = "lln"
    _require_subcritical(plan, check)
    report = ConvergenceReport(plan)
    limit = _limit_path(plan).values
    R = plan.replicas
    for n in plan.n_values:
        t0 = time.perf_counter()
        cfg = plan.config_for(n)

        def one(r):
            ev = run_replica(cfg, check, r)
            return float(np.max((compute_IN(ev, plan.dt).values - limit) ** 2))

        err = np.array(_map(one, range(R), threads))
        report.samples[f"{check}/{n}"] = err
        m, ci = mean_ci(err)
        report.add(check, n, R, "sup_sq_error", m, ci)
        _timed(report, check, n, t0)

    series = report.series(f"{check}.sup_sq_error")
    if len(series) >= 3:
        slope, intercept, r2, se = _loglog(series)
        tq = stats.t.ppf(0.975, len(series) - 2)
        report.add(check, 0, R, "loglog_slope", slope, (slope - tq * se, slope + tq * se))
        report.add(check, 0, R, "loglog_intercept", intercept)
        report.add(check, 0, R, "loglog_r2", r2)
    values = [v for _, v in series]
    report.add(check, 0, R, "monotone_violations", sum(b >= a for a, b in zip(values, values[1:])))
    return report


def run_fluctuation_experiment(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    """Law of sqrt(N) (I^N_T - I_T) against the fluctuation limit K_T."""
    check = "clt_fluctuation"
    _require_subcritical(plan, check)
    b = plan.base
    report = ConvergenceReport(plan)
    limit = _limit_path(plan)
    T, R, dt = b.horizon, plan.replicas, plan.dt
    i_T = limit.values[-1]
    var_w = 4 * b.p * (1 - b.p)
    gaussian_var = None
    if b.transfer.family == "constant":
        c = b.transfer.c
        gaussian_var = var_w * (c * float(b.kernel.integral(T))) ** 2 + c * float(b.kernel.squared_integral(T))

    for n in plan.n_values:
        t0 = time.perf_counter()
        cfg = plan.config_for(n)

        def one(r):
            ev = run_replica(cfg, check, r)
            return (math.sqrt(n) * (float(field_at(ev, [T])[0]) - i_T), sign_statistic(ev.signs, b.p))

        x, wn = np.array(_map(one, range(R), threads)).T
        w = math.sqrt(var_w) * stream(b.seed, CHECK_CODES[check], n, 0, Purpose.W).standard_normal(R)
        noise = BrownianIncrements.generate(grid_size(T, dt) - 1, dt,
                                            stream(b.seed, CHECK_CODES[check], n, 0, Purpose.NOISE), paths=R)
        K, _ = solve_fluctuation(FluctuationProblem(b.kernel, b.transfer, b.p, limit, w, T, dt), noise)
        k_T = K.values[:, -1]
        report.samples[f"{check}/{n}"] = x
        report.samples[f"{check}/{n}/limit"] = k_T
        boot = stream(b.seed, CHECK_CODES[check], n, 0, Purpose.MISC)

        m, ci = mean_ci(x)
        report.add(check, n, R, "mean_scaled_error", m, ci)
        v, ci = var_ci(x)
        report.add(check, n, R, "var_scaled_error", v, ci)
        v, ci = var_ci(k_T)
        report.add(check, n, R, "var_limit_K", v, ci)
        v, ci = var_ci(wn)
        report.add(check, n, R, "var_W_N", v, ci)
        report.add(check, n, R, "var_W_oracle", var_w, (var_w, var_w))
        d, ci = ks_bootstrap_ci(x, k_T, boot)
        report.add(check, n, R, "ks_limit_solver", d, ci)
        if gaussian_var is not None:
            g = math.sqrt(gaussian_var) * boot.standard_normal(R)
            report.samples[f"{check}/{n}/gaussian"] = g
            report.add(check, n, R, "var_gaussian_oracle", gaussian_var, (gaussian_var, gaussian_var))
            d, ci = ks_bootstrap_ci(x, g, boot)
            report.add(check, n, R, "ks_gaussian_oracle", d, ci)
        _timed(report, check, n, t0)
    return report


def run_critical_experiment(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    """Law of I^N_T at p = 1/2 against the stochastic convolution limit, plus time rescaling of node 1."""
    check = "critical_limit"
    _require_critical(plan, check)
    b = plan.base
    report = ConvergenceReport(plan)
    T, R, dt = b.horizon, plan.replicas, plan.dt
    oracle_var = None
    if b.transfer.family == "constant":
        c = b.transfer.c
        oracle_var = (c * float(b.kernel.integral(T))) ** 2 + c * float(b.kernel.squared_integral(T))

    for n in plan.n_values:
        t0 = time.perf_counter()
        cfg = plan.config_for(n)

        def one(r):
            ev = run_replica(cfg, check, r)
            lam = compensator_path(b.transfer, compute_IN(ev, dt))
            first = rescaled_times(ev, lam)[0]
            spacings = np.diff(np.concatenate(([0.0], first)))
            pval = stats.kstest(spacings, "expon").pvalue if spacings.size else math.nan
            return float(field_at(ev, [T])[0]), pval

        x, pvals = np.array(_map(one, range(R), threads)).T
        w = stream(b.seed, CHECK_CODES[check], n, 0, Purpose.W).standard_normal(R)
        noise = BrownianIncrements.generate(grid_size(T, dt) - 1, dt,
                                            stream(b.seed, CHECK_CODES[check], n, 0, Purpose.NOISE), paths=R)
        I = solve_stochastic_convolution(SdeLimitProblem(b.kernel, b.transfer, w, 0.0, T, dt), noise)
        i_T = I.values[:, -1]
        report.samples[f"{check}/{n}"] = x
        report.samples[f"{check}/{n}/limit"] = i_T
        boot = stream(b.seed, CHECK_CODES[check], n, 0, Purpose.MISC)

        v, ci = var_ci(x)
        report.add(check, n, R, "var_IN_T", v, ci)
        v, ci = var_ci(i_T)
        report.add(check, n, R, "var_limit_I_T", v, ci)
        if oracle_var is not None:
            report.add(check, n, R, "var_oracle", oracle_var, (oracle_var, oracle_var))
        d, ci = ks_bootstrap_ci(x, i_T, boot)
        report.add(check, n, R, "ks_limit_solver", d, ci)
        tested = pvals[np.isfinite(pvals)]
        frac, ci = wilson_ci(int(np.sum(tested > 0.05)), tested.size)
        report.add(check, n, tested.size, "rescaling_pass_fraction", frac, ci)
        _timed(report, check, n, t0)
    return report


def run_corollary_counts(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    """Compensated average counts D_N(T) and their sqrt(N) fluctuations."""
    check = "corollary_counts"
    b = plan.base
    report = ConvergenceReport(plan)
    T, R, dt = b.horizon, plan.replicas, plan.dt
    subcritical = b.regime == "subcritical" and b.p != 0.5
    if subcritical:
        lam_T = limit_compensator(_limit_path(plan), b.transfer).values[-1]
        lam_ci = (lam_T, lam_T)
    elif b.transfer.family == "constant":
        lam_T = b.transfer.c * T
        lam_ci = (lam_T, lam_T)
    else:
        # E int_0^T h(I_s) ds over the stochastic limit
        k = CHECK_CODES[check]
        w = stream(b.seed, k, 0, 0, Purpose.W).standard_normal(R)
        noise = BrownianIncrements.generate(grid_size(T, dt) - 1, dt, stream(b.seed, k, 0, 0, Purpose.NOISE),
                                            paths=R)
        I = solve_stochastic_convolution(SdeLimitProblem(b.kernel, b.transfer, w, 0.0, T, dt), noise)
        lam_T, lam_ci = mean_ci(compensator_path(b.transfer, I).values[:, -1])
    report.add(check, 0, R, "limit_compensator_T", lam_T, lam_ci)

    limit_pair = None
    if subcritical:
        # (S, M) = (int sqrt(h(I)) dB, int sqrt(h(I)) dB~) with corr(B, B~) = 2p - 1
        k = CHECK_CODES[check]
        rho = 2 * b.p - 1
        rate = np.sqrt(b.transfer(_limit_path(plan).values[:-1]))
        n_steps = grid_size(T, dt) - 1
        db = BrownianIncrements.generate(n_steps, dt, stream(b.seed, k, 0, 1, Purpose.NOISE), paths=R).increments
        db_ind = BrownianIncrements.generate(n_steps, dt, stream(b.seed, k, 0, 2, Purpose.NOISE),
                                             paths=R).increments
        db_tilde = rho * db + math.sqrt(1 - rho * rho) * db_ind
        limit_pair = (db @ rate, db_tilde @ rate)
        cov = np.cov(*limit_pair)[0, 1]
        report.add(check, 0, R, "cov_limit_samples", cov)

    for n in plan.n_values:
        t0 = time.perf_counter()
        cfg = plan.config_for(n)

        def one(r):
            ev = run_replica(cfg, check, r)
            lam_n = compensator_path(b.transfer, compute_IN(ev, dt)).values[-1]
            counts = ev.counts(T)
            dev = counts - lam_n
            return (dev.sum() / n,
                    float(np.dot(ev.signs, dev)) / math.sqrt(n),
                    abs(counts.sum() / n - lam_T))

        d, m_signed, cor12 = np.array(_map(one, range(R), threads)).T
        s = math.sqrt(n) * d
        report.samples[f"{check}/{n}"] = d
        m, ci = mean_ci(np.abs(d))
        report.add(check, n, R, "mean_abs_D", m, ci)
        v, ci = var_ci(s)
        report.add(check, n, R, "var_S", v, ci)
        report.add(check, n, R, "var_S_oracle", lam_T, lam_ci)
        m, ci = mean_ci(cor12)
        report.add(check, n, R, "mean_abs_count_minus_limit", m, ci)
        if subcritical:
            cov = np.cov(s, m_signed)
            se = math.sqrt((cov[0, 0] * cov[1, 1] + cov[0, 1] ** 2) / (R - 1))
            report.add(check, n, R, "cov_counts_signed", cov[0, 1], (cov[0, 1] - 1.96 * se, cov[0, 1] + 1.96 * se))
            rho = (2 * b.p - 1) * lam_T
            report.add(check, n, R, "cov_oracle", rho, (rho, rho))
            report.add(check, n, R, "cov_sign_agrees", float(np.sign(cov[0, 1]) == np.sign(rho) or rho == 0))
            boot = stream(b.seed, CHECK_CODES[check], n, 0, Purpose.MISC)
            d, ci = ks_bootstrap_ci(s, limit_pair[0], boot)
            report.add(check, n, R, "ks_S_limit", d, ci)
            d, ci = ks_bootstrap_ci(m_signed, limit_pair[1], boot)
            report.add(check, n, R, "ks_M_limit", d, ci)
        _timed(report, check, n, t0)

    values = [v for _, v in report.series(f"{check}.mean_abs_D")]
    report.add(check, 0, R, "mean_abs_D_decreasing", float(all(y < x for x, y in zip(values, values[1:]))))
    return report


def run_time_rescaling(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    """Per replica: pooled compensator spacings of all nodes tested against Exp(1)."""
    check = "time_rescaling"
    b = plan.base
    report = ConvergenceReport(plan)
    R, dt = plan.replicas, plan.dt
    for n in plan.n_values:
        t0 = time.perf_counter()
        cfg = plan.config_for(n)

        def one(r):
            ev = run_replica(cfg, check, r)
            spacings = rescaled_spacings(ev, compensator_path(b.transfer, compute_IN(ev, dt)))
            if spacings.size == 0:
                return math.nan, 0
            return stats.kstest(spacings, "expon").pvalue, spacings.size

        pvals, sizes = np.array(_map(one, range(R), threads)).T
        report.samples[f"{check}/{n}"] = pvals
        tested = pvals[np.isfinite(pvals)]
        frac, ci = wilson_ci(int(np.sum(tested > 0.05)), tested.size)
        report.add(check, n, tested.size, "ks_exp_pass_fraction", frac, ci)
        m, ci = mean_ci(sizes)
        report.add(check, n, R, "spacings_per_replica", m, ci)
        _timed(report, check, n, t0)
    return report


RUNNERS = {
    "lln": run_lln_experiment,
    "clt_fluctuation": run_fluctuation_experiment,
    "critical_limit": run_critical_experiment,
    "corollary_counts": run_corollary_counts,
    "time_rescaling": run_time_rescaling,
}


def run_plan(plan: ExperimentPlan, threads: int | None = None) -> ConvergenceReport:
    report = ConvergenceReport(plan)
    for check in plan.checks:
        report.merge(RUNNERS[check](plan, threads))
    return report
