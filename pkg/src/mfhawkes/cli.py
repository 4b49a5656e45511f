"""Command-line entry point.

    mfhawkes simulate    --config pop.json  [--out DIR] [--seed S] [--dt DT]
    mfhawkes limit-det   --config pop.json
    mfhawkes limit-sde   --config pop.json
    mfhawkes fluctuation --config pop.json
    mfhawkes verify      --config plan.json [--replicas R] [--threads T]

Exit status: 0 on success, 2 on a configuration error, 1 on any other failure.
Every run writes ``manifest.json`` next to its data files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .lab import ExperimentPlan, run_plan
from .limit_det import DetLimitProblem, solve_volterra
from .limit_sde import (BrownianIncrements, FluctuationProblem, SdeLimitProblem, fluctuation_csv,
                        solve_fluctuation, solve_stochastic_convolution)
from .model import ConfigError, PopulationConfig, draw_signs, parse_population, strict_json_loads
from .rng import Purpose, SimStreams, stream
from .sim import DEFAULT_DT, compute_IN, grid_size, simulate

log = logging.getLogger("mfhawkes")

SUBCOMMANDS = ("simulate", "limit-det", "limit-sde", "fluctuation", "verify")
DEFAULT_OUT = "out"
# sub-stream namespace for single CLI runs (lab checks use 1..5)
CLI_KEY = 0


@dataclass
class CliConfig:
    subcommand: str
    config: PopulationConfig | ExperimentPlan
    out_dir: Path = Path(DEFAULT_OUT)
    dt: float = DEFAULT_DT
    threads: int | None = None
    overrides: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed if isinstance(self.config, PopulationConfig) else self.config.base.seed

    def resolved(self) -> dict:
        """The config as a JSON object that :func:`load_config` reads back unchanged."""
        if isinstance(self.config, ExperimentPlan):
            return self.config.to_dict()
        return {**self.config.to_dict(), "dt": self.dt}


def load_config(path, subcommand: str = "simulate") -> CliConfig:
    """Strictly parse a config file.

    ``verify`` expects an experiment plan; every other subcommand expects a
    population config, optionally with a ``dt`` field.
    """
    text = Path(path).read_text()
    try:
        obj = strict_json_loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("/", f"invalid JSON: {err}") from None
    if subcommand == "verify":
        plan = ExperimentPlan.from_dict(obj)
        return CliConfig(subcommand, plan, dt=plan.dt)
    config = parse_population(obj, extra=("dt",))
    dt = DEFAULT_DT
    if "dt" in obj:
        dt = obj["dt"]
        if isinstance(dt, bool) or not isinstance(dt, (int, float)) or not dt > 0:
            raise ConfigError("/dt", f"must be a positive number, got {dt!r}")
        dt = float(dt)
    return CliConfig(subcommand, config, dt=dt)


def write_config(cfg: CliConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.resolved(), indent=2) + "\n")


def _apply_overrides(cfg: CliConfig, args) -> CliConfig:
    ov = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed", f"must be an unsigned 64-bit integer, got {args.seed}")
        ov["seed"] = args.seed
    if args.dt is not None:
        if not (args.dt > 0 and math.isfinite(args.dt)):
            raise ConfigError("--dt", f"must be positive, got {args.dt}")
        ov["dt"] = args.dt
    if args.replicas is not None:
        if cfg.subcommand != "verify":
            raise ConfigError("--replicas", "only applies to verify")
        ov["replicas"] = args.replicas

    c = cfg.config
    if isinstance(c, ExperimentPlan):
        base = c.base.replace(seed=ov["seed"]) if "seed" in ov else c.base
        c = ExperimentPlan(base, c.n_values, ov.get("replicas", c.replicas), ov.get("dt", c.dt), c.checks)
        cfg.dt = c.dt
    else:
        if "seed" in ov:
            c = c.replace(seed=ov["seed"])
        cfg.dt = ov.get("dt", cfg.dt)
    cfg.config = c
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {args.threads}")
        ov["threads"] = args.threads
    cfg.threads = args.threads if args.threads is not None else os.cpu_count()
    cfg.out_dir = Path(args.out)
    cfg.overrides = ov
    return cfg


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfhawkes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--out", default=DEFAULT_OUT, metavar="DIR")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--dt", type=float, metavar="F64")
    p.add_argument("--replicas", type=int, metavar="U32")
    p.add_argument("--threads", type=int, metavar="U32")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# subcommands; each returns {filename: text} plus extra manifest entries

def _cmd_simulate(cfg: CliConfig):
    pc = cfg.config
    signs = draw_signs(pc, stream(pc.seed, CLI_KEY, pc.n, 0, Purpose.SIGNS))
    events = simulate(pc, signs, SimStreams.from_key(pc.seed, CLI_KEY, pc.n, 0))
    path = compute_IN(events, cfg.dt)
    log.info("simulated %d events from %d candidates", len(events), events.n_candidates)
    return {"events.csv": events.to_csv(), "path.csv": path.to_csv()}, {"events": len(events)}


def _cmd_limit_det(cfg: CliConfig):
    pc = cfg.config
    path = solve_volterra(DetLimitProblem(pc.kernel, pc.transfer, pc.p, pc.horizon, cfg.dt))
    return {"path.csv": path.to_csv()}, {}


def _draw_w(pc: PopulationConfig) -> float:
    return math.sqrt(4 * pc.p * (1 - pc.p)) * float(stream(pc.seed, CLI_KEY, 0, 0, Purpose.W).standard_normal())


def _noise(pc: PopulationConfig, dt: float) -> BrownianIncrements:
    rng = stream(pc.seed, CLI_KEY, 0, 0, Purpose.NOISE)
    return BrownianIncrements.generate(grid_size(pc.horizon, dt) - 1, dt, rng, seed=pc.seed)


def _cmd_limit_sde(cfg: CliConfig):
    pc = cfg.config
    w = _draw_w(pc)
    path = solve_stochastic_convolution(
        SdeLimitProblem(pc.kernel, pc.transfer, w, 0.0, pc.horizon, cfg.dt), _noise(pc, cfg.dt))
    return {"path.csv": path.to_csv()}, {"w": w}


def _cmd_fluctuation(cfg: CliConfig):
    pc = cfg.config
    w = _draw_w(pc)
    limit = solve_volterra(DetLimitProblem(pc.kernel, pc.transfer, pc.p, pc.horizon, cfg.dt))
    K, G = solve_fluctuation(FluctuationProblem(pc.kernel, pc.transfer, pc.p, limit, w, pc.horizon, cfg.dt),
                             _noise(pc, cfg.dt))
    return {"path.csv": fluctuation_csv(K, G)}, {"w": w}


def _cmd_verify(cfg: CliConfig):
    report = run_plan(cfg.config, cfg.threads)
    return {"report.csv": report.to_csv(), "report.json": report.to_json()}, {}


COMMANDS = {
    "simulate": _cmd_simulate,
    "limit-det": _cmd_limit_det,
    "limit-sde": _cmd_limit_sde,
    "fluctuation": _cmd_fluctuation,
    "verify": _cmd_verify,
}


def _write_outputs(cfg: CliConfig, files: dict, extra: dict) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, text in files.items():
        data = text.encode()
        (cfg.out_dir / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "tool": "mfhawkes",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "resolved_config": cfg.resolved(),
        "root_seed": int(cfg.seed),
        "overrides": cfg.overrides,
        "threads": cfg.threads,
        "files": checksums,
        **extra,
    }
    (cfg.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config, args.subcommand), args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"config error: cannot read {args.config}: {err}", file=sys.stderr)
        return 2
    try:
        files, extra = COMMANDS[cfg.subcommand](cfg)
        _write_outputs(cfg, files, extra)
    except Exception as err:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
