"""Kernels, transfer functions and the population configuration.

Kernels and transfer functions are closed families with closed-form
antiderivatives and supremum bounds, so that thinning always has a trusted
dominating rate and the limit oracles can be written in closed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

KernelFamily = Literal["exponential", "erlang", "zero"]
TransferFamily = Literal["constant", "sigmoid"]
Regime = Literal["subcritical", "critical"]

KERNEL_FAMILIES = ("exponential", "erlang", "zero")
TRANSFER_FAMILIES = ("constant", "sigmoid")
REGIMES = ("subcritical", "critical")

# integer codes used by the compiled inner loops
KERNEL_CODES = {"zero": 0, "exponential": 1, "erlang": 2}
TRANSFER_CODES = {"constant": 0, "sigmoid": 1}


class ConfigError(ValueError):
    """Invalid configuration value.

    ``path`` is a JSON pointer to the offending field (e.g. ``/kernel/rate``).
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Kernel:
    """Interaction kernel phi on [0, inf).

    * ``exponential``: ``a * exp(-rate * t)``
    * ``erlang``: ``a * t * exp(-rate * t)`` (shape 2, so ``phi(0) = 0``)
    * ``zero``: ``0``
    """

    family: KernelFamily = "exponential"
    rate: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigError("/family", f"must be one of {list(KERNEL_FAMILIES)}, got {self.family!r}")
        if self.family != "zero":
            if not (math.isfinite(self.rate) and self.rate > 0):
                raise ConfigError("/rate", f"must be a finite positive number, got {self.rate!r}")
            if not math.isfinite(self.amplitude):
                raise ConfigError("/amplitude", f"must be finite, got {self.amplitude!r}")

    @classmethod
    def exponential(cls, rate: float = 1.0, amplitude: float = 1.0) -> "Kernel":
        return cls("exponential", float(rate), float(amplitude))

    @classmethod
    def erlang(cls, rate: float = 1.0, amplitude: float = 1.0) -> "Kernel":
        return cls("erlang", float(rate), float(amplitude))

    @classmethod
    def zero(cls) -> "Kernel":
        return cls("zero", 1.0, 0.0)

    @property
    def code(self) -> int:
        return KERNEL_CODES[self.family]

    @property
    def bound(self) -> float:
        """sup |phi| over [0, inf)."""
        if self.family == "exponential":
            return abs(self.amplitude)
        if self.family == "erlang":
            return abs(self.amplitude) / (self.rate * math.e)
        return 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lam, a = self.rate, self.amplitude
        if self.family == "exponential":
            return a * np.exp(-lam * t)
        if self.family == "erlang":
            return a * t * np.exp(-lam * t)
        return np.zeros_like(t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        lam, a = self.rate, self.amplitude
        if self.family == "exponential":
            return -lam * a * np.exp(-lam * t)
        if self.family == "erlang":
            return a * (1.0 - lam * t) * np.exp(-lam * t)
        return np.zeros_like(t)

    def integral(self, t):
        """Antiderivative ``int_0^t phi(u) du``."""
        t = np.asarray(t, dtype=float)
        lam, a = self.rate, self.amplitude
        if self.family == "exponential":
            return a * -np.expm1(-lam * t) / lam
        if self.family == "erlang":
            return a * (1.0 - np.exp(-lam * t) * (1.0 + lam * t)) / lam**2
        return np.zeros_like(t)

    def squared_integral(self, t):
        """``int_0^t phi(u)**2 du``."""
        t = np.asarray(t, dtype=float)
        lam, a = self.rate, self.amplitude
        if self.family == "exponential":
            return a**2 * -np.expm1(-2.0 * lam * t) / (2.0 * lam)
        if self.family == "erlang":
            x = 2.0 * lam * t
            return a**2 * (1.0 - np.exp(-x) * (1.0 + x + 0.5 * x * x)) / (4.0 * lam**3)
        return np.zeros_like(t)

    def to_dict(self) -> dict:
        if self.family == "zero":
            return {"family": "zero"}
        return {"family": self.family, "rate": self.rate, "amplitude": self.amplitude}


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class Transfer:
    """Bounded nonnegative transfer function h.

    ``constant``: h(x) = c.  ``sigmoid``: h(x) = hmax / (1 + exp(-slope (x - center))).
    """

    family: TransferFamily = "sigmoid"
    c: float = 1.0
    hmax: float = 1.0
    slope: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.family not in TRANSFER_FAMILIES:
            raise ConfigError("/family", f"must be one of {list(TRANSFER_FAMILIES)}, got {self.family!r}")
        if self.family == "constant":
            if not (math.isfinite(self.c) and self.c >= 0):
                raise ConfigError("/c", f"must be a finite number >= 0, got {self.c!r}")
        else:
            if not (math.isfinite(self.hmax) and self.hmax > 0):
                raise ConfigError("/hmax", f"must be a finite positive number, got {self.hmax!r}")
            if not (math.isfinite(self.slope) and self.slope > 0):
                raise ConfigError("/slope", f"must be a finite positive number, got {self.slope!r}")
            if not math.isfinite(self.center):
                raise ConfigError("/center", f"must be finite, got {self.center!r}")

    @classmethod
    def constant(cls, c: float) -> "Transfer":
        return cls("constant", c=float(c))

    @classmethod
    def sigmoid(cls, hmax: float = 1.0, slope: float = 1.0, center: float = 0.0) -> "Transfer":
        return cls("sigmoid", hmax=float(hmax), slope=float(slope), center=float(center))

    @property
    def code(self) -> int:
        return TRANSFER_CODES[self.family]

    @property
    def params(self) -> tuple[float, float, float]:
        """Packed parameters for the compiled loops."""
        if self.family == "constant":
            return (self.c, 0.0, 0.0)
        return (self.hmax, self.slope, self.center)

    @property
    def bound(self) -> float:
        """sup h, the dominating rate used for thinning."""
        return self.c if self.family == "constant" else self.hmax

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self.c)
        return self.hmax * _expit(self.slope * (x - self.center))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.zeros_like(x)
        s = _expit(self.slope * (x - self.center))
        return self.hmax * self.slope * s * (1.0 - s)

    def to_dict(self) -> dict:
        if self.family == "constant":
            return {"family": "constant", "c": self.c}
        return {"family": "sigmoid", "hmax": self.hmax, "slope": self.slope, "center": self.center}


@dataclass(frozen=True)
class PopulationConfig:
    n: int
    p: float
    regime: Regime = "subcritical"
    kernel: Kernel = field(default_factory=Kernel)
    transfer: Transfer = field(default_factory=Transfer)
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigError("/n", f"must be an integer >= 1, got {self.n!r}")
        if not (isinstance(self.p, (int, float)) and 0.0 <= self.p <= 1.0):
            raise ConfigError("/p", f"must lie in [0, 1], got {self.p!r}")
        if self.regime not in REGIMES:
            raise ConfigError("/regime", f"must be one of {list(REGIMES)}, got {self.regime!r}")
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon) and self.horizon >= 0):
            raise ConfigError("/horizon", f"must be a finite number >= 0, got {self.horizon!r}")
        if (isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer))
                or not 0 <= self.seed < 2**64):
            raise ConfigError("/seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def theta(self) -> float:
        """Interaction scaling: 1/N (subcritical) or 1/sqrt(N) (critical)."""
        return 1.0 / self.n if self.regime == "subcritical" else 1.0 / math.sqrt(self.n)

    def replace(self, **changes) -> "PopulationConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "p": self.p,
            "regime": self.regime,
            "kernel": self.kernel.to_dict(),
            "transfer": self.transfer.to_dict(),
            "horizon": self.horizon,
            "seed": int(self.seed),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj: Any, path: str = "") -> "PopulationConfig":
        return parse_population(obj, path)

    @classmethod
    def from_json(cls, text: str) -> "PopulationConfig":
        return parse_population(strict_json_loads(text))


# ---------------------------------------------------------------------------
# strict JSON parsing

def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"/{key}", "duplicate key")
        out[key] = value
    return out


def strict_json_loads(text: str) -> Any:
    """``json.loads`` that rejects duplicate object keys."""
    return json.loads(text, object_pairs_hook=_reject_duplicates)


def _expect_object(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise ConfigError(path or "/", "expected a JSON object")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}/{key}", f"unknown field (allowed: {sorted(allowed)})")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}/{key}", "missing required field")


def _number(obj, key, path):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}/{key}", f"expected a number, got {value!r}")
    return float(value)


def _integer(obj, key, path):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}/{key}", f"expected an integer, got {value!r}")
    return value


def _enum(obj, key, path, allowed):
    value = obj[key]
    if value not in allowed:
        raise ConfigError(f"{path}/{key}", f"expected one of {list(allowed)}, got {value!r}")
    return value


def _rebase(err: ConfigError, path: str) -> ConfigError:
    return ConfigError(path + err.path, str(err).split(": ", 1)[1])


def parse_kernel(obj, path="/kernel") -> Kernel:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError(f"{path}/family", "missing required field")
    family = _enum(obj, "family", path, KERNEL_FAMILIES)
    if family == "zero":
        _expect_object(obj, path, ["family"])
        return Kernel.zero()
    _expect_object(obj, path, ["family", "rate", "amplitude"])
    try:
        return Kernel(family, _number(obj, "rate", path), _number(obj, "amplitude", path))
    except ConfigError as err:
        if err.path.startswith(path):
            raise
        raise _rebase(err, path) from None


def parse_transfer(obj, path="/transfer") -> Transfer:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError(f"{path}/family", "missing required field")
    family = _enum(obj, "family", path, TRANSFER_FAMILIES)
    try:
        if family == "constant":
            _expect_object(obj, path, ["family", "c"])
            return Transfer.constant(_number(obj, "c", path))
        _expect_object(obj, path, ["family", "hmax", "slope", "center"])
        return Transfer.sigmoid(_number(obj, "hmax", path), _number(obj, "slope", path),
                                _number(obj, "center", path))
    except ConfigError as err:
        if err.path.startswith(path):
            raise
        raise _rebase(err, path) from None


POPULATION_FIELDS = ("n", "p", "regime", "kernel", "transfer", "horizon", "seed")


def parse_population(obj, path: str = "", extra: tuple[str, ...] = ()) -> PopulationConfig:
    """Build a config from parsed JSON, rejecting unknown fields.

    ``extra`` names additional keys the caller handles itself.
    """
    _expect_object(obj, path, POPULATION_FIELDS, extra)
    kernel = parse_kernel(obj["kernel"], f"{path}/kernel")
    transfer = parse_transfer(obj["transfer"], f"{path}/transfer")
    regime = _enum(obj, "regime", path, REGIMES)
    try:
        return PopulationConfig(
            n=_integer(obj, "n", path),
            p=_number(obj, "p", path),
            regime=regime,
            kernel=kernel,
            transfer=transfer,
            horizon=_number(obj, "horizon", path),
            seed=_integer(obj, "seed", path),
        )
    except ConfigError as err:
        if path and not err.path.startswith(path):
            raise _rebase(err, path) from None
        raise


# ---------------------------------------------------------------------------
# signs

def draw_signs(config: PopulationConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw U_1..U_N iid with P(U = +1) = p; returns an int8 array of +-1."""
    u = rng.random(config.n)
    return np.where(u < config.p, 1, -1).astype(np.int8)


def sign_statistic(signs, p: float) -> float:
    """W_N = N**-0.5 * sum(U_j + 1 - 2p)."""
    signs = np.asarray(signs, dtype=float)
    return float(np.sum(signs + 1.0 - 2.0 * p) / math.sqrt(signs.size))
