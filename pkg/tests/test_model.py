import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from mfhawkes.model import (ConfigError, Kernel, PopulationConfig, Transfer, draw_signs,
                            sign_statistic)
from mfhawkes.rng import stream

KERNELS = [Kernel.exponential(1.0, 1.0), Kernel.exponential(2.5, -0.7), Kernel.erlang(1.0, 1.0),
           Kernel.erlang(0.3, 2.0), Kernel.zero()]
TRANSFERS = [Transfer.constant(0.0), Transfer.constant(2.0), Transfer.sigmoid(1.0, 1.0, 0.0),
             Transfer.sigmoid(3.0, 4.0, -1.5)]


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: f"{k.family}-{k.rate}-{k.amplitude}")
def test_kernel_integrals_match_quadrature(kernel):
    for t in (0.0, 0.1, 1.0, 3.7, 10.0):
        phi_int = quad(lambda u: float(kernel(u)), 0, t, epsabs=1e-13, epsrel=1e-13)[0]
        sq_int = quad(lambda u: float(kernel(u)) ** 2, 0, t, epsabs=1e-13, epsrel=1e-13)[0]
        assert float(kernel.integral(t)) == pytest.approx(phi_int, abs=1e-8)
        assert float(kernel.squared_integral(t)) == pytest.approx(sq_int, abs=1e-8)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: f"{k.family}-{k.rate}-{k.amplitude}")
def test_kernel_derivative_finite_difference(kernel):
    t = np.linspace(0, 8, 41)
    errs = []
    for eps in (1e-3, 1e-4):
        fd = (kernel(t + eps) - kernel(t)) / eps
        errs.append(np.max(np.abs(fd - kernel.derivative(t))))
    # O(eps): shrinking eps tenfold shrinks the error about tenfold
    assert errs[1] <= 0.2 * errs[0] + 1e-12
    assert errs[0] < 1e-2


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: f"{k.family}-{k.rate}-{k.amplitude}")
def test_kernel_bounded_and_antiderivatives_start_at_zero(kernel):
    t = np.linspace(0, 50, 20001)
    assert np.all(np.abs(kernel(t)) <= kernel.bound + 1e-15)
    assert kernel.integral(0.0) == 0.0
    assert kernel.squared_integral(0.0) == 0.0
    assert np.all(np.diff(kernel.squared_integral(t)) >= -1e-15)
    if kernel.amplitude >= 0:
        assert np.all(np.diff(kernel.integral(t)) >= -1e-15)


def test_exponential_kernel_bound_is_amplitude():
    assert Kernel.exponential(3.0, 1.5).bound == 1.5
    assert np.max(Kernel.exponential(3.0, 1.5)(np.linspace(0, 5, 100))) == 1.5


def test_erlang_vanishes_at_zero():
    assert float(Kernel.erlang(2.0, 5.0)(0.0)) == 0.0


@given(x=st.floats(-1e6, 1e6, allow_nan=False))
@settings(max_examples=300)
def test_transfer_bounds_property(x):
    for h in TRANSFERS:
        v = float(h(x))
        assert 0.0 <= v <= h.bound
        d = float(h.derivative(x))
        assert abs(d) <= h.bound * (h.slope if h.family == "sigmoid" else 0.0) / 4 + 1e-15


@given(x=st.floats(-30, 30, allow_nan=False))
def test_sigmoid_strictly_positive(x):
    assert float(Transfer.sigmoid(1.0, 1.0, 0.0)(x)) > 0


@pytest.mark.parametrize("h", TRANSFERS, ids=lambda h: h.family)
def test_transfer_derivative_finite_difference(h):
    x = np.linspace(-6, 6, 121)
    eps = 1e-5
    fd = (h(x + eps) - h(x)) / eps
    assert np.max(np.abs(fd - h.derivative(x))) < 1e-4


def test_transfer_sigmoid_center_value():
    assert float(Transfer.sigmoid(2.0, 1.0, 0.0)(0.0)) == 1.0


def test_theta_follows_regime():
    assert PopulationConfig(n=16, p=0.8).theta == 1 / 16
    assert PopulationConfig(n=16, p=0.5, regime="critical").theta == 0.25


def test_draw_signs_degenerate():
    assert list(draw_signs(PopulationConfig(n=5, p=1.0), stream(1))) == [1, 1, 1, 1, 1]
    assert list(draw_signs(PopulationConfig(n=3, p=0.0), stream(1))) == [-1, -1, -1]


def test_draw_signs_balanced_mean():
    signs = draw_signs(PopulationConfig(n=10_000, p=0.5), stream(2024, 0))
    assert signs.shape == (10_000,)
    assert set(np.unique(signs)) == {-1, 1}
    # sd of the mean is 1/sqrt(1e4) = 0.01; the band is 3 sd
    assert abs(signs.mean()) < 0.03


def test_draw_signs_reproducible():
    cfg = PopulationConfig(n=100, p=0.3)
    assert np.array_equal(draw_signs(cfg, stream(9, 1, 2)), draw_signs(cfg, stream(9, 1, 2)))
    assert not np.array_equal(draw_signs(cfg, stream(9, 1, 2)), draw_signs(cfg, stream(9, 1, 3)))


def test_sign_statistic_examples():
    assert sign_statistic(np.ones(7), 1.0) == 0.0
    assert sign_statistic([1, -1], 0.5) == 0.0
    assert sign_statistic([1, 1, -1, -1, 1], 0.5) == pytest.approx(1 / math.sqrt(5))
    assert sign_statistic([1, 1, -1, -1, 1], 0.5) == pytest.approx(0.4472, abs=1e-4)


def test_sign_statistic_variance_at_half():
    cfg = PopulationConfig(n=100, p=0.5, regime="critical")
    w = np.array([sign_statistic(draw_signs(cfg, stream(5, r)), 0.5) for r in range(10_000)])
    assert abs(w.mean()) < 3 / math.sqrt(10_000)
    assert w.var() == pytest.approx(1.0, rel=0.05)


def test_config_json_round_trip():
    cfg = PopulationConfig(n=12, p=0.25, regime="critical", kernel=Kernel.erlang(2.0, -1.0),
                           transfer=Transfer.sigmoid(2.0, 0.5, 1.0), horizon=3.5, seed=2**64 - 1)
    text = cfg.to_json()
    assert set(json.loads(text)) == {"n", "p", "regime", "kernel", "transfer", "horizon", "seed"}
    assert PopulationConfig.from_json(text) == cfg
    zero = cfg.replace(kernel=Kernel.zero(), transfer=Transfer.constant(0.0))
    assert PopulationConfig.from_json(zero.to_json()) == zero


def _pop(**kw):
    d = PopulationConfig(n=4, p=0.5).to_dict()
    d.update(kw)
    return d


@pytest.mark.parametrize("patch, pointer", [
    ({"p": 1.5}, "/p"),
    ({"n": 0}, "/n"),
    ({"n": 2.5}, "/n"),
    ({"regime": "Critical"}, "/regime"),
    ({"horizon": -1}, "/horizon"),
    ({"seed": -3}, "/seed"),
    ({"seed": 2**64}, "/seed"),
    ({"kernel": {"family": "exponential", "rate": 0.0, "amplitude": 1.0}}, "/kernel/rate"),
    ({"kernel": {"family": "gamma"}}, "/kernel/family"),
    ({"transfer": {"family": "constant", "c": -1}}, "/transfer/c"),
    ({"transfer": {"family": "sigmoid", "hmax": 1, "slope": 1}}, "/transfer/center"),
    ({"extra": 1}, "/extra"),
])
def test_config_validation_names_field(patch, pointer):
    with pytest.raises(ConfigError) as err:
        PopulationConfig.from_dict(_pop(**patch))
    assert err.value.path == pointer


def test_regime_error_lists_allowed_values():
    with pytest.raises(ConfigError, match="subcritical"):
        PopulationConfig.from_dict(_pop(regime="Critical"))


def test_duplicate_key_rejected():
    text = '{"n": 4, "n": 5, "p": 0.5}'
    with pytest.raises(ConfigError, match="duplicate"):
        PopulationConfig.from_json(text)


def test_config_objects_are_immutable():
    cfg = PopulationConfig(n=4, p=0.5)
    with pytest.raises(AttributeError):
        cfg.n = 5
