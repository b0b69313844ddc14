import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcsif.model import (
    DomainError,
    ModelParams,
    ValidationError,
    coupling_window,
    dispersion,
    fermi_surface_lower_bound,
    fermi_surface_measure,
    g_function,
    momentum_grid,
    momentum_sum_ratio,
)


def test_dispersion_values():
    assert dispersion(ModelParams(d=1), [0.0]) == pytest.approx(2.0)
    assert dispersion(ModelParams(d=1), [math.pi / 2]) == pytest.approx(0.0, abs=1e-15)
    assert dispersion(ModelParams(d=2, hop=1, mu=1.0), [math.pi, math.pi]) == pytest.approx(3.0)


@pytest.mark.parametrize("kw", [
    {"beta": 0.0}, {"U": 0.5}, {"U": 0.0}, {"gamma": 1.5}, {"gamma": -0.1},
    {"theta": 2 * math.pi}, {"theta": -0.1}, {"L": 0}, {"d": 0}, {"hop": 2},
    {"mu": float("nan")}, {"L": 3, "xhat": (1,), "yhat": (4,)},
])
def test_invalid_params_rejected(kw):
    with pytest.raises(ValidationError):
        ModelParams(**kw)


def test_large_mu_warns():
    with pytest.warns(RuntimeWarning):
        ModelParams(mu=2.5)


def test_theta_bound_depends_on_beta():
    ModelParams(beta=2.0, theta=3.1)
    with pytest.raises(ValidationError):
        ModelParams(beta=2.0, theta=3.2)


def test_momentum_grid():
    g = momentum_grid(3, 2)
    assert len(g) == 9
    assert g.points.shape == (9, 2)
    assert np.allclose(sorted(set(g.points[:, 0])), 2 * np.pi * np.arange(3) / 3)


def test_pair_sites_defaults():
    assert ModelParams(L=3).pair_sites() == ((0,), (1,))
    assert ModelParams(L=1).pair_sites() == ((0,), None)
    assert ModelParams(d=2, L=2, xhat=(1, 1)).pair_sites() == ((1, 1), (0, 1))


def test_g_function_values():
    assert g_function(ModelParams(d=1), 1.0) == pytest.approx(0.5 * math.log(2), abs=1e-6)
    assert g_function(ModelParams(d=2), 1.0) == pytest.approx(math.log(2) ** (2 / 3), abs=1e-6)
    p2 = ModelParams(d=2)
    assert g_function(p2, 0.01) > g_function(p2, 0.1)
    with pytest.raises(DomainError):
        g_function(p2, 0.0)


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_g_function_decreasing(x, y):
    p = ModelParams(d=2)
    lo, hi = sorted((x, y))
    assert g_function(p, lo) >= g_function(p, hi)


def test_window_nonempty_as_Theta_shrinks():
    lowers, uppers = [], []
    for T in (1e-1, 1e-2, 1e-3, 1e-4):
        w = coupling_window(ModelParams(theta=2 * (math.pi - T)))
        lowers.append(w["lower"])
        uppers.append(w["upper"])
    assert all(b < a for a, b in zip(lowers, lowers[1:]))
    assert lowers[-1] < 1e-3
    assert uppers[-1] > 0


def test_window_empty_near_theta_zero():
    assert not coupling_window(ModelParams(theta=1e-6))["nonempty"]


def test_window_nonempty_at_small_Theta():
    w = coupling_window(ModelParams(theta=2 * (math.pi - 1e-4)))
    assert w["nonempty"]
    assert w["lower"] == pytest.approx(1e-4, rel=1e-6)


def test_window_integral_margin_reported():
    w = coupling_window(ModelParams(theta=2 * (math.pi - 1e-3)))
    assert 0 < w["upper_integral"] < w["upper"]


def test_fermi_surface_bound():
    assert fermi_surface_lower_bound(ModelParams(d=1, mu=0.7)) == 1.0
    assert fermi_surface_lower_bound(ModelParams(d=2)) == pytest.approx(0.2)


def test_fermi_surface_measure_2d():
    assert fermi_surface_measure(ModelParams(d=2), 0.0) >= 0.2
    # square level set |k1| + |k2| = pi has length 4 * sqrt(2) * pi in the torus
    assert fermi_surface_measure(ModelParams(d=2), 0.0) == pytest.approx(4 * math.sqrt(2) * math.pi, rel=1e-3)


def test_momentum_sum_ratio_stable_in_L():
    a = momentum_sum_ratio(ModelParams(L=512), 1.0)
    b = momentum_sum_ratio(ModelParams(L=1024), 1.0)
    assert abs(a - b) < 0.01 * abs(b)


def test_momentum_sum_numerator_large_K():
    p = ModelParams(L=512)
    assert momentum_sum_ratio(p, 100.0) * g_function(p, 100.0) <= 0.01


def test_momentum_sum_ratio_2d_bounded():
    p = ModelParams(d=2, L=128)
    r1, r2 = momentum_sum_ratio(p, 0.1), momentum_sum_ratio(p, 0.01)
    # the constant fixed at K=0.1 still bounds K=0.01 with 20% slack
    assert r2 <= 1.2 * r1


@settings(max_examples=50)
@given(st.floats(-1.9, 1.9), st.integers(0, 1), st.floats(0, 2 * math.pi))
def test_dispersion_bounded(mu, hop, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = ModelParams(mu=mu, hop=hop)
    assert abs(dispersion(p, [k]) + mu) <= 2 + 1e-12
