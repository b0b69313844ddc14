import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcsif.gap import a_of_gamma, solve_gap
from bcsif.potential import (
    eval_F,
    eval_F_L,
    eval_f,
    grad_hess_F,
    laplace_prediction,
    maximize_F_L,
    maximize_f_L,
    mp_maximizer,
    potential_report,
)
from bcsif.model import ModelParams, ValidationError

P = ModelParams(beta=1.0, U=-1.0, gamma=0.3)


def test_quadratic_term_vanishes_at_field():
    # at x = (gamma, 0) the coupling enters only through the quadratic term, which is zero
    x = (P.gamma, 0.0)
    assert eval_F(P, x) == pytest.approx(eval_F(P.replace(U=-1e6), x), abs=1e-15)
    assert eval_F(P.replace(U=-1e6), (1.0, 0.0)) != eval_F(P, (1.0, 0.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_reflection_symmetry(x1, x2):
    assert eval_F(P, (x1, x2)) == eval_F(P, (x1, -x2))


def test_finite_volume_converges():
    p = ModelParams(mu=0.5, beta=2.0, U=-1.0)
    ref = eval_F(p, (0.3, 0.1))
    errs = [abs(eval_F_L(p.replace(L=L), (0.3, 0.1)) - ref) for L in (8, 16, 32)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert abs(eval_F_L(p.replace(L=64), (0.3, 0.1)) - ref) <= errs[-1]


def test_hessian_identities_at_maximizer():
    rep = potential_report(P)
    a = rep.maximizer
    assert abs(rep.hessian[1, 1] + 2 * P.gamma / (P.absU * a)) < 1e-6 * abs(rep.hessian[1, 1])
    assert abs(rep.hessian[0, 1]) < 1e-8
    assert np.linalg.norm(rep.gradient) < 1e-10


def test_gradient_hessian_finite_difference():
    rng = np.random.default_rng(7)
    step = 1e-5
    for _ in range(20):
        x = rng.uniform(-1.5, 1.5, 2)
        g, H = grad_hess_F(P, x)
        for i in range(2):
            e = np.zeros(2)
            e[i] = step
            fd = (eval_F(P, x + e) - eval_F(P, x - e)) / (2 * step)
            assert abs(fd - g[i]) < 1e-5 * max(1.0, abs(g[i]))
            hd = (grad_hess_F(P, x + e)[0] - grad_hess_F(P, x - e)[0]) / (2 * step)
            assert np.all(np.abs(hd - H[:, i]) < 1e-5 * max(1.0, np.abs(H).max()))


def test_a_L_converges_strictly():
    with mpmath.workdps(60):
        ref = mp_maximizer(P, "a", n=512, dps=60)
        errs = [abs(maximize_F_L(P.replace(L=L), dps=60) - ref) for L in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert float(ref) == pytest.approx(a_of_gamma(P), abs=1e-12)


def test_delta_L_converges_strictly():
    p = ModelParams(theta=1.8 * math.pi, U=-1.0)
    errs = [abs(maximize_f_L(p.replace(L=L)) - solve_gap(p).delta) for L in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_small_field_reduces_to_radial_maximizer():
    p = ModelParams(L=32, beta=10, U=-3.0, gamma=1e-8)
    assert abs(maximize_F_L(p) - maximize_f_L(p)) < 1e-4


def test_radial_maximizer_zero_when_unsolvable():
    assert maximize_f_L(ModelParams(L=16, theta=0.5, U=-0.5)) == 0.0


def test_laplace_prediction_sign_and_limits():
    p = ModelParams(beta=10, U=-3.0, gamma=0.05)
    pred = laplace_prediction(p)
    assert pred["a_gamma"] > pred["delta"] > 0
    assert pred["ssb_pred"] < 0
    small = laplace_prediction(p.replace(gamma=1e-7))
    assert small["ssb_pred"] == pytest.approx(-small["delta"] / 3, abs=1e-6)
    assert laplace_prediction(ModelParams(theta=0.5, U=-0.5))["odlro_pred"] == 0


def test_report_needs_field():
    with pytest.raises(ValidationError):
        potential_report(P.replace(gamma=0.0))
