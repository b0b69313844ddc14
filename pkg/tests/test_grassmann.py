import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcsif.covariance import covariance
from bcsif.fock import spin_two_point
from bcsif.grassmann import (
    GrassmannElement,
    build_actions,
    covariance_G,
    exp_element,
    gaussian_integral,
    gaussian_integral_wick,
    hs_identity_check,
    log_element,
    log_moment_check,
    partition_via_grassmann,
    scalar_hs_prototype,
)
from bcsif.model import ModelParams, ValidationError

G = GrassmannElement


def _random_even(n, rng, density=0.5, constant=0.0):
    terms = {0: constant}
    for m in range(1, 2**n):
        if m.bit_count() % 2 == 0 and rng.random() < density:
            terms[m] = complex(*rng.normal(size=2))
    return G(n, terms)


def test_anticommuting_generators():
    a, b = G.generator(4, 0), G.generator(4, 1)
    assert (a * b).max_abs_diff(-(b * a)) == 0
    assert (a * a).terms == {}


def test_even_pairs_commute():
    f = (1 + G.monomial(4, [0, 1])) * (1 + G.monomial(4, [2, 3]))
    assert len(f.terms) == 4
    assert all(c == 1 for c in f.terms.values())


def test_cap():
    with pytest.raises(ValidationError):
        G(25)


def test_gaussian_integral_basics():
    rng = np.random.default_rng(0)
    D = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert gaussian_integral(G.scalar(4, 1.0), D) == 1
    for x, y in itertools.product(range(2), repeat=2):
        assert gaussian_integral(G.monomial(4, [2 * x, 2 * y + 1]), D) == pytest.approx(D[x, y])
    four = G.monomial(4, [0, 2, 3, 1])
    det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    assert gaussian_integral(four, D) == pytest.approx(det)
    assert gaussian_integral_wick(four, D) == pytest.approx(det)


def test_determinant_and_wick_agree():
    rng = np.random.default_rng(1)
    D = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    f = G(8, {m: complex(*rng.normal(size=2)) for m in range(256)})
    assert abs(gaussian_integral(f, D) - gaussian_integral_wick(f, D)) < 1e-12


def test_log_inverts_exp():
    rng = np.random.default_rng(2)
    f = _random_even(8, rng)
    assert log_element(exp_element(f)).max_abs_diff(f) < 1e-12
    assert exp_element(G(8)).max_abs_diff(G.scalar(8, 1.0)) == 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exp_of_sum(seed):
    rng = np.random.default_rng(seed)
    f, g = _random_even(6, rng, 0.3), _random_even(6, rng, 0.3)
    assert exp_element(f + g).max_abs_diff(exp_element(f) * exp_element(g)) < 1e-10


P1 = ModelParams(L=1, theta=1.0, U=-0.3, gamma=0.2)


def test_pair_fields_square_to_interaction():
    act = build_actions(P1, 2.0)
    assert (act["Vplus"] * act["Vminus"]).max_abs_diff(-act["W"]) < 1e-15


def test_actions_structure():
    a = build_actions(ModelParams(L=2, U=-0.3, gamma=0.2), 2.0, lam=(0.5, 0.25))
    b = build_actions(ModelParams(L=2, U=-0.3, gamma=0.2), 2.0, lam=(1.0, 0.5))
    assert (a["A"] * 2).max_abs_diff(b["A"]) < 1e-15
    assert all(m.bit_count() == 2 for m in a["F"].terms)
    band = build_actions(P1, 2.0, kind="band")
    assert band["V"].is_even()


def test_spin_covariance_properties():
    p = ModelParams(L=2, theta=0.7)
    assert covariance_G(p, ((0,), 0, 0.3), ((1,), 1, 0.1)) == 0
    q = p.replace(theta=0.0)
    # at theta = 0 both spins propagate with +e, like band 1 at zero field
    for X, Y in [(((0,), 0, 0.3), ((1,), 0, 0.1)), (((1,), 1, 0.2), ((1,), 1, 0.6))]:
        ref = covariance(q, 0.0, (1, X[0], X[2]), (1, Y[0], Y[2]))
        assert abs(covariance_G(q, X, Y) - ref) < 1e-12


def test_spin_covariance_against_fock():
    rng = np.random.default_rng(3)
    for _ in range(8):
        s = int(rng.integers(0, 2))
        X, Y = ((0,), s, rng.uniform(0, 1)), ((0,), s, rng.uniform(0, 1))
        assert abs(covariance_G(P1, X, Y) - spin_two_point(P1, X, Y)) < 1e-9


def test_unconstrained_series_is_the_integral():
    r = partition_via_grassmann(P1, 2.0, with_trace=False)
    assert abs(r["ph_unconstrained"] - r["grassmann"]) < 1e-12
    assert r["coefficient_error"] < 1e-12


def test_time_refinement_reduces_error():
    e2 = partition_via_grassmann(P1, 2.0)
    e4 = partition_via_grassmann(P1, 4.0)
    assert abs(e4["grassmann"] - e4["trace_ratio"]) < abs(e2["grassmann"] - e2["trace_ratio"])


def test_free_normalization():
    p = ModelParams(L=1, theta=1.0, U=-1e-14, gamma=0.0)
    r = partition_via_grassmann(p, 2.0, with_trace=False)
    assert abs(r["grassmann"] - 1) < 1e-12


def test_hs_identity_on_algebra():
    assert hs_identity_check(P1, 2.0)["abs_err"] < 1e-10


def test_hs_identity_free_case():
    r = hs_identity_check(P1.replace(U=-1e-14), 2.0)
    assert r["abs_err"] < 1e-12


def test_scalar_prototype():
    assert abs(scalar_hs_prototype(0.3, -1.1) - math.exp(-0.33)) < 1e-12


def test_log_moments():
    rng = np.random.default_rng(4)
    C = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    f = _random_even(8, rng)
    r = log_moment_check(f, C, 3)
    assert r["series"][0] == pytest.approx(gaussian_integral(f, C))
    assert np.max(np.abs(np.array(r["series"]) - np.array(r["cumulant"]))) < 1e-10
    q = G.monomial(8, [0, 1]) + G.monomial(8, [2, 5]) * 0.5
    r = log_moment_check(q, C, 2)
    m1, m2 = gaussian_integral(q, C), gaussian_integral(q * q, C)
    assert r["series"][1] == pytest.approx(0.5 * (m2 - m1 * m1))
