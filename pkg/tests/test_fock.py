import math

import numpy as np
import pytest
import scipy.linalg

from bcsif.covariance import covariance
from bcsif.fock import (
    FockSpace,
    band_partition_check,
    build_band_operators,
    build_spin_operators,
    covariance_from_traces,
    exact_correlation_ratio,
    exact_partition_ratio,
    free_partition_check,
    hs_correlation,
    hs_partition,
    partition_equality_inside,
    periodic_reduction_check,
    reality_periodicity_check,
    thermal_expectation,
    trace_exp,
)
from bcsif.model import ModelParams, ValidationError


def test_anticommutation():
    fs = FockSpace(range(4))
    for i in range(4):
        for j in range(4):
            ac = fs.a(i) @ fs.adag(j) + fs.adag(j) @ fs.a(i)
            ref = fs.identity() if i == j else fs.zero()
            assert abs(ac - ref).max() == 0
            assert abs(fs.a(i) @ fs.a(j) + fs.a(j) @ fs.a(i)).max() == 0


def test_mode_cap():
    with pytest.raises(ValidationError):
        FockSpace(range(17))


def test_single_site_h0_diagonal():
    ops = build_spin_operators(ModelParams(L=1))
    H0 = ops.dense("H0")
    assert np.array_equal(H0, np.diag(np.diag(H0)))
    assert np.allclose(np.diag(H0).real, 2.0 * ops.space.weight([0, 1]))


def test_sz_commutes_with_h():
    ops = build_spin_operators(ModelParams(L=2, U=-0.7))
    H, Sz = ops.dense("H"), ops.dense("Sz")
    assert np.abs(H @ Sz - Sz @ H).max() < 1e-14


def test_a2_is_a1_times_pair_annihilator():
    p = ModelParams(L=3)
    ops = build_spin_operators(p)
    fs = ops.space
    iy = p.site_index(p.pair_sites()[1])
    pair = (fs.adag(2 * iy) @ fs.adag(2 * iy + 1)).conj().T
    assert abs(ops["A2"] - ops["A1"] @ pair).max() == 0


def test_trace_exp_basic():
    assert trace_exp(np.zeros((5, 5)), 1.3) == pytest.approx(5)
    lam = np.array([0.1, -0.4, 2.0])
    assert abs(trace_exp(np.diag(lam), 0.7) - np.exp(-0.7 * lam).sum()) < 1e-13
    rng = np.random.default_rng(0)
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    K = (A + A.conj().T) / 2
    ref = np.exp(-0.9 * np.linalg.eigvalsh(K)).sum()
    assert abs(trace_exp(K, 0.9) - ref) < 1e-10 * abs(ref)


def test_free_partition_single_site():
    r = free_partition_check(ModelParams(L=1))
    assert r["product"].real == pytest.approx((1 + math.exp(-2)) ** 2, abs=1e-6)
    assert r["abs_err"] < 1e-12


def test_free_partition_near_vanishing():
    r = free_partition_check(ModelParams(L=2, theta=2 * math.pi - 1e-6))
    assert r["abs_err"] < 1e-9


def test_random_products_l3():
    rng = np.random.default_rng(11)
    for _ in range(5):
        beta = rng.uniform(0.2, 3)
        p = ModelParams(L=3, beta=beta, theta=rng.uniform(0, 2 * math.pi / beta), mu=rng.uniform(-1.9, 1.9),
                        hop=int(rng.integers(0, 2)))
        r = free_partition_check(p)
        assert r["abs_err"] < 1e-10 * abs(r["product"])
        b = band_partition_check(p, complex(*rng.normal(size=2)))
        assert b["abs_err"] < 1e-10 * abs(b["product"])


def test_reality_hermitian_case():
    recs = reality_periodicity_check(ModelParams(L=2, U=-0.5, gamma=0.3))
    assert recs[0]["abs_err"] < 1e-12


def test_reality_and_periodicity():
    recs = reality_periodicity_check(ModelParams(L=2, theta=1.7, U=-0.5, gamma=0.4))
    assert all(r["pass"] for r in recs)


def test_periodic_reduction():
    p = ModelParams(L=2, beta=1.0, U=-0.5, gamma=0.2)
    assert periodic_reduction_check(p, 2 * math.pi + 1.3)["pass"]


def test_covariance_from_traces_matches_closed_form():
    rng = np.random.default_rng(8)
    p = ModelParams(L=2, theta=0.9, mu=0.2)
    for _ in range(16):
        phi = complex(*rng.normal(size=2)) * 0.5
        X = (int(rng.integers(1, 3)), (int(rng.integers(0, 2)),), rng.uniform(0, 1))
        Y = (int(rng.integers(1, 3)), (int(rng.integers(0, 2)),), rng.uniform(0, 1))
        assert abs(covariance_from_traces(p, phi, X, Y) - covariance(p, phi, X, Y)) < 1e-8


def test_equal_time_occupation_and_jump():
    p = ModelParams(L=2)
    n = covariance_from_traces(p, 0.0, (1, (0,), 0.4), (1, (0,), 0.4))
    assert abs(n.imag) < 1e-12 and 0 <= n.real <= 1
    eps = 1e-12
    before = covariance_from_traces(p, 0.3, (1, (0,), 0.4 - eps), (1, (0,), 0.4))
    after = covariance_from_traces(p, 0.3, (1, (0,), 0.4), (1, (0,), 0.4))
    assert abs(after - before - 1) < 1e-9


@pytest.mark.parametrize("L", [1, 2])
def test_partition_equality_inside(L):
    p = ModelParams(L=L, theta=1.1, U=-0.6, gamma=0.3)
    lam = (0.2, 0.1 if L > 1 else 0.0)
    r = partition_equality_inside(p, 0.3 - 0.2j, -0.1 + 0.4j, lam)
    assert r["abs_err"] < 1e-9 * abs(r["rhs"])


def test_hs_partition_single_site():
    p = ModelParams(L=1, theta=1.0, U=-0.5, gamma=0.2)
    assert abs(hs_partition(p) / exact_partition_ratio(p) - 1) < 1e-6


def test_hs_small_coupling_limit():
    p = ModelParams(L=1, theta=1.0, U=-1e-3, gamma=0.2)
    free = exact_partition_ratio(p.replace(U=-1e-14))
    assert abs(hs_partition(p) / free - 1) < 1e-4


def test_hs_correlation_real_when_hermitian():
    p = ModelParams(L=1, U=-0.5, gamma=0.2)
    v = hs_correlation(p, 1)
    assert abs(v.imag) < 1e-8
    assert abs(v / exact_correlation_ratio(p, 1) - 1) < 1e-6


def test_hs_node_floor():
    with pytest.raises(ValidationError):
        hs_partition(ModelParams(L=1), nodes=10)


def test_symmetry_forces_zero_pairing():
    assert abs(thermal_expectation(ModelParams(L=2, theta=0.8, U=-1.0), "A1")) < 1e-10


def test_pairing_equals_adjoint():
    p = ModelParams(L=2, theta=0.8, U=-1.0, gamma=0.4)
    assert abs(thermal_expectation(p, "A1") - thermal_expectation(p, "A1*")) < 1e-12


def test_thermal_expectation_against_dense():
    p = ModelParams(L=2, theta=0.8, U=-1.0, gamma=0.4)
    ops = build_spin_operators(p)
    K = (ops["H"] + 1j * p.theta * ops["Sz"] + ops["F"]).toarray()
    E = scipy.linalg.expm(-p.beta * K)
    ref = np.trace(E @ ops.dense("A2")) / np.trace(E)
    assert abs(thermal_expectation(p, "A2") - ref) < 1e-12


def test_band_operators_conserve_number():
    bo = build_band_operators(ModelParams(L=2), 0.3 + 0.1j)
    H, N = bo.dense("H0phi"), bo.dense("N")
    assert np.abs(H @ N - N @ H).max() < 1e-14
