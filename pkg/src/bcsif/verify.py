"""Verification suites driven by the CLI; each returns a list of check records."""

from __future__ import annotations

import math

import numpy as np

from bcsif import covariance as cov
from bcsif import fock, grassmann
from bcsif.fock import _record
from bcsif.model import ModelParams
from bcsif.potential import (
    eval_F,
    grad_hess_F,
    maximize_F_L,
    maximize_f_L,
    mp_maximizer,
)

SUITES = ["traces", "covariance", "hs", "grassmann", "detbound", "potential"]


def _fits(p: ModelParams) -> bool:
    return 2 * p.nsites <= fock.MODE_CAP


def _trace_sizes(p: ModelParams) -> list:
    return [L for L in sorted({1, 2, p.L}) if _fits(p.replace(L=L, xhat=None, yhat=None))]


def suite_traces(p: ModelParams, seed: int = 0, **_) -> list:
    rng = np.random.default_rng(seed)
    recs = []
    for L in _trace_sizes(p):
        q = p.replace(L=L, xhat=None, yhat=None)
        r = fock.free_partition_check(q)
        recs.append(_record(f"free partition L={L}", r["trace"], r["product"], 1e-10))
        phi = complex(rng.normal(), rng.normal()) * 0.5
        r = fock.band_partition_check(q, phi)
        recs.append(_record(f"band partition L={L}", r["trace"], r["product"], 1e-10))
        for rec in fock.reality_periodicity_check(q):
            rec["check"] = f"{rec['check']} L={L}"
            recs.append(rec)
        lam = (0.1, 0.05 if q.pair_sites()[1] is not None else 0.0)
        phi, xi = complex(*rng.normal(size=2)) * 0.5, complex(*rng.normal(size=2)) * 0.5
        r = fock.partition_equality_inside(q, phi, xi, lam)
        recs.append(_record(f"auxiliary-field trace identity L={L}", r["lhs"], r["rhs"], 1e-9))
    return recs


def suite_covariance(p: ModelParams, seed: int = 0, M: float = 2 * math.pi, **_) -> list:
    rng = np.random.default_rng(seed)
    q = p if 2 * p.nsites <= 12 else p.replace(L=2, xhat=None, yhat=None)
    recs = []
    for i in range(4):
        phi = complex(*rng.normal(size=2)) * 0.5
        X = (int(rng.integers(1, 3)), tuple(rng.integers(0, q.L, q.d)), float(rng.uniform(0, q.beta)))
        Y = (int(rng.integers(1, 3)), tuple(rng.integers(0, q.L, q.d)), float(rng.uniform(0, q.beta)))
        recs.append(_record(f"closed form vs Fock trace #{i}", cov.covariance(q, phi, X, Y),
                            fock.covariance_from_traces(q, phi, X, Y), 1e-8))
    phi = 0.3 + 0.2j
    for mult in (2, 4, 8):
        h = mult / p.beta
        nt = mult
        X = [(int(rng.integers(1, 3)), tuple(rng.integers(0, p.L, p.d)), int(rng.integers(0, nt)) / h)
             for _ in range(8)]
        Y = [(int(rng.integers(1, 3)), tuple(rng.integers(0, p.L, p.d)), int(rng.integers(0, nt)) / h)
             for _ in range(8)]
        a = cov.covariance_matsubara(p, phi, h, X, Y)
        b = cov.covariance(p, phi, X, Y)
        k = int(np.argmax(np.abs(a - b)))
        recs.append(_record(f"Matsubara sum vs closed form, beta*h={mult}", a[k], b[k], 1e-9, rel=False))
    for s_idx in (-3, 0, 2):
        h = 4 / p.beta
        lhs, rhs = cov.matsubara_scalar_identity(0.7 + 0.4j, p.beta, h, s_idx / h)
        recs.append(_record(f"scalar Matsubara identity s={s_idx}/h", lhs, rhs, 1e-10, rel=False))
    sd = cov.scale_decomposition(p, phi, M=M)
    nt = int(round(p.beta * sd.h))
    X = [(int(rng.integers(1, 3)), tuple(rng.integers(0, p.L, p.d)), int(rng.integers(0, nt)) / sd.h)
         for _ in range(16)]
    Y = [(int(rng.integers(1, 3)), tuple(rng.integers(0, p.L, p.d)), int(rng.integers(0, nt)) / sd.h)
         for _ in range(16)]
    total = sum(sd.covariance(l, X, Y) for l in sd.scales)
    tau = np.array([x[2] - y[2] for x, y in zip(X, Y)])
    ref = np.exp(-1j * np.pi * tau / p.beta) * cov.covariance(p, phi, X, Y)
    k = int(np.argmax(np.abs(total - ref)))
    recs.append(_record("scale decomposition sum", total[k], ref[k], 1e-9, rel=False))
    w = rng.uniform(-math.pi * sd.h, math.pi * sd.h, 1000)
    s = sum(sd.cutoff(l, w) for l in range(sd.N_beta, sd.N_h + 1))
    k = int(np.argmax(np.abs(s - 1)))
    recs.append(_record("cutoff partition of unity", s[k], 1.0, 1e-12, rel=False))
    C = cov.equal_time_forms(p, phi, (0,) * p.d, (0,) * p.d)
    direct = cov.covariance(p, phi, (1, (0,) * p.d, 0.0), (2, (0,) * p.d, 0.0))
    recs.append(_record("equal-time (1,2) entry", C[0, 1], direct, 1e-10, rel=False))
    return recs


def suite_hs(p: ModelParams, hs_nodes: int = 24, **_) -> list:
    q = p if p.nsites <= 2 else p.replace(L=2, d=1, xhat=None, yhat=None)
    recs = [_record(f"auxiliary-field partition L={q.L}", fock.hs_partition(q, hs_nodes),
                    fock.exact_partition_ratio(q), 1e-6)]
    for j in (1, 2):
        if j == 2 and q.pair_sites()[1] is None:
            continue
        recs.append(_record(f"auxiliary-field correlation A{j} L={q.L}", fock.hs_correlation(q, j, hs_nodes),
                            fock.exact_correlation_ratio(q, j), 1e-6))
    return recs


def suite_grassmann(p: ModelParams, **_) -> list:
    q = p.replace(L=1, d=1, xhat=None, yhat=None)
    recs = []
    errs = {}
    for mult in (2, 4):
        h = mult / q.beta
        r = grassmann.partition_via_grassmann(q, h)
        recs.append(_record(f"series element equals exp(-V-F-A), beta*h={mult}", r["coefficient_error"], 0.0,
                            1e-12, rel=False))
        recs.append(_record(f"unconstrained series equals Grassmann integral, beta*h={mult}",
                            r["ph_unconstrained"], r["grassmann"], 1e-12))
        errs[mult] = abs(r["grassmann"] - r["trace_ratio"])
    rec = _record("trace-ratio error shrinks from beta*h=2 to 4", errs[4], errs[2], math.inf, rel=False)
    rec["pass"] = bool(errs[4] < errs[2])
    recs.append(rec)
    r = grassmann.hs_identity_check(q, 2 / q.beta)
    recs.append(_record("auxiliary-field identity on the algebra, beta*h=2", r["abs_err"], 0.0, 1e-10, rel=False))
    return recs


def suite_detbound(p: ModelParams, seed: int = 0, fuzz_trials: int = 1000, **_) -> list:
    recs = []
    for n in (1, 3, 6):
        r = cov.determinant_bound_fuzz(p, 0.3 + 0.1j, n, 4, fuzz_trials, seed=seed + n)
        recs.append(_record(f"determinant bound violations n={n}", r["violations"], 0, 0.5, rel=False))
        recs.append(_record(f"Gram bound violations n={n}", r["gram_violations"], 0, 0.5, rel=False))
    return recs


def _fd(params, x, step=1e-5):
    g = np.zeros(2)
    H = np.zeros((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        g[i] = (eval_F(params, x + e) - eval_F(params, x - e)) / (2 * step)
        gp, _ = grad_hess_F(params, x + e)
        gm, _ = grad_hess_F(params, x - e)
        H[:, i] = (gp - gm) / (2 * step)
    return g, H


def suite_potential(p: ModelParams, seed: int = 0, **_) -> list:
    rng = np.random.default_rng(seed)
    q = p.replace(gamma=p.gamma if p.gamma > 0 else 0.2)
    recs = []
    for i in range(5):
        x = rng.uniform(-1.5, 1.5, 2)
        g, H = grad_hess_F(q, x)
        gf, Hf = _fd(q, x)
        recs.append(_record(f"gradient vs finite difference #{i}", np.linalg.norm(g - gf), 0.0,
                            1e-5 * max(1.0, np.linalg.norm(gf)), rel=False))
        recs.append(_record(f"Hessian vs finite difference #{i}", np.linalg.norm(H - Hf), 0.0,
                            1e-5 * max(1.0, np.linalg.norm(Hf)), rel=False))
    a = float(mp_maximizer(q.replace(L=512), "a", dps=30))
    _, H = grad_hess_F(q, (a, 0.0))
    recs.append(_record("d2F/dx2^2 at the maximizer", H[1, 1], -2 * q.gamma / (q.absU * a), 1e-6, rel=False))
    recs.append(_record("d2F/dx1dx2 at the maximizer", H[0, 1], 0.0, 1e-6, rel=False))
    if q.d == 1:
        import mpmath

        with mpmath.workdps(60):
            ref = mp_maximizer(q, "a", n=512, dps=60)
            errs = [abs(maximize_F_L(q.replace(L=L), dps=60) - ref) for L in (8, 16, 32, 64)]
            rec = _record("a_L errors strictly decrease over L=8..64", float(errs[-1]), float(errs[0]), math.inf,
                          rel=False)
            rec["pass"] = bool(all(errs[i + 1] < errs[i] for i in range(3)))
            recs.append(rec)
            refd = mp_maximizer(q, "delta", n=512, dps=60)
            if refd > 0:
                errs = [abs(maximize_f_L(q.replace(L=L), dps=60) - refd) for L in (8, 16, 32, 64)]
                rec = _record("Delta_L errors non-increasing over L=8..64", float(errs[-1]), float(errs[0]),
                              math.inf, rel=False)
                rec["pass"] = bool(all(errs[i + 1] <= errs[i] for i in range(3)))
                recs.append(rec)
    return recs


_RUNNERS = {
    "traces": suite_traces,
    "covariance": suite_covariance,
    "hs": suite_hs,
    "grassmann": suite_grassmann,
    "detbound": suite_detbound,
    "potential": suite_potential,
}


def run_suite(name: str, params: ModelParams, **kw) -> list:
    return _RUNNERS[name](params, **kw)
