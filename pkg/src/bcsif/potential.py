"""Effective potentials F, F_L, f, f_L, their maximizers and Laplace-method targets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bcsif.gap import (
    quadrature_dispersion,
    root_above,
    a_of_gamma_values,
    gap_integral_values,
    log_cosh_shift,
    pair_kernel,
    pair_kernel_dlog,
    solve_gap,
)
from bcsif.model import ModelParams, ValidationError, dispersion, momentum_grid


@dataclass
class PotentialReport:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    maximizer: float
    second_derivative_at_max: float


def _lattice_e(params: ModelParams) -> np.ndarray:
    return dispersion(params, momentum_grid(params.L, params.d).points)


def _potential_values(params: ModelParams, e: np.ndarray, x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    beta = params.beta
    r2 = x1 * x1 + x2 * x2
    E = np.sqrt(e * e + r2)
    diff = log_cosh_shift(params, beta * E) - log_cosh_shift(params, beta * np.abs(e))
    return float(-((x1 - params.gamma) ** 2 + x2 * x2) / params.absU + np.mean(diff) / beta)


def _grad_hess_values(params: ModelParams, e: np.ndarray, x):
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    E = np.sqrt(e * e + r2)
    I = float(np.mean(pair_kernel(params, E)))
    J = float(np.mean(pair_kernel_dlog(params, E)))
    shift = np.array([params.gamma, 0.0])
    grad = -2 * (x - shift) / params.absU + x * I
    hess = (-2 / params.absU + I) * np.eye(2) + J * np.outer(x, x)
    return grad, hess


def eval_F(params: ModelParams, x, nodes: Optional[int] = None) -> float:
    _, e = quadrature_dispersion(params, nodes)
    return _potential_values(params, e, x)


def eval_F_L(params: ModelParams, x) -> float:
    return _potential_values(params, _lattice_e(params), x)


def grad_hess_F(params: ModelParams, x, nodes: Optional[int] = None):
    """Closed-form gradient and Hessian of F (differentiation under the integral)."""
    _, e = quadrature_dispersion(params, nodes)
    return _grad_hess_values(params, e, x)


def grad_hess_F_L(params: ModelParams, x):
    return _grad_hess_values(params, _lattice_e(params), x)


def eval_f(params: ModelParams, x: float, nodes: Optional[int] = None) -> float:
    """Radial potential f(x) = F(x, 0) at gamma = 0."""
    _, e = quadrature_dispersion(params, nodes)
    return _potential_values(params.replace(gamma=0.0), e, (x, 0.0))


def eval_f_L(params: ModelParams, x: float) -> float:
    return _potential_values(params.replace(gamma=0.0), _lattice_e(params), (x, 0.0))


def _mp_dispersion(params: ModelParams, n: int, mp) -> list:
    """Dispersion on the n^d periodic momentum grid in working precision."""
    sign = -1 if params.hop else 1
    cos1 = [mp.cos(2 * mp.pi * j / n) for j in range(n)]
    sums = [mp.mpf(0)]
    for _ in range(params.d):
        sums = [s + c for s in sums for c in cos1]
    return [sign * 2 * s - params.mu for s in sums]


def mp_maximizer(params: ModelParams, kind: str = "a", n: Optional[int] = None, dps: int = 50, x0=None):
    """Extended-precision a(gamma) (kind "a") or Delta (kind "delta") on the n^d
    momentum grid, n = L by default; a large n gives the infinite-volume value.
    Returns an mpmath number."""
    import mpmath

    mp = mpmath.mp
    with mpmath.workdps(dps):
        n = params.L if n is None else n
        e = _mp_dispersion(params, n, mp)
        beta = mp.mpf(params.beta)
        c = mp.cos(beta * mp.mpf(params.theta) / 2)
        U = mp.mpf(params.absU)
        g = mp.mpf(params.gamma)

        def I(a):
            tot = mp.mpf(0)
            for ek in e:
                E = mp.sqrt(ek * ek + a * a)
                tot += mp.sinh(beta * E) / ((c + mp.cosh(beta * E)) * E)
            return tot / len(e)

        if kind == "a":
            if not params.gamma > 0:
                raise ValidationError("a(gamma) needs gamma > 0")
            f = lambda a: -2 * (a - g) / U + a * I(a)
            start = x0 if x0 is not None else a_of_gamma_values(params, np.array([float(v) for v in e]))
        elif kind == "delta":
            f = lambda a: -2 / U + I(a)
            if x0 is None:
                x0 = _delta_values(params, np.array([float(v) for v in e]), 1e-13)
            if x0 == 0:
                return mp.mpf(0)
            start = x0
        else:
            raise ValidationError(f"unknown kind {kind!r}")
        root = mp.findroot(f, mp.mpf(start), tol=mp.mpf(10) ** (-(dps - 5)))
        return +root


def maximize_F_L(params: ModelParams, tol: float = 1e-13, dps: Optional[int] = None):
    """a_L(gamma): root of the x1-axis stationarity equation of F_L.  With ``dps``
    the root is refined in extended precision and returned as an mpmath number."""
    a = a_of_gamma_values(params, _lattice_e(params), tol)
    return mp_maximizer(params, "a", dps=dps, x0=a) if dps else a


def maximize_f_L(params: ModelParams, tol: float = 1e-13, dps: Optional[int] = None):
    """Delta_L: positive root of -2/|U| + I_L(Delta) when I_L(0) > 2/|U|, else 0."""
    d = _delta_values(params, _lattice_e(params), tol)
    return mp_maximizer(params, "delta", dps=dps, x0=d) if dps and d > 0 else d


def _delta_values(params: ModelParams, e: np.ndarray, tol: float) -> float:
    inv = -2 / params.absU
    s0 = inv + gap_integral_values(params, e, 0.0)
    if s0 == 0:
        warnings.warn("finite-volume solvability sum is exactly zero; taking Delta_L = 0", RuntimeWarning)
    if s0 <= 0:
        return 0.0
    root, _ = root_above(lambda a: inv + gap_integral_values(params, e, a), 0.0, 1.0, tol)
    return root


def potential_report(params: ModelParams, nodes: Optional[int] = None) -> PotentialReport:
    """F, gradient and Hessian at its maximizer (a(gamma), 0)."""
    if not params.gamma > 0:
        raise ValidationError("potential report needs gamma > 0")
    _, e = quadrature_dispersion(params, nodes)
    a = a_of_gamma_values(params, e)
    g, h = _grad_hess_values(params, e, (a, 0.0))
    return PotentialReport(_potential_values(params, e, (a, 0.0)), g, h, a, float(h[1, 1]))


def laplace_prediction(params: ModelParams, nodes: Optional[int] = None) -> dict:
    """Leading-order targets: ssb_pred = -(a(gamma)-gamma)/|U|, odlro_pred = Delta^2/U^2."""
    sol = solve_gap(params, nodes=nodes)
    out = {"delta": sol.delta, "odlro_pred": sol.delta**2 / params.absU**2}
    if params.gamma > 0:
        _, e = quadrature_dispersion(params, nodes)
        a = a_of_gamma_values(params, e)
        out["a_gamma"] = a
        out["ssb_pred"] = -(a - params.gamma) / params.absU
    else:
        out["a_gamma"] = sol.delta
        out["ssb_pred"] = -sol.delta / params.absU
    return out
