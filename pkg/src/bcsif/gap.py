"""Modified gap equation, free-energy density and the symmetry-broken maximizer a(gamma)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from bcsif.model import (
    ModelParams,
    NumericalError,
    ValidationError,
    default_nodes,
    dispersion_on_grid,
    quadrature_nodes,
)

_BIG = 30.0
_SMALL = 1e-8
_DELTA_CAP = 1e12


@dataclass
class GapSolution:
    delta: float
    residual: float
    solvable: bool
    iterations: int
    quad_nodes: int
    ssb: float
    odlro: float
    free_energy: float


def _opc(params: ModelParams) -> float:
    opc = params.one_plus_cos
    if not opc > 0:
        raise NumericalError("cos(beta*theta/2) + cosh(x) is not positive")
    return opc


def pair_kernel(params: ModelParams, E) -> np.ndarray:
    """sinh(beta E) / ((cos(beta theta/2) + cosh(beta E)) E), elementwise, E >= 0."""
    E = np.asarray(E, dtype=float)
    beta, c, opc = params.beta, params.cos_half, _opc(params)
    x = beta * E
    out = np.empty_like(x)
    small = x < _SMALL
    big = x > _BIG
    mid = ~(small | big)
    out[small] = beta / opc
    xm = x[mid]
    out[mid] = np.sinh(xm) / ((2 * np.sinh(xm / 2) ** 2 + opc) * E[mid])
    q = np.exp(-x[big])
    out[big] = (1 - q * q) / ((2 * c * q + 1 + q * q) * E[big])
    return out


def pair_kernel_dlog(params: ModelParams, E) -> np.ndarray:
    """K'(E)/E for the pair kernel K above (finite at E = 0)."""
    E = np.asarray(E, dtype=float)
    beta, c, opc = params.beta, params.cos_half, _opc(params)
    x = beta * E
    out = np.empty_like(x)
    small = x < 1e-4
    big = x > _BIG
    mid = ~(small | big)
    out[small] = 2 * beta**3 / opc * (1 / 6 - 1 / (2 * opc))
    xm, Em = x[mid], E[mid]
    den = 2 * np.sinh(xm / 2) ** 2 + opc
    num = -2 * np.sinh(xm / 2) ** 2 + opc * np.cosh(xm)
    K = np.sinh(xm) / (den * Em)
    out[mid] = (beta * num / (den * den * Em) - K / Em) / Em
    xb, Eb = x[big], E[big]
    s = 2 * np.exp(-xb) / (1 + np.exp(-2 * xb))
    ratio = (c * s + s * s) / (1 + c * s) ** 2
    q = np.exp(-xb)
    Kb = (1 - q * q) / ((2 * c * q + 1 + q * q) * Eb)
    out[big] = (beta * ratio / Eb - Kb / Eb) / Eb
    return out


def log_cosh_shift(params: ModelParams, x) -> np.ndarray:
    """log(cos(beta theta/2) + cosh x) for x >= 0, overflow- and cancellation-safe."""
    x = np.asarray(x, dtype=float)
    c, opc = params.cos_half, _opc(params)
    out = np.empty_like(x)
    big = x > _BIG
    xs = x[~big]
    out[~big] = np.log(2 * np.sinh(xs / 2) ** 2 + opc)
    xb = x[big]
    out[big] = xb - math.log(2) + np.log1p(2 * c * np.exp(-xb) + np.exp(-2 * xb))
    return out


def gap_integral_values(params: ModelParams, e: np.ndarray, delta: float) -> float:
    """Average of the pair kernel over dispersion samples ``e`` at gap ``delta``."""
    E = np.sqrt(e * e + delta * delta)
    return float(np.mean(pair_kernel(params, E)))


def quadrature_dispersion(params: ModelParams, nodes: Optional[int]):
    n = quadrature_nodes(params, nodes or default_nodes(params.d))
    return n, dispersion_on_grid(params, n)


def gap_residual(params: ModelParams, delta: float, nodes: Optional[int] = None) -> float:
    """D(delta) = -2/|U| + (2pi)^{-d} * integral of the pair kernel."""
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    _, e = quadrature_dispersion(params, nodes)
    return -2 / params.absU + gap_integral_values(params, e, delta)


def solvability_indicator(params: ModelParams, nodes: Optional[int] = None) -> float:
    return gap_residual(params, 0.0, nodes)


def free_energy_values(params: ModelParams, e: np.ndarray, delta: float) -> float:
    beta = params.beta
    E = np.sqrt(e * e + delta * delta)
    logs = math.log(2) - beta * e + log_cosh_shift(params, beta * E)
    return float(delta * delta / params.absU - np.mean(logs) / beta)


def free_energy_density(params: ModelParams, delta: float, nodes: Optional[int] = None) -> float:
    _, e = quadrature_dispersion(params, nodes)
    return free_energy_values(params, e, delta)


def root_above(f, lo: float, hi: float, tol: float):
    """Brent root of a decreasing f with f(lo) > 0, doubling hi until f(hi) < 0."""
    while f(hi) >= 0:
        lo, hi = hi, 2 * hi
        if hi > _DELTA_CAP:
            raise NumericalError(f"root bracket exceeded {_DELTA_CAP:g}")
    root, info = brentq(f, lo, hi, xtol=min(tol, 1e-14), rtol=4 * np.finfo(float).eps,
                        maxiter=200, full_output=True)
    if not info.converged:
        raise NumericalError("Brent iteration did not converge")
    return root, info.iterations


def solve_gap(params: ModelParams, tol: float = 1e-10, nodes: Optional[int] = None) -> GapSolution:
    """Unique root of the gap equation, or delta = 0 when the indicator is not positive."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    n, e = quadrature_dispersion(params, nodes)
    inv = -2 / params.absU

    def res(delta):
        return inv + gap_integral_values(params, e, delta)

    if res(0.0) <= 0:
        return GapSolution(0.0, res(0.0), False, 0, n, 0.0, 0.0, free_energy_values(params, e, 0.0))
    delta, it = root_above(res, 0.0, 1.0, tol)
    r = res(delta)
    if abs(r) > tol:
        raise NumericalError(f"gap residual {r:g} above tolerance {tol:g}")
    ssb = -delta / params.absU
    return GapSolution(delta, r, True, it, n, ssb, ssb * ssb, free_energy_values(params, e, delta))


def a_of_gamma_values(params: ModelParams, e: np.ndarray, tol: float = 1e-12) -> float:
    """Root a > Delta of a*(-2/|U| + I(a)) + 2 gamma/|U| with I averaged over ``e``."""
    if not params.gamma > 0:
        raise ValidationError("a(gamma) needs gamma > 0")
    inv = -2 / params.absU
    g = 2 * params.gamma / params.absU

    def phi(a):
        return a * (inv + gap_integral_values(params, e, a)) + g

    lo = 0.0
    if inv + gap_integral_values(params, e, 0.0) > 0:
        lo, _ = root_above(lambda x: inv + gap_integral_values(params, e, x), 0.0, 1.0, 1e-15)
    root, _ = root_above(phi, lo, max(2 * lo, 1.0), tol)
    return root


def a_of_gamma(params: ModelParams, tol: float = 1e-12, nodes: Optional[int] = None) -> float:
    _, e = quadrature_dispersion(params, nodes)
    return a_of_gamma_values(params, e, tol)


def monotone_kernel(x, epsilon: float) -> np.ndarray:
    """sinh(x) / (x (epsilon + cosh x)) for x > 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = x > _BIG
    xs = x[~big]
    out[~big] = np.sinh(xs) / (xs * (2 * np.sinh(xs / 2) ** 2 + 1 + epsilon))
    q = np.exp(-x[big])
    out[big] = (1 - q * q) / ((2 * epsilon * q + 1 + q * q) * x[big])
    return out


def monotonicity_check(epsilon: float, samples: int = 10_000) -> bool:
    if not -1 < epsilon <= 1:
        raise ValidationError("epsilon must lie in (-1, 1]")
    if samples < 2:
        raise ValidationError("samples must be at least 2")
    x = np.linspace(0, 50, samples + 1)[1:]
    return bool(np.all(np.diff(monotone_kernel(x, epsilon)) < 0))
