"""Model parameters, momentum lattice, dispersion and coupling-window formulas."""

from __future__ import annotations

import dataclasses
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class ValidationError(ValueError):
    """Invalid model or run parameters."""


class DomainError(ValidationError):
    """Argument outside the domain of a formula."""


class NumericalError(RuntimeError):
    """Root bracketing, quadrature or linear algebra failure."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and lattice parameters of the model.

    ``theta`` must lie in ``[0, 2*pi/beta)``; ``U`` is the (negative) coupling.
    ``xhat``/``yhat`` are the sites of the pairing operators.
    """

    d: int = 1
    L: int = 2
    hop: int = 0
    mu: float = 0.0
    beta: float = 1.0
    theta: float = 0.0
    U: float = -1.0
    gamma: float = 0.0
    xhat: Optional[Tuple[int, ...]] = None
    yhat: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError(f"d must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise ValidationError(f"L must be a positive integer, got {self.L}")
        if self.hop not in (0, 1):
            raise ValidationError(f"hop must be 0 or 1, got {self.hop}")
        for name in ("mu", "beta", "theta", "U", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be a finite real, got {v!r}")
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if not self.U < 0:
            raise ValidationError(f"U must be negative, got {self.U}")
        if not 0 <= self.gamma <= 1:
            raise ValidationError(f"gamma must lie in [0,1], got {self.gamma}")
        if not 0 <= self.theta < 2 * math.pi / self.beta:
            raise ValidationError(
                f"theta must lie in [0, 2*pi/beta) = [0, {2 * math.pi / self.beta}), got {self.theta}"
            )
        for name in ("xhat", "yhat"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(int(c) for c in v)
                if len(v) != self.d:
                    raise ValidationError(f"{name} must have {self.d} components")
                object.__setattr__(self, name, v)
        if self.xhat is not None and self.yhat is not None:
            if self.site_index(self.xhat) == self.site_index(self.yhat):
                raise ValidationError("xhat and yhat must be distinct sites modulo L")
        if abs(self.mu) >= 2 * self.d:
            warnings.warn(
                f"|mu| = {abs(self.mu)} >= 2d: degenerate Fermi surface", RuntimeWarning, stacklevel=3
            )

    @property
    def Theta(self) -> float:
        return abs(self.theta / 2 - math.pi / self.beta)

    @property
    def absU(self) -> float:
        return -self.U

    @property
    def nsites(self) -> int:
        return self.L**self.d

    @property
    def cos_half(self) -> float:
        """cos(beta*theta/2)."""
        return math.cos(self.beta * self.theta / 2)

    @property
    def one_plus_cos(self) -> float:
        """1 + cos(beta*theta/2), evaluated without cancellation near theta = 2pi/beta."""
        return 2 * math.cos(self.beta * self.theta / 4) ** 2

    def replace(self, **kw) -> "ModelParams":
        return dataclasses.replace(self, **kw)

    def site_index(self, x) -> int:
        idx = 0
        for c in x:
            idx = idx * self.L + int(c) % self.L
        return idx

    def sites(self) -> list:
        return list(itertools.product(range(self.L), repeat=self.d))

    def pair_sites(self) -> Tuple[Tuple[int, ...], Optional[Tuple[int, ...]]]:
        """(xhat, yhat) with defaults: origin and the first unit vector when L > 1."""
        x = self.xhat if self.xhat is not None else (0,) * self.d
        if self.yhat is not None:
            return x, self.yhat
        if self.L == 1:
            return x, None
        y = list(x)
        y[0] = (y[0] + 1) % self.L
        return x, tuple(y)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["Theta"] = self.Theta
        return out


@dataclass(frozen=True)
class MomentumGrid:
    """Momenta 2*pi*m/L, m in {0..L-1}^d, as an (L^d, d) array."""

    L: int
    d: int
    points: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def momentum_grid(L: int, d: int) -> MomentumGrid:
    axes = [2 * np.pi * np.arange(L) / L] * d
    pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=-1)
    pts.setflags(write=False)
    return MomentumGrid(L, d, pts)


def dispersion(params: ModelParams, k) -> np.ndarray:
    """e(k) = (-1)^hop * 2 * sum_j cos k_j - mu; ``k`` has trailing axis of length d."""
    k = np.asarray(k, dtype=float)
    s = -1.0 if params.hop else 1.0
    return s * 2 * np.cos(k).sum(axis=-1) - params.mu


def quadrature_nodes(params: ModelParams, nodes: int) -> int:
    """Per-axis trapezoid resolution with the Fermi-surface floor max(64, 8/Theta)."""
    n = max(int(nodes), 64)
    if params.Theta > 0:
        n = max(n, int(math.ceil(8 / params.Theta)))
    return n


def dispersion_on_grid(params: ModelParams, n: int) -> np.ndarray:
    """Dispersion at the n^d periodic trapezoid nodes of [0, 2pi]^d (flattened)."""
    c = 2 * np.cos(2 * np.pi * np.arange(n) / n)
    s = -1.0 if params.hop else 1.0
    e = np.zeros(1)
    for _ in range(params.d):
        e = (e[:, None] + c[None, :]).ravel()
    return s * e - params.mu


def g_function(params: ModelParams, x: float) -> float:
    d = params.d
    if not x > 0:
        raise DomainError(f"g_d needs x > 0, got {x}")
    lg = math.log1p(1 / x)
    if d == 1:
        if params.mu**2 >= 4:
            raise DomainError("g_1 needs mu^2 < 4")
        return lg / math.sqrt(4 - params.mu**2)
    return lg ** (d / (d + 1)) * x ** (-1 / (d + 1))


def default_nodes(d: int) -> int:
    """Default per-axis trapezoid resolution by dimension."""
    return {1: 4096, 2: 512}.get(d, 64)


def dispersion_integral(params: ModelParams, K: float, nodes: Optional[int] = None) -> float:
    """Unnormalized integral over [0,2pi]^d of 1/sqrt(K^2 + e(k)^2)."""
    n = nodes or default_nodes(params.d)
    if params.d == 1:
        n = max(n, int(math.ceil(40 / K)))
    e = dispersion_on_grid(params, n)
    return float((2 * math.pi) ** params.d * np.mean(1 / np.sqrt(K * K + e * e)))


def coupling_window(params: ModelParams, c1: float = 1.0, c2: float = 1.0) -> dict:
    """Lower and upper bounds on |U| for the superconducting window.

    ``upper_integral`` replaces g_d(Theta) by the dispersion integral; both
    margins are reported.
    """
    T = params.Theta
    if not T > 0:
        raise DomainError("coupling window needs Theta > 0")
    d, beta = params.d, params.beta
    w = 2 * d - abs(params.mu)
    K = w / 2
    branch = 1.0 if T <= K else T / w
    lower = c1 * w ** (1 - d) * beta * T * branch
    base = 1 + beta ** (d + 3)
    upper = c2 * (base + (1 + 1 / beta) * g_function(params, T)) ** -2
    upper_int = c2 * (base + (1 + 1 / beta) * dispersion_integral(params, T)) ** -2
    return {
        "lower": lower,
        "upper": upper,
        "nonempty": lower < upper,
        "upper_integral": upper_int,
        "nonempty_integral": lower < upper_int,
    }


def fermi_surface_lower_bound(params: ModelParams) -> float:
    d, mu = params.d, params.mu
    if abs(mu) >= 2 * d:
        raise DomainError("Fermi-surface bound needs |mu| < 2d")
    if d == 1:
        return 1.0
    return ((2 * d - abs(mu)) / (10 * (d - 1) * d)) ** (d - 1)


def fermi_surface_measure(params: ModelParams, eta: float, n: int = 512) -> float:
    """Mesh estimate of the (d-1)-dimensional measure of {e(k) = eta} in [0,2pi]^d.

    d=1 counts solutions in [0, 2pi); d=2 sums marching-squares contour
    lengths on an n x n grid including both endpoints.
    """
    s = -1.0 if params.hop else 1.0
    if params.d == 1:
        c = (eta + params.mu) / (2 * s)
        if abs(c) < 1:
            return 2.0
        return 1.0 if abs(c) == 1 else 0.0
    if params.d == 2:
        from skimage.measure import find_contours

        k = np.linspace(0, 2 * np.pi, n)
        field = s * 2 * (np.cos(k)[:, None] + np.cos(k)[None, :]) - params.mu
        h = 2 * np.pi / (n - 1)
        total = 0.0
        for c in find_contours(field, eta):
            total += np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1)) * h
        return float(total)
    raise DomainError("level-set estimator implemented for d in {1, 2}")


def momentum_sum_ratio(params: ModelParams, K: float) -> float:
    """L^{-d} sum_k 1/sqrt(K^2 + e(k)^2) divided by g_d(K)."""
    if not K > 0:
        raise DomainError("K must be positive")
    e = dispersion(params, momentum_grid(params.L, params.d).points)
    return float(np.mean(1 / np.sqrt(K * K + e * e)) / g_function(params, K))
