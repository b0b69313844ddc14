"""Two-band free covariance C(phi): closed form, Matsubara sum, equal-time forms,
multiscale decomposition with smooth cutoffs, and determinant-bound sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bcsif.model import DomainError, ModelParams, ValidationError, dispersion, momentum_grid


@dataclass(frozen=True)
class BandBlock:
    k: tuple
    E_matrix: np.ndarray
    e_full: float
    U_matrix: np.ndarray


def _unitary(e: np.ndarray, phi: complex):
    """Columns (phibar, ef - e)/n and (-phibar, ef + e)/n; identity when phi = 0."""
    e = np.asarray(e, dtype=float)
    a2 = abs(phi) ** 2
    ef = np.sqrt(e * e + a2)
    U = np.zeros(e.shape + (2, 2), dtype=complex)
    if phi == 0:
        U[..., 0, 0] = U[..., 1, 1] = 1
        return U, e.copy()
    # ef - e and ef + e without cancellation
    minus = np.where(e > 0, a2 / (ef + np.abs(e)), ef - e)
    plus = np.where(e < 0, a2 / (ef + np.abs(e)), ef + e)
    pb = np.conj(phi)
    n1 = np.sqrt(a2 + minus**2)
    n2 = np.sqrt(a2 + plus**2)
    U[..., 0, 0] = pb / n1
    U[..., 1, 0] = minus / n1
    U[..., 0, 1] = -pb / n2
    U[..., 1, 1] = plus / n2
    return U, ef


def band_block(params: ModelParams, phi: complex, k) -> BandBlock:
    e = float(dispersion(params, k))
    Em = np.array([[e, np.conj(phi)], [phi, -e]], dtype=complex)
    U, ef = _unitary(np.array(e), phi)
    return BandBlock(tuple(np.atleast_1d(k)), Em, float(ef), U)


def propagator(A, tau, beta: float):
    """e^{tau A}(1_{tau>=0}/(1+e^{beta A}) - 1_{tau<0}/(1+e^{-beta A})), overflow-safe."""
    A = np.asarray(A, dtype=complex)
    tau = np.asarray(tau, dtype=float)
    A, tau = np.broadcast_arrays(A, tau)
    out = np.empty(A.shape, dtype=complex)
    fwd = tau >= 0
    pos = A.real > 0
    m = fwd & pos
    out[m] = np.exp((tau[m] - beta) * A[m]) / (np.exp(-beta * A[m]) + 1)
    m = fwd & ~pos
    out[m] = np.exp(tau[m] * A[m]) / (1 + np.exp(beta * A[m]))
    m = ~fwd & ~pos
    out[m] = -np.exp((tau[m] + beta) * A[m]) / (np.exp(beta * A[m]) + 1)
    m = ~fwd & pos
    out[m] = -np.exp(tau[m] * A[m]) / (1 + np.exp(-beta * A[m]))
    return out


def _single(X) -> bool:
    return len(X) == 3 and np.isscalar(X[0])


def _as_labels(params: ModelParams, X):
    """Normalize one label or a list of labels (band, site, time) to arrays."""
    if _single(X):
        X = [X]
    band = np.array([int(x[0]) for x in X])
    if np.any((band != 1) & (band != 2)):
        raise ValidationError("band index must be 1 or 2")
    site = np.array([np.atleast_1d(x[1]) for x in X], dtype=float).reshape(len(X), params.d)
    time = np.array([float(x[2]) for x in X])
    if np.any(time < 0) or np.any(time >= params.beta):
        raise ValidationError("times must lie in [0, beta)")
    return band - 1, site, time


class CovarianceEvaluator:
    """phi-dependent two-band covariance with the per-momentum eigenbasis cached."""

    def __init__(self, params: ModelParams, phi: complex):
        self.params = params
        self.phi = complex(phi)
        self.k = momentum_grid(params.L, params.d).points
        self.e = dispersion(params, self.k)
        self.U, self.ef = _unitary(self.e, self.phi)
        self.shift = 0.5j * params.theta

    def _contract(self, diag, rho, eta, dx):
        # diag: (nk, 2) or (npairs, nk, 2) eigenvalue weights
        phase = np.exp(1j * dx @ self.k.T)
        Ur = self.U[:, rho, :].transpose(1, 0, 2)
        Ue = np.conj(self.U[:, eta, :]).transpose(1, 0, 2)
        return np.mean(phase * np.sum(Ur * diag * Ue, axis=-1), axis=-1)

    def __call__(self, X, Y):
        rho, x, s = _as_labels(self.params, X)
        eta, y, t = _as_labels(self.params, Y)
        tau = (s - t)[:, None, None]
        A = self.shift + np.stack([self.ef, -self.ef], axis=-1)[None]
        diag = propagator(A, tau, self.params.beta)
        out = self._contract(diag, rho, eta, x - y)
        return out if len(out) > 1 or not _single(X) else complex(out[0])


def covariance(params: ModelParams, phi: complex, X, Y):
    return CovarianceEvaluator(params, phi)(X, Y)


def matsubara_frequencies(beta: float, h: float) -> np.ndarray:
    """M_h = {(pi/beta)(2m+1) : |omega| < pi h}; requires h in (2/beta) * N."""
    n = beta * h / 2
    if n < 0.5 or abs(n - round(n)) > 1e-9:
        raise ValidationError(f"h must be a positive multiple of 2/beta, got h={h}")
    n = int(round(n))
    return np.pi / beta * (2 * np.arange(-n, n) + 1)


def _check_grid(times, h: float):
    th = np.asarray(times) * h
    if np.any(np.abs(th - np.round(th)) > 1e-9):
        raise ValidationError("times must lie on the grid [0, beta)_h")


def matsubara_resolvent(A, omega, theta: float, h: float):
    """h^{-1}(1 - e^{-(i/h)(omega - theta/2) + A/h})^{-1} with A the band eigenvalue."""
    return 1 / (h * (1 - np.exp(-1j * (omega - theta / 2) / h + A / h)))


def covariance_matsubara(params: ModelParams, phi: complex, h: float, X, Y):
    ev = CovarianceEvaluator(params, phi)
    rho, x, s = _as_labels(params, X)
    eta, y, t = _as_labels(params, Y)
    _check_grid(s, h)
    _check_grid(t, h)
    w = matsubara_frequencies(params.beta, h)
    ef = np.stack([ev.ef, -ev.ef], axis=-1)  # (nk, 2)
    R = matsubara_resolvent(ef[None, :, :], w[:, None, None], params.theta, h)  # (nw, nk, 2)
    ph = np.exp(1j * np.outer(s - t, w))  # (npairs, nw)
    diag = np.einsum("pw,wkb->pkb", ph, R) / params.beta
    out = ev._contract(diag, rho, eta, x - y)
    return out if len(out) > 1 or not _single(X) else complex(out[0])


def matsubara_scalar_identity(A: complex, beta: float, h: float, s: float):
    """Both sides of the scalar Matsubara identity for s in {-beta, ..., beta - 1/h}."""
    w = matsubara_frequencies(beta, h)
    rhs = np.sum(np.exp(1j * w * s) / (h * (1 - np.exp(-1j * w / h + A / h)))) / beta
    lhs = propagator(A, s, beta)[()]
    return complex(lhs), complex(rhs)


def _ratio_terms(params: ModelParams, ef):
    """(e^{-i beta theta/2} + cosh x)/(2(c + cosh x)) and sinh x/(2(c + cosh x)), x = beta*ef."""
    x = params.beta * np.asarray(ef, dtype=float)
    c, opc = params.cos_half, params.one_plus_cos
    z = np.exp(-0.5j * params.beta * params.theta)
    a = np.empty(x.shape, dtype=complex)
    b = np.empty(x.shape)
    big = x > 30
    xs = x[~big]
    den = 2 * (2 * np.sinh(xs / 2) ** 2 + opc)
    a[~big] = (z + np.cosh(xs)) / den
    b[~big] = np.sinh(xs) / den
    q = np.exp(-x[big])
    dq = 2 * (2 * c * q + 1 + q * q)
    a[big] = (2 * z * q + 1 + q * q) / dq
    b[big] = (1 - q * q) / dq
    return a, b


def equal_time_forms(params: ModelParams, phi: complex, x, y) -> np.ndarray:
    """Closed-form 2x2 matrix C(phi)(rho x 0, eta y 0)."""
    k = momentum_grid(params.L, params.d).points
    e = dispersion(params, k)
    ef = np.sqrt(e * e + abs(phi) ** 2)
    a, b = _ratio_terms(params, ef)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(ef > 0, b / np.where(ef > 0, ef, 1), params.beta / (2 * params.one_plus_cos))
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    ph = np.exp(1j * k @ np.atleast_1d(dx))
    out = np.empty((2, 2), dtype=complex)
    out[0, 0] = np.mean(ph * (a - r * e))
    out[1, 1] = np.mean(ph * (a + r * e))
    out[0, 1] = -np.conj(phi) * np.mean(ph * r)
    out[1, 0] = -phi * np.mean(ph * r)
    return out


# smooth cutoffs


def chi(x):
    """C-infinity plateau: 1 on (-inf, 1], 0 on [2, inf)."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 1, 1.0, 0.0)
    m = (x > 1) & (x < 2)
    xm = x[m]
    a = np.exp(1 / (xm - 2))
    out[m] = a / (a + np.exp(-1 / (xm - 1)))
    return out


def chi_M(x, M: float):
    return chi((np.asarray(x, dtype=float) - M) / (M * M - M) + 1)


def scale_counts(beta: float, h: float, M: float):
    """(N_h, N_beta) = (floor(log 2h / log M), max(floor(log(1/beta)/log M) + 1, 1))."""
    N_h = math.floor(math.log(2 * h) / math.log(M) + 1e-12)
    N_beta = max(math.floor(math.log(1 / beta) / math.log(M) + 1e-12) + 1, 1)
    return N_h, N_beta


def min_admissible_h(params: ModelParams, M: float) -> float:
    bound = max(0.5 * max(1.0, 1 / params.beta) * M * M, 4 * params.d)
    step = 2 / params.beta
    return step * math.ceil(bound / step - 1e-12)


@dataclass
class ScaleDecomposition:
    """Cutoffs chi_l and scale covariances C_l, l = 0..N_h - N_beta + 1."""

    params: ModelParams
    phi: complex
    h: float
    M: float
    N_h: int
    N_beta: int
    _ev: CovarianceEvaluator = field(repr=False)
    _omega: np.ndarray = field(repr=False)
    _R: np.ndarray = field(repr=False)

    @property
    def scales(self) -> range:
        return range(0, self.N_h - self.N_beta + 2)

    def cutoff(self, l: int, omega):
        """chi_l(omega) for l in N_beta..N_h."""
        z = self.h * np.abs(1 - np.exp(1j * np.asarray(omega) / self.h))
        if l == self.N_beta:
            return chi_M(self.M ** (-l) * z, self.M)
        if self.N_beta < l <= self.N_h:
            return chi_M(self.M ** (-l) * z, self.M) - chi_M(self.M ** (-(l - 1)) * z, self.M)
        raise ValidationError(f"cutoff index {l} outside [{self.N_beta}, {self.N_h}]")

    def weights(self, l: int) -> np.ndarray:
        """Per-frequency weight of C_l including the omega = pi/beta selection."""
        w = self._omega
        first = np.isclose(w, np.pi / self.params.beta)
        if l == 0:
            return first.astype(float)
        if l not in self.scales:
            raise ValidationError(f"scale {l} outside {list(self.scales)}")
        return np.where(first, 0.0, self.cutoff(l + self.N_beta - 1, w))

    def _diag(self, l: int, tau):
        ph = np.exp(1j * np.outer(tau, self._omega - np.pi / self.params.beta))
        return np.einsum("pw,w,wkb->pkb", ph, self.weights(l), self._R) / self.params.beta

    def covariance(self, l: int, X, Y):
        rho, x, s = _as_labels(self.params, X)
        eta, y, t = _as_labels(self.params, Y)
        _check_grid(s, self.h)
        _check_grid(t, self.h)
        out = self._ev._contract(self._diag(l, s - t), rho, eta, x - y)
        return out if len(out) > 1 or not _single(X) else complex(out[0])

    def table(self, l: int) -> np.ndarray:
        """C_l(rho x s, eta 0 0) as an array [rho, eta, site, time index]."""
        p = self.params
        nt = int(round(p.beta * self.h))
        tau = np.arange(nt) / self.h
        diag = self._diag(l, tau)  # (nt, nk, 2)
        sites = np.array(p.sites(), dtype=float).reshape(-1, p.d)
        ph = np.exp(1j * sites @ self._ev.k.T)  # (ns, nk)
        U = self._ev.U
        out = np.einsum("xk,tkb,kab,kcb->acxt", ph, diag, U, np.conj(U)) / len(self._ev.k)
        return out

    def decay_norm(self, l: int) -> float:
        """||C~_l||_{1,inf} for the antisymmetric extension on the grid."""
        T = np.abs(self.table(l))
        rows = T.sum(axis=(1, 2, 3)).max()
        cols = T.sum(axis=(0, 2, 3)).max()
        return 0.5 * max(rows, cols) / self.h

    def decay_diagnostics(self) -> list:
        """Norms per scale with the ratio to the reference decay for that scale."""
        p, T = self.params, self.params.Theta
        out = []
        for l in self.scales:
            n = self.decay_norm(l)
            if l == 0:
                ref = (1 / T) * (1 + 1 / T) ** p.d
            elif l == 1:
                ref = p.beta * (1 + p.beta) ** (p.d + 1)
            else:
                ref = self.M ** (-l)
            out.append({"l": l, "norm": n, "reference": ref, "ratio": n / ref})
        return out


def scale_decomposition(params: ModelParams, phi: complex, h: Optional[float] = None,
                        M: float = 2 * math.pi) -> ScaleDecomposition:
    if M < 2 * math.pi:
        raise DomainError("M must be at least 2*pi")
    hmin = min_admissible_h(params, M)
    if h is None:
        h = hmin
    if h < hmin - 1e-9:
        raise DomainError(f"h={h} violates the largeness condition h >= {hmin}")
    N_h, N_beta = scale_counts(params.beta, h, M)
    ev = CovarianceEvaluator(params, phi)
    w = matsubara_frequencies(params.beta, h)
    ef = np.stack([ev.ef, -ev.ef], axis=-1)
    R = matsubara_resolvent(ef[None], w[:, None, None], params.theta, h)
    return ScaleDecomposition(params, complex(phi), float(h), float(M), N_h, N_beta, ev, w, R)


def decay_norm(params: ModelParams, phi: complex, h: float, l: int, M: float = 2 * math.pi) -> float:
    return scale_decomposition(params, phi, h, M).decay_norm(l)


def antisymmetric_extension(C: np.ndarray) -> np.ndarray:
    """C~ on pairs (X, xi): blocks [[0, C/2], [-C^T/2, 0]] with xi = 1 first."""
    n = C.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, n:] = 0.5 * C
    out[n:, :n] = -0.5 * C.T
    return out


def determinant_bound_rhs(params: ModelParams, phi: complex, n: int) -> float:
    k = momentum_grid(params.L, params.d).points
    e = dispersion(params, k)
    q = np.exp(-params.beta * np.sqrt(e * e + abs(phi) ** 2))
    s = np.mean((1 + 2 * params.cos_half * q + q * q) ** -0.5)
    return float((16 * s) ** n)


def _gram_norms(params: ModelParams, phi: complex, h: float):
    """Squared Gram norms ||f_rho||^2 and ||g_rho||^2 of the single-frequency covariance."""
    ev = CovarianceEvaluator(params, phi)
    w0 = math.pi / params.beta
    wgt = ((w0 - params.theta / 2) ** 2 + ev.e**2) ** 0.5
    ef = np.stack([ev.ef, -ev.ef], axis=-1)
    r = matsubara_resolvent(ef, w0, params.theta, h)  # (nk, 2)
    R = np.einsum("kab,kb,kcb->kac", ev.U, r, np.conj(ev.U))  # R[k, eta, rho]
    norm = params.beta * len(ev.k)
    f2 = np.sum(1 / wgt) / norm
    g2 = np.array([np.sum(wgt * np.sum(np.abs(R[:, :, rho]) ** 2, axis=1)) / norm for rho in (0, 1)])
    return f2, g2


def determinant_bound_fuzz(params: ModelParams, phi: complex, n: int, m: int, trials: int,
                           seed: int = 0, h: Optional[float] = None) -> dict:
    """Sample |det(<u_i,v_j> C(X_i,Y_j))| against the determinant bound and the
    Gram bound for C_0.  Labels are uniform over bands, sites and the time grid
    [0, beta)_h (h defaults to 8/beta)."""
    rng = np.random.default_rng(seed)
    p = params
    h = h if h is not None else 8 / p.beta
    nt = int(round(p.beta * h))
    ev = CovarianceEvaluator(p, phi)
    sd = scale_decomposition(p, phi, max(h, min_admissible_h(p, 2 * math.pi)))
    f2, g2 = _gram_norms(p, phi, sd.h)
    rhs = determinant_bound_rhs(p, phi, n)
    nts = int(round(p.beta * sd.h))

    def labels(ntime, hh):
        return [(int(rng.integers(1, 3)), tuple(rng.integers(0, p.L, size=p.d)), rng.integers(0, ntime) / hh)
                for _ in range(n)]

    def unit(k):
        z = rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    viol = gviol = 0
    mr = gmr = 0.0
    for _ in range(trials):
        u, v = unit(n), unit(n)
        G = np.conj(u) @ v.T
        X, Y = labels(nt, h), labels(nt, h)
        C = np.reshape(ev([x for x in X for _ in Y], [y for _ in X for y in Y]), (n, n))
        val = abs(np.linalg.det(G * C))
        mr = max(mr, val / rhs)
        viol += val > rhs * (1 + 1e-12)
        X, Y = labels(nts, sd.h), labels(nts, sd.h)
        C0 = np.reshape(sd.covariance(0, [x for x in X for _ in Y], [y for _ in X for y in Y]), (n, n))
        gram = math.sqrt(f2**n) * math.prod(math.sqrt(g2[y[0] - 1]) for y in Y)
        gval = abs(np.linalg.det(G * C0))
        gmr = max(gmr, gval / gram)
        gviol += gval > gram * (1 + 1e-10)
    return {"violations": int(viol), "max_ratio": mr, "gram_violations": int(gviol),
            "gram_max_ratio": gmr, "rhs": rhs, "trials": trials}


def spatial_decay_constant(params: ModelParams, phi: complex, s: float = 0.0, t: float = 0.0) -> float:
    """max over sites of |C(phi)((rho,x,s),(eta,0,t))| (1 + sum_j |x_j|^{d+1}), |x_j| <= L/2."""
    ev = CovarianceEvaluator(params, phi)
    best = 0.0
    for site in params.sites():
        r = [c if c <= params.L // 2 else c - params.L for c in site]
        w = 1 + sum(abs(c) ** (params.d + 1) for c in r)
        for rho in (1, 2):
            for eta in (1, 2):
                best = max(best, abs(ev((rho, tuple(r), s), (eta, (0,) * params.d, t))) * w)
    return best


def offdiag_momentum_integral(params: ModelParams, delta: float, nodes: int = 2**18) -> float:
    """Momentum average inside the (1,2) equal-time entry at phi = delta, i.e.
    -2 C(1x0, 2x0)/delta, evaluated on an ``nodes``-point lattice (d = 1)."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    q = params.replace(L=nodes, xhat=None, yhat=None)
    C = equal_time_forms(q, delta, (0,) * params.d, (0,) * params.d)
    return float((-2 * C[0, 1] / delta).real)
