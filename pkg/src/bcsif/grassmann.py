"""Finite Grassmann algebra with Gaussian integration and the time-discretized
actions of the spin and two-band formulations.

Generator 2*i is psibar_{X_i} and generator 2*i+1 is psi_{X_i}, where X_i runs
over the index set in a fixed order.  Monomials are stored as bitmasks with
generators in ascending order.
"""

from __future__ import annotations

import cmath
import itertools
import math
from functools import lru_cache
from typing import Dict, Iterable, Optional

import numpy as np

from bcsif.model import ModelParams, ValidationError, dispersion, momentum_grid

GENERATOR_CAP = 24


def _wedge_sign(a: int, b: int) -> int:
    """Sign of moving the generators of b past those of a into ascending order."""
    inv = 0
    while b:
        low = b & -b
        j = low.bit_length() - 1
        inv += (a >> (j + 1)).bit_count()
        b ^= low
    return -1 if inv & 1 else 1


class GrassmannElement:
    """Sparse element of the Grassmann algebra on ``n`` generators."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Optional[Dict[int, complex]] = None):
        if n > GENERATOR_CAP:
            raise ValidationError(f"{n} generators exceed the cap of {GENERATOR_CAP}")
        self.n = n
        self.terms = {m: complex(c) for m, c in (terms or {}).items() if c != 0}

    @classmethod
    def scalar(cls, n: int, c: complex) -> "GrassmannElement":
        return cls(n, {0: c})

    @classmethod
    def generator(cls, n: int, g: int) -> "GrassmannElement":
        return cls(n, {1 << g: 1.0})

    @classmethod
    def monomial(cls, n: int, gens: Iterable[int], coeff: complex = 1.0) -> "GrassmannElement":
        """Product of generators in the given (not necessarily sorted) order."""
        out = cls.scalar(n, coeff)
        for g in gens:
            out = out * cls.generator(n, g)
        return out

    def _check(self, other):
        if isinstance(other, GrassmannElement) and other.n != self.n:
            raise ValidationError("generator universe mismatch")

    def constant(self) -> complex:
        return self.terms.get(0, 0j)

    def __add__(self, other):
        if not isinstance(other, GrassmannElement):
            other = GrassmannElement.scalar(self.n, other)
        self._check(other)
        t = dict(self.terms)
        for m, c in other.terms.items():
            t[m] = t.get(m, 0) + c
        return GrassmannElement(self.n, t)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.n, {m: c * other for m, c in self.terms.items()})
        return wedge(self, other)

    def __rmul__(self, other):
        return GrassmannElement(self.n, {m: c * other for m, c in self.terms.items()})

    def __truediv__(self, other):
        return self * (1 / other)

    def is_even(self) -> bool:
        return all(m.bit_count() % 2 == 0 for m in self.terms)

    def max_abs_diff(self, other) -> float:
        keys = set(self.terms) | set(other.terms)
        return max((abs(self.terms.get(k, 0) - other.terms.get(k, 0)) for k in keys), default=0.0)

    def __repr__(self):
        return f"GrassmannElement(n={self.n}, terms={len(self.terms)})"


def wedge(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    a._check(b)
    out: Dict[int, complex] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            if ma & mb:
                continue
            m = ma | mb
            out[m] = out.get(m, 0) + _wedge_sign(ma, mb) * ca * cb
    return GrassmannElement(a.n, out)


def exp_element(f: GrassmannElement) -> GrassmannElement:
    """e^f = e^{f0} sum_n (f - f0)^n / n!, finite by nilpotency."""
    f0 = f.constant()
    nil = f - f0
    out = GrassmannElement.scalar(f.n, 1.0)
    term = GrassmannElement.scalar(f.n, 1.0)
    k = 1
    while True:
        term = term * nil / k
        if not term.terms:
            break
        out = out + term
        k += 1
    return out * cmath.exp(f0)


def log_element(f: GrassmannElement) -> GrassmannElement:
    """log f = log f0 + sum_n (-1)^{n-1}/n ((f - f0)/f0)^n with the principal branch."""
    f0 = f.constant()
    if f0 == 0 or (f0.imag == 0 and f0.real < 0):
        raise ValidationError("log needs a constant part outside (-inf, 0]")
    x = (f - f0) / f0
    out = GrassmannElement.scalar(f.n, cmath.log(f0))
    term = GrassmannElement.scalar(f.n, 1.0)
    k = 1
    while True:
        term = term * x
        if not term.terms:
            break
        out = out + term * ((-1) ** (k - 1) / k)
        k += 1
    return out


def _split(mask: int):
    gens = [g for g in range(mask.bit_length()) if mask >> g & 1]
    bars = [g >> 1 for g in gens if g % 2 == 0]
    nons = [g >> 1 for g in gens if g % 2 == 1]
    return gens, bars, nons


def _inversions(seq) -> int:
    return sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])


def monomial_integral(mask: int, D: np.ndarray) -> complex:
    """Determinant definition: psibar_{X1}..psibar_{Xa} psi_{Ya}..psi_{Y1} -> det D(Xi, Yj)."""
    gens, bars, nons = _split(mask)
    if len(bars) != len(nons):
        return 0j
    if not bars:
        return 1 + 0j
    target = [2 * i for i in bars] + [2 * j + 1 for j in reversed(nons)]
    sign = -1 if _inversions(target) % 2 else 1
    return sign * complex(np.linalg.det(D[np.ix_(bars, nons)]))


def gaussian_integral(f: GrassmannElement, D: np.ndarray) -> complex:
    """Gaussian integral with covariance D (determinant route)."""
    D = np.asarray(D)
    if 2 * D.shape[0] != f.n:
        raise ValidationError("covariance size does not match the generator count")
    return complex(sum(c * monomial_integral(m, D) for m, c in f.terms.items()))


def gaussian_integral_wick(f: GrassmannElement, D: np.ndarray) -> complex:
    """Gaussian integral by recursive Wick pairing with the antisymmetric pair table."""
    D = np.asarray(D)
    if 2 * D.shape[0] != f.n:
        raise ValidationError("covariance size does not match the generator count")

    def pair(g, h):
        if g % 2 == 0 and h % 2 == 1:
            return D[g >> 1, h >> 1]
        if g % 2 == 1 and h % 2 == 0:
            return -D[h >> 1, g >> 1]
        return 0.0

    @lru_cache(maxsize=None)
    def pf(seq):
        if not seq:
            return 1.0 + 0j
        first, rest = seq[0], seq[1:]
        total = 0j
        for k, g in enumerate(rest):
            p = pair(first, g)
            if p != 0:
                total += (-1) ** k * p * pf(rest[:k] + rest[k + 1:])
        return total

    out = 0j
    for m, c in f.terms.items():
        gens, bars, nons = _split(m)
        if len(bars) == len(nons):
            out += c * pf(tuple(gens))
    return complex(out)


# index sets and actions


def time_grid(params: ModelParams, h: float) -> np.ndarray:
    n = params.beta * h / 2
    if n < 0.5 or abs(n - round(n)) > 1e-9:
        raise ValidationError(f"h must be a positive multiple of 2/beta, got {h}")
    return np.arange(int(round(params.beta * h))) / h


class IndexSet:
    """Labels (site, s, time index) with s the spin (0 up, 1 down) or band (0, 1)."""

    def __init__(self, params: ModelParams, h: float):
        self.params = params
        self.h = h
        self.times = time_grid(params, h)
        self.nt = len(self.times)
        self.size = 2 * params.nsites * self.nt
        self.ngen = 2 * self.size
        if self.ngen > GENERATOR_CAP:
            raise ValidationError(f"{self.ngen} generators exceed the cap of {GENERATOR_CAP}")

    def index(self, site: int, s: int, t: int) -> int:
        return (site * 2 + s) * self.nt + t

    def labels(self):
        for site in range(self.params.nsites):
            for s in (0, 1):
                for t in range(self.nt):
                    yield site, s, t

    def bar(self, site, s, t) -> int:
        return 2 * self.index(site, s, t)

    def psi(self, site, s, t) -> int:
        return 2 * self.index(site, s, t) + 1


def covariance_G(params: ModelParams, X, Y) -> complex:
    """Spin-diagonal free covariance of H0 + i theta Sz; X = (site tuple, spin 0/1, time)."""
    from bcsif.covariance import propagator

    (x, sx, s), (y, sy, t) = X, Y
    if sx != sy:
        return 0j
    k = momentum_grid(params.L, params.d).points
    e = dispersion(params, k)
    eps = e + (0.5j if sx == 0 else -0.5j) * params.theta
    ph = np.exp(1j * k @ (np.atleast_1d(x) - np.atleast_1d(y)).astype(float))
    return complex(np.mean(ph * propagator(eps, s - t, params.beta)))


def covariance_table(params: ModelParams, idx: IndexSet) -> np.ndarray:
    sites = params.sites()
    D = np.zeros((idx.size, idx.size), dtype=complex)
    for a in idx.labels():
        for b in idx.labels():
            if a[1] != b[1]:
                continue
            D[idx.index(*a), idx.index(*b)] = covariance_G(
                params, (sites[a[0]], a[1], idx.times[a[2]]), (sites[b[0]], b[1], idx.times[b[2]])
            )
    return D


def build_actions(params: ModelParams, h: float, lam=(0.0, 0.0), kind: str = "spin") -> dict:
    """Grassmann polynomials of the time-discretized actions."""
    idx = IndexSet(params, h)
    n, ns, nt = idx.ngen, params.nsites, idx.nt
    beta, U = params.beta, params.U
    xh, yh = params.pair_sites()
    ix = params.site_index(xh)
    iy = params.site_index(yh) if yh is not None else None
    mono = GrassmannElement.monomial
    zero = GrassmannElement(n)
    if kind == "spin":
        b, p = idx.bar, idx.psi
        V, F, A1, A2, Vp, Vm, W = zero, zero, zero, zero, zero, zero, zero
        c = math.sqrt(abs(U) / beta) / (ns ** 0.5 * h)
        for t in range(nt):
            for x in range(ns):
                pc = mono(n, [b(x, 0, t), b(x, 1, t)])
                pa = mono(n, [p(x, 1, t), p(x, 0, t)])
                F = F + (pc + pa) * (params.gamma / h)
                Vp = Vp + pc * c
                Vm = Vm + pa * c
                for y in range(ns):
                    V = V + mono(n, [b(x, 0, t), b(x, 1, t), p(y, 1, t), p(y, 0, t)]) * (U / (h * ns))
                    for t2 in range(nt):
                        W = W + mono(n, [b(x, 0, t), b(x, 1, t), p(y, 1, t2), p(y, 0, t2)]) * (
                            U / (beta * ns * h * h))
            A1 = A1 + mono(n, [b(ix, 0, t), b(ix, 1, t)]) / h
            if iy is not None:
                A2 = A2 + mono(n, [b(ix, 0, t), b(ix, 1, t), p(iy, 1, t), p(iy, 0, t)]) / h
        A = A1 * lam[0] + A2 * lam[1]
        return {"V": V, "F": F, "A1": A1, "A2": A2, "A": A, "Vplus": Vp, "Vminus": Vm,
                "Wplus": Vp * 1j, "Wminus": Vm * 1j, "W": W, "index": idx}
    if kind == "band":
        b, p = idx.bar, idx.psi  # s = 0 band 1, s = 1 band 2
        V, W, A1, A2, Wp, Wm = zero, zero, zero, zero, zero, zero
        c = 1j * math.sqrt(abs(U) / beta) / (ns ** 0.5 * h)
        for t in range(nt):
            for x in range(ns):
                V = V + mono(n, [b(x, 0, t), p(x, 0, t)]) * (U / (ns * h))
                Wp = Wp + mono(n, [b(x, 0, t), p(x, 1, t)]) * c
                Wm = Wm + mono(n, [b(x, 1, t), p(x, 0, t)]) * c
                for y in range(ns):
                    V = V + mono(n, [b(x, 0, t), p(x, 1, t), b(y, 1, t), p(y, 0, t)]) * (U / (ns * h))
                    for t2 in range(nt):
                        W = W + mono(n, [b(x, 0, t), p(x, 1, t), b(y, 1, t2), p(y, 0, t2)]) * (
                            U / (beta * ns * h * h))
            A1 = A1 + mono(n, [b(ix, 0, t), p(ix, 1, t)]) / h
            if iy is not None:
                A2 = A2 + mono(n, [b(ix, 0, t), p(ix, 1, t), b(iy, 1, t), p(iy, 0, t)]) / h
        return {"V": V, "W": W, "A1": A1, "A2": A2, "A": A1 * lam[0] + A2 * lam[1],
                "Wplus": Wp, "Wminus": Wm, "index": idx}
    raise ValidationError("kind must be 'spin' or 'band'")


def _vertices(params: ModelParams, idx: IndexSet, lam):
    """Merged vertices (weight, X rows, Y cols, time) of the discrete series."""
    ns = params.nsites
    xh, yh = params.pair_sites()
    ix = params.site_index(xh)
    iy = params.site_index(yh) if yh is not None else None
    out = []
    for t in range(idx.nt):
        for x in range(ns):
            for y in range(ns):
                w = params.U / ns + (lam[1] if (x, y) == (ix, iy) else 0.0)
                out.append((w, [idx.index(x, 0, t), idx.index(x, 1, t)], [idx.index(y, 0, t), idx.index(y, 1, t)], t))
            out.append((params.gamma + (lam[0] if x == ix else 0.0), [idx.index(x, 0, t), idx.index(x, 1, t)], [], t))
            out.append((params.gamma, [], [idx.index(x, 0, t), idx.index(x, 1, t)], t))
    return [v for v in out if v[0] != 0]


def discrete_series(params: ModelParams, h: float, lam=(0.0, 0.0), constrained: bool = True,
                    D: Optional[np.ndarray] = None) -> complex:
    """P_h by enumeration of vertex subsets with determinants of G."""
    idx = IndexSet(params, h)
    if D is None:
        D = covariance_table(params, idx)
    verts = _vertices(params, idx, lam)
    total = 0j
    for r in range(len(verts) + 1):
        for S in itertools.combinations(verts, r):
            if constrained and len({v[3] for v in S}) < r:
                continue
            rows = [i for v in S for i in v[1] if v[1] and v[2]] + [i for v in S for i in v[1] if not v[2]]
            cols = [j for v in S for j in v[2] if v[1] and v[2]] + [j for v in S for j in v[2] if not v[1]]
            if len(rows) != len(cols):
                continue
            if len(set(rows)) < len(rows) or len(set(cols)) < len(cols):
                continue
            w = math.prod(-v[0] / h for v in S)
            total += w * (np.linalg.det(D[np.ix_(rows, cols)]) if rows else 1.0)
    return complex(total)


def series_element(params: ModelParams, h: float, lam=(0.0, 0.0)) -> GrassmannElement:
    """prod over merged vertices of (1 - w m / h) as a Grassmann element."""
    idx = IndexSet(params, h)
    n = idx.ngen
    out = GrassmannElement.scalar(n, 1.0)
    for w, X, Y, _ in _vertices(params, idx, lam):
        gens = []
        for i in X:
            gens.append(2 * i)
        for j in reversed(Y):
            gens.append(2 * j + 1)
        out = out * (1 - GrassmannElement.monomial(n, gens, w / h))
    return out


def partition_via_grassmann(params: ModelParams, h: float, lam=(0.0, 0.0), with_trace: bool = True) -> dict:
    """Grassmann integral of exp(-V-F-A), the discrete series with and without the
    distinct-times constraint, and (optionally) the exact Fock trace ratio."""
    act = build_actions(params, h, lam)
    idx = act["index"]
    D = covariance_table(params, idx)
    integrand = exp_element(-(act["V"] + act["F"] + act["A"]))
    out = {
        "grassmann": gaussian_integral(integrand, D),
        "ph_unconstrained": discrete_series(params, h, lam, constrained=False, D=D),
        "ph_constrained": discrete_series(params, h, lam, constrained=True, D=D),
        "coefficient_error": integrand.max_abs_diff(series_element(params, h, lam)),
    }
    if with_trace:
        from bcsif.fock import exact_partition_ratio

        out["trace_ratio"] = exact_partition_ratio(params, lam)
    return out


def hs_identity_check(params: ModelParams, h: float, nodes: Optional[int] = None, lam=(0.0, 0.0)) -> dict:
    """Max coefficient error between exp(-V-F-A) and the Gauss-Hermite average of
    exp(-V+W-F-A+phi V+ + phibar V-), plus the integrated values of both."""
    act = build_actions(params, h, lam)
    idx = act["index"]
    deg = 2 * params.nsites * idx.nt
    need = 2 * deg + 1
    nodes = nodes or need
    if nodes < need:
        raise ValidationError(f"Gauss-Hermite needs at least {need} nodes for exactness")
    lhs = exp_element(-(act["V"] + act["F"] + act["A"]))
    base = -act["V"] + act["W"] - act["F"] - act["A"]
    x, w = np.polynomial.hermite.hermgauss(nodes)
    rhs = GrassmannElement(idx.ngen)
    for a, wa in zip(x, w):
        for b, wb in zip(x, w):
            phi = complex(a, b)
            rhs = rhs + exp_element(base + act["Vplus"] * phi + act["Vminus"] * phi.conjugate()) * (wa * wb / math.pi)
    D = covariance_table(params, idx)
    return {"abs_err": lhs.max_abs_diff(rhs), "lhs_integral": gaussian_integral(lhs, D),
            "rhs_integral": gaussian_integral(rhs, D), "nodes": nodes}


def scalar_hs_prototype(a: complex, b: complex, nodes: int = 40) -> complex:
    """(1/pi) * integral of exp(-|phi|^2 + phi a + phibar b) by Gauss-Hermite."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    g1, g2 = np.meshgrid(x, x, indexing="ij")
    phi = g1 + 1j * g2
    return complex(np.sum(np.outer(w, w) * np.exp(phi * a + np.conj(phi) * b)) / math.pi)


def log_moment_check(f: GrassmannElement, C: np.ndarray, n: int = 3) -> dict:
    """Coefficients (1/m!) d^m/dz^m log integral e^{zf} dmu_C at z = 0, m = 1..n, by a
    series logarithm of the moment polynomial and by the cumulant recursion."""
    if not 1 <= n <= 3:
        raise ValidationError("n must lie in 1..3")
    mom = [1 + 0j]
    power = GrassmannElement.scalar(f.n, 1.0)
    for _ in range(n):
        power = power * f
        mom.append(gaussian_integral(power, C))
    # route 1: log of P(z) = sum_m mom_m z^m / m!
    P = np.array([mom[m] / math.factorial(m) for m in range(n + 1)])
    x = P.copy()
    x[0] = 0
    series = np.zeros(n + 1, dtype=complex)
    term = np.zeros(n + 1, dtype=complex)
    term[0] = 1
    for k in range(1, n + 1):
        term = np.convolve(term, x)[: n + 1]
        series += (-1) ** (k - 1) / k * term
    # route 2: cumulants kappa_m = mom_m - sum_{j<m} C(m-1, j-1) kappa_j mom_{m-j}
    kap = [0j] * (n + 1)
    for m in range(1, n + 1):
        kap[m] = mom[m] - sum(math.comb(m - 1, j - 1) * kap[j] * mom[m - j] for j in range(1, m))
    cum = [kap[m] / math.factorial(m) for m in range(1, n + 1)]
    return {"series": [complex(v) for v in series[1:]], "cumulant": cum, "moments": mom[1:]}
