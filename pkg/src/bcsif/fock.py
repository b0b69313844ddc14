"""Exact fermionic Fock-space oracle for small lattices.

Modes are ordered site-major, spin- (or band-) minor: mode = 2*site + s with
s = 0 for spin up / band 1 and s = 1 for spin down / band 2.  Jordan-Wigner
signs count occupied modes of lower index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from bcsif.model import ModelParams, NumericalError, ValidationError, dispersion, momentum_grid

MODE_CAP = 16


def _record(check, lhs, rhs, tol, rel=True):
    lhs, rhs = complex(lhs), complex(rhs)
    abs_err = abs(lhs - rhs)
    rel_err = abs_err / abs(rhs) if abs(rhs) > 0 else abs_err
    err = rel_err if rel else abs_err
    return {"check": check, "lhs": lhs, "rhs": rhs, "abs_err": abs_err, "rel_err": rel_err,
            "tol": tol, "pass": bool(err < tol)}


class FockSpace:
    """Fermionic Fock space over ``len(labels)`` modes with bitmask basis states."""

    def __init__(self, labels: Sequence):
        self.labels = list(labels)
        self.n = len(self.labels)
        if self.n > MODE_CAP:
            raise ValidationError(
                f"{self.n} modes exceed the cap of {MODE_CAP} (dimension 2^{self.n} = {2**self.n})"
            )
        self.dim = 2**self.n
        self.states = np.arange(self.dim, dtype=np.int64)
        self._ann = [self._annihilator(j) for j in range(self.n)]

    def _annihilator(self, j: int) -> sp.csr_matrix:
        s = self.states
        occ = (s >> j) & 1 == 1
        src = s[occ]
        below = np.bitwise_count(src & ((1 << j) - 1))
        sign = np.where(below % 2 == 0, 1.0, -1.0)
        return sp.csr_matrix((sign.astype(complex), (src ^ (1 << j), src)), shape=(self.dim, self.dim))

    def a(self, j: int) -> sp.csr_matrix:
        return self._ann[j]

    def adag(self, j: int) -> sp.csr_matrix:
        return self._ann[j].conj().T.tocsr()

    def number(self, j: int) -> sp.csr_matrix:
        occ = ((self.states >> j) & 1).astype(complex)
        return sp.diags(occ).tocsr()

    def identity(self) -> sp.csr_matrix:
        return sp.identity(self.dim, dtype=complex, format="csr")

    def zero(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.dim, self.dim), dtype=complex)

    def quadratic(self, h: np.ndarray, left: Sequence[int], right: Sequence[int]) -> sp.csr_matrix:
        """sum_ab h[a,b] a_dag(left[a]) a(right[b])."""
        out = self.zero()
        for i, li in enumerate(left):
            for j, rj in enumerate(right):
                if h[i, j] != 0:
                    out = out + h[i, j] * (self.adag(li) @ self.a(rj))
        return out.tocsr()

    def weight(self, modes: Sequence[int]) -> np.ndarray:
        """Occupation count of the given modes for every basis state."""
        mask = 0
        for m in modes:
            mask |= 1 << m
        return np.bitwise_count(self.states & mask)


@dataclass
class FockOperatorSet:
    space: FockSpace
    params: ModelParams
    ops: Dict[str, sp.csr_matrix] = field(default_factory=dict)

    def __getitem__(self, name: str) -> sp.csr_matrix:
        return self.ops[name]

    def dense(self, name: str) -> np.ndarray:
        return self.ops[name].toarray()


def hopping_matrix(params: ModelParams) -> np.ndarray:
    """Single-particle real-space matrix with both +e_j and -e_j hops, minus mu."""
    n = params.nsites
    s = -1.0 if params.hop else 1.0
    T = np.zeros((n, n))
    for x in params.sites():
        i = params.site_index(x)
        for j in range(params.d):
            for step in (1, -1):
                y = list(x)
                y[j] += step
                T[i, params.site_index(y)] += s
    return T - params.mu * np.eye(n)


def _hs_scale(params: ModelParams) -> float:
    return math.sqrt(params.absU / params.beta) / params.L ** (params.d / 2)


def build_spin_operators(params: ModelParams) -> FockOperatorSet:
    """H0, V, H, F, Sz, N, A1, A2 (when yhat exists), Vplus, Vminus, Wplus, Wminus."""
    ns = params.nsites
    fs = FockSpace([(x, s) for x in params.sites() for s in "ud"])
    up = [2 * i for i in range(ns)]
    dn = [2 * i + 1 for i in range(ns)]
    hm = hopping_matrix(params)
    H0 = fs.quadratic(hm, up, up) + fs.quadratic(hm, dn, dn)
    Pdag = fs.zero()
    for i in range(ns):
        Pdag = Pdag + fs.adag(up[i]) @ fs.adag(dn[i])
    Pdag = Pdag.tocsr()
    P = Pdag.conj().T.tocsr()
    V = (params.U / ns) * (Pdag @ P)
    Sz = fs.zero()
    N = fs.zero()
    for i in range(ns):
        Sz = Sz + 0.5 * (fs.number(up[i]) - fs.number(dn[i]))
        N = N + fs.number(up[i]) + fs.number(dn[i])
    xh, yh = params.pair_sites()
    ix = params.site_index(xh)
    A1 = (fs.adag(up[ix]) @ fs.adag(dn[ix])).tocsr()
    c = _hs_scale(params)
    ops = {
        "H0": H0.tocsr(), "V": V.tocsr(), "H": (H0 + V).tocsr(), "F": (params.gamma * (Pdag + P)).tocsr(),
        "Sz": Sz.tocsr(), "N": N.tocsr(), "A1": A1, "Pdag": Pdag, "P": P,
        "Vplus": c * Pdag, "Vminus": c * P, "Wplus": 1j * c * Pdag, "Wminus": 1j * c * P,
    }
    if yh is not None:
        iy = params.site_index(yh)
        ops["A2"] = (A1 @ fs.a(dn[iy]) @ fs.a(up[iy])).tocsr()
    return FockOperatorSet(fs, params, ops)


def build_band_operators(params: ModelParams, phi: complex = 0.0, theta: Optional[float] = None) -> FockOperatorSet:
    """H0phi, O12, O21, Vb, Ab1, Ab2 (when yhat exists), Wplus, Wminus, N."""
    theta = params.theta if theta is None else theta
    ns = params.nsites
    fs = FockSpace([(b, x) for x in params.sites() for b in (1, 2)])
    b1 = [2 * i for i in range(ns)]
    b2 = [2 * i + 1 for i in range(ns)]
    hm = hopping_matrix(params)
    N = fs.zero()
    for m in range(fs.n):
        N = N + fs.number(m)
    O12 = fs.quadratic(np.eye(ns), b1, b2)
    O21 = fs.quadratic(np.eye(ns), b2, b1)
    diag = 0.5j * theta * N + fs.quadratic(hm, b1, b1) - fs.quadratic(hm, b2, b2)
    H0 = diag + phi * O12 + np.conj(phi) * O21
    Vb = (params.U / ns) * fs.quadratic(np.eye(ns), b1, b1)
    for x in range(ns):
        for y in range(ns):
            Vb = Vb - (params.U / ns) * (fs.adag(b1[x]) @ fs.adag(b2[y]) @ fs.a(b2[x]) @ fs.a(b1[y]))
    xh, yh = params.pair_sites()
    ix = params.site_index(xh)
    c = _hs_scale(params)
    ops = {
        "H0free": diag.tocsr(), "H0phi": H0.tocsr(), "O12": O12, "O21": O21, "Vb": Vb.tocsr(),
        "Ab1": (fs.adag(b1[ix]) @ fs.a(b2[ix])).tocsr(), "N": N.tocsr(),
        "Wplus": 1j * c * O12, "Wminus": 1j * c * O21,
    }
    if yh is not None:
        iy = params.site_index(yh)
        ops["Ab2"] = (-(fs.adag(b1[ix]) @ fs.adag(b2[iy]) @ fs.a(b2[ix]) @ fs.a(b1[iy]))).tocsr()
    return FockOperatorSet(fs, params, ops)


def trace_exp(K, beta: float, blocks: Optional[Sequence[np.ndarray]] = None) -> complex:
    """Tr exp(-beta K) by scaling-and-squaring Pade, optionally block by block."""
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite matrix entries")
    if blocks is None:
        return complex(np.trace(scipy.linalg.expm(-beta * K)))
    return complex(sum(np.trace(scipy.linalg.expm(-beta * K[np.ix_(b, b)])) for b in blocks))


def sz_blocks(ops: FockOperatorSet) -> list:
    """Basis index sets of fixed 2*Sz."""
    fs = ops.space
    ns = ops.params.nsites
    two_sz = fs.weight(range(0, 2 * ns, 2)) - fs.weight(range(1, 2 * ns, 2))
    return [np.flatnonzero(two_sz == m) for m in np.unique(two_sz)]


def number_blocks(ops: FockOperatorSet) -> list:
    n = ops.space.weight(range(ops.space.n))
    return [np.flatnonzero(n == m) for m in np.unique(n)]


def free_product(params: ModelParams, theta: Optional[float] = None) -> complex:
    """prod_k (1 + 2 cos(beta theta/2) e^{-beta e} + e^{-2 beta e})."""
    theta = params.theta if theta is None else theta
    e = dispersion(params, momentum_grid(params.L, params.d).points)
    q = np.exp(-params.beta * e)
    return complex(np.prod(1 + 2 * math.cos(params.beta * theta / 2) * q + q * q))


def band_free_product(params: ModelParams, phi: complex, theta: Optional[float] = None) -> complex:
    """prod_k prod_{+-} (1 + e^{-beta(i theta/2 +- sqrt(e^2 + |phi|^2))})."""
    theta = params.theta if theta is None else theta
    e = dispersion(params, momentum_grid(params.L, params.d).points)
    E = np.sqrt(e * e + abs(phi) ** 2)
    z = np.exp(-0.5j * params.beta * theta)
    return complex(np.prod((1 + z * np.exp(-params.beta * E)) * (1 + z * np.exp(params.beta * E))))


def B_ratio(params: ModelParams, phi) -> np.ndarray:
    """prod_k (c + cosh(beta sqrt(e^2+|phi|^2))) / prod_k (c + cosh(beta e)), vectorized in phi."""
    from bcsif.gap import log_cosh_shift

    e = dispersion(params, momentum_grid(params.L, params.d).points)
    a2 = np.abs(np.asarray(phi)) ** 2
    E = np.sqrt(e[None, :] ** 2 + np.ravel(a2)[:, None])
    num = log_cosh_shift(params, params.beta * E).sum(axis=1)
    den = log_cosh_shift(params, params.beta * np.abs(e)).sum()
    return np.exp(num - den).reshape(np.shape(a2))


def free_partition_check(params: ModelParams) -> dict:
    ops = build_spin_operators(params)
    K = ops["H0"] + 1j * params.theta * ops["Sz"]
    tr = trace_exp(K, params.beta)
    prod = free_product(params)
    return {"trace": tr, "product": prod, "abs_err": abs(tr - prod)}


def band_partition_check(params: ModelParams, phi: complex) -> dict:
    ops = build_band_operators(params, phi)
    tr = trace_exp(ops["H0phi"], params.beta)
    prod = band_free_product(params, phi)
    return {"trace": tr, "product": prod, "abs_err": abs(tr - prod)}


def spin_kernel(params: ModelParams, ops: FockOperatorSet, theta: Optional[float] = None, lam=(0.0, 0.0)):
    theta = params.theta if theta is None else theta
    K = ops["H"] + 1j * theta * ops["Sz"] + ops["F"]
    if lam[0]:
        K = K + lam[0] * ops["A1"]
    if lam[1]:
        K = K + lam[1] * ops["A2"]
    return K


def _insert(Kd, O, beta):
    return complex(np.trace(scipy.linalg.expm(-beta * Kd) @ O))


def reality_periodicity_check(params: ModelParams, tol: float = 1e-9) -> list:
    """Reality of the traces with and without A1/A2 insertions, A1 versus A1*
    insertion, and invariance under theta -> theta + 4 pi/beta and theta -> -theta."""
    ops = build_spin_operators(params)
    beta = params.beta
    K = spin_kernel(params, ops).toarray()
    Ex = scipy.linalg.expm(-beta * K)
    Z = np.trace(Ex)
    recs = [_record("imag Tr e^{-beta K}", Z.imag, 0.0, tol * abs(Z.real) + 1e-300, rel=False)]
    ins = {"A1": ops.dense("A1"), "A1*": ops.dense("A1").conj().T}
    if "A2" in ops.ops:
        ins["A2"] = ops.dense("A2")
    vals = {k: np.trace(Ex @ v) for k, v in ins.items()}
    scale = max(abs(Z), 1e-300)
    for k, v in vals.items():
        recs.append(_record(f"imag Tr(e^{{-beta K}} {k})", v.imag, 0.0, tol * scale, rel=False))
    recs.append(_record("Tr(e^{-beta K} A1) = Tr(e^{-beta K} A1*)", vals["A1"], vals["A1*"], tol * scale, rel=False))
    shifted = trace_exp(spin_kernel(params, ops, theta=params.theta + 4 * math.pi / beta), beta)
    recs.append(_record("theta + 4pi/beta periodicity", shifted, Z, tol))
    flipped = trace_exp(spin_kernel(params, ops, theta=-params.theta), beta)
    recs.append(_record("theta -> -theta symmetry", flipped, Z, tol))
    return recs


def periodic_reduction_check(params: ModelParams, theta: float, tol: float = 1e-9) -> dict:
    """Trace at theta equals the trace at |theta'|, theta' = theta mod 4pi/beta in (-2pi/beta, 2pi/beta]."""
    beta = params.beta
    p = 4 * math.pi / beta
    tp = (theta + p / 2) % p - p / 2
    if tp <= -p / 2:
        tp += p
    ops = build_spin_operators(params)
    a = trace_exp(spin_kernel(params, ops, theta=theta), beta)
    b = trace_exp(spin_kernel(params, ops, theta=abs(tp)), beta)
    return _record(f"theta={theta:.6g} vs |theta'|={abs(tp):.6g}", a, b, tol)


def covariance_from_traces(params: ModelParams, phi: complex, X, Y) -> complex:
    """Time-ordered two-point function of H0(phi) from Fock traces; X = (band, site, time)."""
    ops = build_band_operators(params, phi)
    H = ops.dense("H0phi")
    beta = params.beta
    (rho, x, s), (eta, y, t) = X, Y
    for tm in (s, t):
        if not 0 <= tm < beta:
            raise ValidationError("times must lie in [0, beta)")
    fs = ops.space
    mx = 2 * params.site_index(np.atleast_1d(x)) + rho - 1
    my = 2 * params.site_index(np.atleast_1d(y)) + eta - 1
    cd = fs.adag(mx).toarray()
    c = fs.a(my).toarray()
    ex = scipy.linalg.expm
    cd_s = ex(s * H) @ cd @ ex(-s * H)
    c_t = ex(t * H) @ c @ ex(-t * H)
    rho_m = ex(-beta * H)
    Z = np.trace(rho_m)
    if s >= t:
        return complex(np.trace(rho_m @ cd_s @ c_t) / Z)
    return complex(-np.trace(rho_m @ c_t @ cd_s) / Z)


def spin_two_point(params: ModelParams, X, Y) -> complex:
    """Time-ordered <psi*_X(s) psi_Y(t)> of H0 + i theta Sz; X = (site, spin 0/1, time)."""
    ops = build_spin_operators(params)
    H = (ops["H0"] + 1j * params.theta * ops["Sz"]).toarray()
    (x, sx, s), (y, sy, t) = X, Y
    fs = ops.space
    mx = 2 * params.site_index(np.atleast_1d(x)) + sx
    my = 2 * params.site_index(np.atleast_1d(y)) + sy
    ex = scipy.linalg.expm
    cd_s = ex(s * H) @ fs.adag(mx).toarray() @ ex(-s * H)
    c_t = ex(t * H) @ fs.a(my).toarray() @ ex(-t * H)
    rho_m = ex(-params.beta * H)
    Z = np.trace(rho_m)
    if s >= t:
        return complex(np.trace(rho_m @ cd_s @ c_t) / Z)
    return complex(-np.trace(rho_m @ c_t @ cd_s) / Z)


def partition_equality_inside(params: ModelParams, phi: complex, xi: complex, lam=(0.0, 0.0)) -> dict:
    """Both sides of the spin/band trace identity at fixed auxiliary fields (phi, xi)."""
    beta = params.beta
    so = build_spin_operators(params)
    K = spin_kernel(params, so, lam=lam) - phi * so["Vplus"] - np.conj(phi) * so["Vminus"] \
        - xi * so["Wplus"] - np.conj(xi) * so["Wminus"]
    lhs = trace_exp(K, beta) / trace_exp(so["H0"] + 1j * params.theta * so["Sz"], beta)
    php = params.gamma - _hs_scale(params) * phi
    bo = build_band_operators(params, php)
    Kb = bo["H0phi"] + bo["Vb"] - xi * bo["Wplus"] - np.conj(xi) * bo["Wminus"]
    if lam[0]:
        Kb = Kb + lam[0] * bo["Ab1"]
    if lam[1]:
        Kb = Kb + lam[1] * bo["Ab2"]
    rhs = B_ratio(params, php)[()] * trace_exp(Kb, beta) / trace_exp(bo["H0phi"], beta)
    return {"lhs": complex(lhs), "rhs": complex(rhs), "abs_err": abs(lhs - rhs)}


def _gauss_hermite(n: int):
    x, w = np.polynomial.hermite.hermgauss(n)
    return x, w


def _hs_integrand(params: ModelParams, nodes: int, insertion: Optional[str], chunk: int = 40000):
    """Weighted band-side integrand on the 4-fold Gauss-Hermite grid, split by particle number."""
    beta = params.beta
    x, w = _gauss_hermite(nodes)
    g1, g2 = np.meshgrid(x, x, indexing="ij")
    z = (g1 + 1j * g2).ravel()
    wz = (np.outer(w, w) / math.pi).ravel()
    phi = np.repeat(z, z.size)
    xi = np.tile(z, z.size)
    wt = np.repeat(wz, wz.size) * np.tile(wz, wz.size)
    c = _hs_scale(params)
    php = params.gamma - c * phi
    p = php - 1j * c * xi
    q = np.conj(php) - 1j * c * np.conj(xi)
    bo = build_band_operators(params, 0.0)
    Kfix = (bo["H0free"] + bo["Vb"]).toarray()
    O12, O21 = bo.dense("O12"), bo.dense("O21")
    A = bo.dense(insertion) if insertion else None
    # prefactor B(phi')/Tr e^{-beta H0(phi')}
    pre = B_ratio(params, php) / _band_free_products(params, php)
    total = np.zeros(phi.size, dtype=complex)
    for blk in number_blocks(bo):
        ix = np.ix_(blk, blk)
        Kf, a12, a21 = Kfix[ix], O12[ix], O21[ix]
        Ab = A[ix] if A is not None else None
        if Ab is not None and not np.any(Ab):
            continue
        for lo in range(0, phi.size, chunk):
            sl = slice(lo, lo + chunk)
            Ks = Kf[None] + p[sl, None, None] * a12[None] + q[sl, None, None] * a21[None]
            if Ab is None:
                ev = np.linalg.eigvals(Ks)
                total[sl] += np.exp(-beta * ev).sum(axis=1)
            else:
                ev, vec = np.linalg.eig(Ks)
                proj = np.linalg.solve(vec, Ab[None] @ vec)
                total[sl] += np.einsum("ni,nii->n", np.exp(-beta * ev), proj)
    vals = wt * pre * total
    return vals, np.maximum(np.abs(phi), np.abs(xi)), x.max()


def _band_free_products(params: ModelParams, phi: np.ndarray) -> np.ndarray:
    e = dispersion(params, momentum_grid(params.L, params.d).points)
    E = np.sqrt(e[None, :] ** 2 + np.abs(phi)[:, None] ** 2)
    zz = np.exp(-0.5j * params.beta * params.theta)
    f = (1 + zz * np.exp(-params.beta * E)) * (1 + zz * np.exp(params.beta * E))
    return np.prod(f, axis=1)


def _hs_sum(vals, radius, rmax, tail_tol):
    total = vals.sum()
    ring = np.abs(vals[radius >= rmax * (1 - 1e-12)]).sum()
    if ring > tail_tol * max(abs(total), 1e-300):
        raise NumericalError(f"Gauss-Hermite tail residual {ring / abs(total):.3g} above {tail_tol:g}")
    return complex(total)


def hs_partition(params: ModelParams, nodes: int = 24, tail_tol: float = 1e-8) -> complex:
    """4-fold Gauss-Hermite value of the auxiliary-field representation of
    Tr e^{-beta(H + i theta Sz + F)} / Tr e^{-beta(H0 + i theta Sz)}."""
    if nodes < 24:
        raise ValidationError("hs quadrature needs at least 24 nodes per axis")
    vals, r, rmax = _hs_integrand(params, nodes, None)
    return _hs_sum(vals, r, rmax, tail_tol)


def hs_correlation(params: ModelParams, j: int, nodes: int = 24, tail_tol: float = 1e-8) -> complex:
    """Same representation for Tr(e^{-beta(H + i theta Sz + F)} A_j) / Tr e^{-beta(H0 + i theta Sz)}."""
    if j not in (1, 2):
        raise ValidationError("j must be 1 or 2")
    if nodes < 24:
        raise ValidationError("hs quadrature needs at least 24 nodes per axis")
    if j == 2 and params.pair_sites()[1] is None:
        raise ValidationError("A2 needs two distinct sites (L > 1)")
    vals, r, rmax = _hs_integrand(params, nodes, f"Ab{j}")
    return _hs_sum(vals, r, rmax, tail_tol)


def exact_partition_ratio(params: ModelParams, lam=(0.0, 0.0)) -> complex:
    ops = build_spin_operators(params)
    num = trace_exp(spin_kernel(params, ops, lam=lam), params.beta)
    return num / trace_exp(ops["H0"] + 1j * params.theta * ops["Sz"], params.beta)


def exact_correlation_ratio(params: ModelParams, j: int) -> complex:
    ops = build_spin_operators(params)
    K = spin_kernel(params, ops).toarray()
    num = _insert(K, ops.dense(f"A{j}"), params.beta)
    return num / trace_exp(ops["H0"] + 1j * params.theta * ops["Sz"], params.beta)


def thermal_expectation(params: ModelParams, observable: str = "A1") -> complex:
    """Tr(e^{-beta(H + i theta Sz + F)} O) / Tr e^{-beta(H + i theta Sz + F)} using
    Hermitian eigendecomposition of H + F on each fixed-Sz block."""
    ops = build_spin_operators(params)
    names = {"A1": "A1", "A1*": "A1", "A1dag": "A1", "A2": "A2"}
    if observable not in names:
        raise ValidationError(f"unknown observable {observable!r}")
    if names[observable] not in ops.ops:
        raise ValidationError("A2 needs two distinct sites (L > 1)")
    O = ops[names[observable]]
    if observable in ("A1*", "A1dag"):
        O = O.conj().T.tocsr()
    HF = (ops["H"] + ops["F"]).tocsr()
    Sz = ops["Sz"].diagonal().real
    blocks = sz_blocks(ops)
    evs, data = [], []
    for b in blocks:
        lam, vec = np.linalg.eigh(HF[b][:, b].toarray())
        Ob = O[b][:, b].toarray()
        diag = np.einsum("ji,jk,ki->i", vec.conj(), Ob, vec)
        evs.append(lam)
        data.append((lam, diag, Sz[b[0]]))
    shift = min(l.min() for l in evs)
    num = den = 0j
    for lam, diag, m in data:
        wts = np.exp(-params.beta * (lam - shift)) * np.exp(-1j * params.beta * params.theta * m)
        num += np.sum(wts * diag)
        den += np.sum(wts)
    return complex(num / den)
