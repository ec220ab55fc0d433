"""Toroidal quantization to dense mode-space matrices and the
variable-order Sobolev test harness built on top of it.

Fourier modes are integer vectors with |xi|_inf <= N, enumerated
lexicographically; a section is stored mode-major, so the operator
matrix is made of M2 x M1 blocks indexed by (row mode, column mode).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConditioningError, ResolutionError, ShapeError
from .matfun import torus_grid
from .powers import bracket_power
from .seminorms import fit_loglog
from .symbols import TrigPolySymbol


@lru_cache(maxsize=None)
def mode_set(q, N):
    """Lexicographic integer modes with |xi|_inf <= N, plus an index map."""
    rng = range(-N, N + 1)
    if q == 1:
        modes = tuple((k,) for k in rng)
    else:
        from itertools import product
        modes = tuple(product(rng, repeat=q))
    index = {m: i for i, m in enumerate(modes)}
    return modes, index


def bracket(xi):
    xi = np.asarray(xi, dtype=float)
    return float(np.sqrt(1.0 + np.sum(xi * xi, axis=-1)))


class TruncatedOperator:
    """Dense matrix of an operator on the truncated Fourier modes."""

    def __init__(self, matrix, q, N, m_in, m_out, provenance=None):
        modes, _ = mode_set(q, N)
        nm = len(modes)
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (nm * m_out, nm * m_in):
            raise ShapeError(
                f"matrix shape {matrix.shape} inconsistent with "
                f"N = {N}, sizes ({m_out}, {m_in})")
        if not np.all(np.isfinite(matrix)):
            raise ShapeError("operator matrix has non-finite entries")
        self.matrix = matrix
        self.q = q
        self.N = N
        self.m_in = m_in
        self.m_out = m_out
        self.provenance = dict(provenance or {})

    @property
    def modes(self):
        return mode_set(self.q, self.N)[0]

    def clone_with(self, matrix):
        return TruncatedOperator(matrix, self.q, self.N, self.m_in,
                                 self.m_out, self.provenance)

    def apply(self, section):
        if (section.q, section.N, section.m) != (self.q, self.N, self.m_in):
            raise ShapeError("section does not match the operator domain")
        out = self.matrix @ section.coeffs.reshape(-1)
        return GridSection(out.reshape(-1, self.m_out), self.q, self.N)

    def adjoint_matrix(self):
        return self.matrix.conj().T

    def compose(self, other):
        if (other.q, other.N, other.m_out) != (self.q, self.N, self.m_in):
            raise ShapeError("operators do not chain")
        return TruncatedOperator(self.matrix @ other.matrix, self.q, self.N,
                                 other.m_in, self.m_out)

    def interior_indices(self, frac=2, side="both"):
        """Flat indices of modes with |xi|_inf <= N // frac."""
        keep = [i for i, m in enumerate(self.modes)
                if max(abs(c) for c in m) <= self.N // frac]
        rows = np.concatenate([np.arange(self.m_out) + i * self.m_out
                               for i in keep])
        cols = np.concatenate([np.arange(self.m_in) + i * self.m_in
                               for i in keep])
        return rows, cols

    def interior_norm(self, frac=2):
        rows, cols = self.interior_indices(frac)
        sub = self.matrix[np.ix_(rows, cols)]
        return float(np.linalg.norm(sub, 2))

    def to_json(self):
        return {
            "schema": "psivar-operator/1",
            "q": self.q, "N": self.N,
            "m_in": self.m_in, "m_out": self.m_out,
            "matrix": [[[float(v.real), float(v.imag)] for v in row]
                       for row in self.matrix],
        }

    @classmethod
    def from_json(cls, data):
        if data.get("schema") != "psivar-operator/1":
            raise ShapeError("unknown operator schema")
        mat = np.array([[complex(re, im) for re, im in row]
                        for row in data["matrix"]])
        return cls(mat, data["q"], data["N"], data["m_in"], data["m_out"])


class GridSection:
    """Fourier coefficients of a section on the truncated modes."""

    def __init__(self, coeffs, q, N):
        modes, _ = mode_set(q, N)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != len(modes):
            raise ShapeError("coefficient count does not match the modes")
        self.coeffs = coeffs
        self.q = q
        self.N = N

    @property
    def m(self):
        return self.coeffs.shape[1]

    def flat(self):
        return self.coeffs.reshape(-1)

    @classmethod
    def from_profile(cls, profile, q, N, m=1):
        """Coefficients from a callable xi -> scalar or length-m vector."""
        modes, _ = mode_set(q, N)
        rows = []
        for xi in modes:
            v = np.atleast_1d(np.asarray(profile(np.array(xi)), dtype=complex))
            rows.append(np.broadcast_to(v, (m,)).copy())
        return cls(np.stack(rows), q, N)

    @classmethod
    def random(cls, q, N, m=1, seed=0):
        rng = np.random.default_rng(seed)
        modes, _ = mode_set(q, N)
        c = rng.standard_normal((len(modes), m)) \
            + 1j * rng.standard_normal((len(modes), m))
        return cls(c, q, N)

    def restrict(self, N_small):
        modes, _ = mode_set(self.q, self.N)
        small, _ = mode_set(self.q, N_small)
        idx = [mode_set(self.q, self.N)[1][m] for m in small]
        return GridSection(self.coeffs[idx], self.q, N_small)

    def to_json(self):
        return {
            "schema": "psivar-gridsection/1",
            "q": self.q, "N": self.N, "m": self.m,
            "coeffs": [[[float(v.real), float(v.imag)] for v in row]
                       for row in self.coeffs],
        }

    @classmethod
    def from_json(cls, data):
        if data.get("schema") != "psivar-gridsection/1":
            raise ShapeError("unknown section schema")
        c = np.array([[complex(re, im) for re, im in row]
                      for row in data["coeffs"]])
        return cls(c, data["q"], data["N"])


def quantize(p, N, alias_tol=1e-8, provenance=None):
    """Dense matrix of Op(p) on the modes |xi|_inf <= N.

    Block (xi', xi) is the y-Fourier coefficient of p(., xi) at frequency
    xi' - xi, computed on a y-grid of 4(N+1) points per axis; the margin
    keeps every needed frequency strictly inside the grid band.
    """
    if N < 4:
        raise ShapeError("need N >= 4")
    q, m_in, m_out = p.q, p.m_in, p.m_out
    G = 4 * (N + 1)
    pts = torus_grid(q, G)
    modes, index = mode_set(q, N)
    nm = len(modes)
    modes_arr = np.array(modes)
    mat = np.zeros((nm * m_out, nm * m_in), dtype=complex)
    view = mat.reshape(nm, m_out, nm, m_in)

    # near-Nyquist detector: any axis frequency within 2 of the band edge
    freqs = np.fft.fftfreq(G, d=1.0 / G).astype(int)       # signed k per index
    edge = np.abs(freqs) >= G // 2 - 1

    for col, xi in enumerate(modes):
        vals = p(pts, np.array(xi, dtype=float))
        field = vals.reshape((G,) * q + (m_out, m_in))
        coef = np.fft.fftn(field, axes=tuple(range(q))) / G ** q
        energy = np.abs(coef) ** 2
        total = float(energy.sum())
        if total > 0:
            mask = np.zeros((G,) * q, dtype=bool)
            for axis in range(q):
                shape = [1] * q
                shape[axis] = G
                mask |= edge.reshape(shape)
            tail = float(energy[mask].sum())
            if tail > alias_tol * total:
                raise ResolutionError(
                    f"aliasing detected for column mode {xi}: "
                    f"near-Nyquist energy fraction {tail / total:.2e}")
        k = modes_arr - np.array(xi)                       # (nm, q)
        flat = np.ravel_multi_index((k % G).T, (G,) * q)
        view[:, :, col, :] = coef.reshape(G ** q, m_out, m_in)[flat]
    prov = {"N": N, "grid": G}
    prov.update(provenance or {})
    return TruncatedOperator(mat, q, N, m_in, m_out, prov)


def multiplier_operator(profile, q, N, m=1):
    """Diagonal operator from a scalar multiplier xi -> value."""
    modes, _ = mode_set(q, N)
    diag = np.concatenate([[complex(profile(np.array(xi)))] * m
                           for xi in modes])
    return TruncatedOperator(np.diag(diag), q, N, m, m)


def lambda_operator(field, s, N, q=1, c0=1.0, delta=0.5, grid_n=16):
    """Quantized norm operator with symbol <eta>^{s + a(y)}."""
    if field is None:
        sym = TrigPolySymbol.multiplier(s / 2.0, q=q, order=s, c0=c0)
        return quantize(sym, N, provenance={"kind": "lambda", "s": s})
    sym = bracket_power(field, s=s, c0=c0, delta=delta, grid_n=grid_n)
    return quantize(sym, N, provenance={"kind": "lambda", "s": s})


def sobolev_norm(u, lam):
    """l2 norm of Lambda u; Lambda encodes the smoothness scale."""
    return float(np.linalg.norm(lam.apply(u).flat()))


def mapping_bound(T, lam_in, lam_out, cond_floor=1e-12):
    """Exact operator norm of Lambda_out T Lambda_in^{-1} on the modes."""
    sv_in = np.linalg.svd(lam_in.matrix, compute_uv=False)
    if sv_in[-1] < cond_floor * sv_in[0]:
        raise ConditioningError("domain norm operator is numerically singular")
    mid = lam_out.matrix @ T.matrix @ np.linalg.inv(lam_in.matrix)
    return float(np.linalg.norm(mid, 2))


def duality_pairing(u, v):
    """sum_xi <u_hat(xi), v_hat(xi)> (antilinear in the second slot)."""
    if (u.q, u.N, u.m) != (v.q, v.N, v.m):
        raise ShapeError("sections do not share a truncation")
    return complex(np.sum(np.conj(v.coeffs) * u.coeffs))


@dataclass
class RegularityReport:
    ns: list
    target_norms: list
    control_norms: list
    target_slope: float
    control_slope: float
    bounded: bool

    def to_json(self):
        return {"ns": self.ns, "target_norms": self.target_norms,
                "control_norms": self.control_norms,
                "target_slope": self.target_slope,
                "control_slope": self.control_slope,
                "bounded": self.bounded}


def regularity_probe(family, f_profile, s, mu, act_domain=None, q=1,
                     Ns=(8, 16, 32), control_shift=0.75, slope_tol=0.1,
                     cond_floor=1e-12):
    """Solve P u = f across truncations and watch the solution norms.

    ``family(N)`` must return the truncated operator; the target norm is
    taken in the scale s + mu (+ the domain action), the control norm
    ``control_shift`` higher.  Bounded target norms certify that f lies
    in the s scale numerically.
    """
    tnorms, cnorms = [], []
    for N in Ns:
        T = family(N)
        sv = np.linalg.svd(T.matrix, compute_uv=False)
        if sv[-1] < cond_floor * sv[0]:
            raise ConditioningError(f"operator at N = {N} is singular")
        f = GridSection.from_profile(f_profile, q, N, m=T.m_in)
        u = GridSection(np.linalg.solve(T.matrix, f.flat()).reshape(-1, T.m_in),
                        q, N)
        lam_t = lambda_operator(act_domain, s + mu, N, q=q)
        lam_c = lambda_operator(act_domain, s + mu + control_shift, N, q=q)
        tnorms.append(sobolev_norm(u, lam_t))
        cnorms.append(sobolev_norm(u, lam_c))
    ns = np.asarray(Ns, dtype=float)
    t_slope = float(np.polyfit(np.log2(ns), np.log2(tnorms), 1)[0])
    c_slope = float(np.polyfit(np.log2(ns), np.log2(cnorms), 1)[0])
    return RegularityReport(list(Ns), tnorms, cnorms, t_slope, c_slope,
                            bounded=bool(t_slope <= slope_tol))


def fourier_profile(T, fit_lo_frac=4):
    """Mode-offset profile of an operator matrix.

    Returns per-offset max block norms and the fitted decay order of the
    diagonal blocks against <xi> over the upper mode range.
    """
    modes, index = mode_set(T.q, T.N)
    view = T.matrix.reshape(len(modes), T.m_out, len(modes), T.m_in)
    offsets = {}
    diag_x, diag_y = [], []
    for i, mi in enumerate(modes):
        for j, mj in enumerate(modes):
            k = tuple(a - b for a, b in zip(mi, mj))
            nrm = float(np.linalg.norm(view[i, :, j, :], 2))
            if nrm > offsets.get(k, 0.0):
                offsets[k] = nrm
        if max(abs(c) for c in mi) >= T.N // fit_lo_frac:
            diag_x.append(bracket(np.array(mi)))
            diag_y.append(float(np.linalg.norm(view[i, :, i, :], 2)))
    diag_x = np.asarray(diag_x)
    diag_y = np.asarray(diag_y)
    keep = diag_y > 0
    if keep.sum() >= 2:
        slope = float(np.polyfit(np.log2(diag_x[keep]),
                                 np.log2(diag_y[keep]), 1)[0])
    else:
        slope = 0.0
    return {"offsets": offsets, "diag_order": slope}


def embedding_singular_values(lam_s, lam_t):
    """Singular values of the identity H^{s+a} -> H^{t+a} on the modes."""
    mid = lam_t.matrix @ np.linalg.inv(lam_s.matrix)
    return np.linalg.svd(mid, compute_uv=False)
