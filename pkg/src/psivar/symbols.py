"""Matrix symbols p(y, eta) with exact derivative access.

A symbol is a node in a small expression tree; every node knows how to
evaluate an arbitrary mixed derivative D_y^alpha d_eta^beta of itself on
a batch of base points at one covariable, reusing shared subexpressions
through a per-call memo.  Order, action, and delta metadata ride along
for the seminorm machinery.
"""

from __future__ import annotations

import math
from itertools import product as _iproduct

import numpy as np

from ._scalarterms import EtaTerms
from .errors import (
    CompositionError,
    ConstructionError,
    OrderError,
    ShapeError,
)
from .matfun import EndomorphismField, _as_points, _binom_prod

DEFAULT_DELTA = 0.5


def multi_indices(q, max_total):
    """All multi-indices of length q with |alpha| <= max_total, graded lex."""
    out = []
    for total in range(max_total + 1):
        level = [idx for idx in _iproduct(range(total + 1), repeat=q)
                 if sum(idx) == total]
        out.extend(sorted(level, reverse=True))
    return out


def sub_indices(alpha):
    return [tuple(g) for g in _iproduct(*[range(k + 1) for k in alpha])]


def _maybe_min(*vals):
    vals = [v for v in vals if v is not None]
    return min(vals) if vals else None


class TwistedSymbol:
    """Base class: matrix symbol with order/action metadata."""

    def __init__(self, q, m_out, m_in, order, act_in=None, act_out=None,
                 delta=DEFAULT_DELTA, principal=None):
        self.q = int(q)
        self.m_out = int(m_out)
        self.m_in = int(m_in)
        self.order = float(order)
        self.act_in = act_in
        self.act_out = act_out
        self.delta = float(delta)
        self.principal = principal

    # derivative availability (None = unlimited)
    @property
    def max_dy(self):
        return None

    @property
    def max_deta(self):
        return None

    def deriv(self, alpha, beta, y, eta):
        alpha = tuple(int(k) for k in alpha)
        beta = tuple(int(k) for k in beta)
        if len(alpha) != self.q or len(beta) != self.q:
            raise ShapeError("multi-index length must equal base dimension")
        if self.max_dy is not None and sum(alpha) > self.max_dy:
            raise OrderError(f"y-derivative order {sum(alpha)} unavailable")
        if self.max_deta is not None and sum(beta) > self.max_deta:
            raise OrderError(f"eta-derivative order {sum(beta)} unavailable")
        pts, single = _as_points(y, self.q)
        eta = np.asarray(eta, dtype=float).reshape(self.q)
        out = self._memo(alpha, beta, pts, eta, {})
        return out[0] if single else out

    def __call__(self, y, eta):
        return self.deriv((0,) * self.q, (0,) * self.q, y, eta)

    def _memo(self, alpha, beta, pts, eta, ctx):
        key = (id(self), alpha, beta)
        hit = ctx.get(key)
        if hit is None:
            hit = self._eval(alpha, beta, pts, eta, ctx)
            ctx[key] = hit
        return hit

    def _eval(self, alpha, beta, pts, eta, ctx):
        raise NotImplementedError

    # algebra ----------------------------------------------------------

    def __add__(self, other):
        return SumSymbol([self, other], [1.0, 1.0])

    def __sub__(self, other):
        return SumSymbol([self, other], [1.0, -1.0])

    def scale(self, c):
        return SumSymbol([self], [c])

    def __matmul__(self, other):
        return ProductSymbol(self, other)

    def hermitian(self):
        return HermitianSymbol(self)

    def inverse(self):
        return InverseSymbol(self)

    def shift(self, alpha, beta):
        return DerivShiftSymbol(self, alpha, beta)


class ConstSymbol(TwistedSymbol):
    def __init__(self, mat, q=1, order=0.0, **kw):
        mat = np.atleast_2d(np.asarray(mat, dtype=complex))
        super().__init__(q, mat.shape[0], mat.shape[1], order, **kw)
        self.mat = mat
        if self.principal is None and order == 0.0:
            self.principal = lambda pts, om: np.broadcast_to(
                self.mat, (pts.shape[0],) + self.mat.shape).copy()

    def _eval(self, alpha, beta, pts, eta, ctx):
        if any(alpha) or any(beta):
            return np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        return np.broadcast_to(self.mat, (pts.shape[0],) + self.mat.shape).copy()


def identity_symbol(m, q=1, **kw):
    return ConstSymbol(np.eye(m), q=q, order=0.0, **kw)


class FieldSymbol(TwistedSymbol):
    """A y-only matrix symbol wrapping an EndomorphismField."""

    def __init__(self, field, order=0.0, **kw):
        super().__init__(field.q, field.size, field.size, order, **kw)
        self.field = field
        if self.principal is None and order == 0.0:
            self.principal = lambda pts, om: field(pts)

    def _eval(self, alpha, beta, pts, eta, ctx):
        if any(beta):
            return np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        return self.field.deriv(alpha, pts)


class TrigPolySymbol(TwistedSymbol):
    """sum_t coef_t e^{i k_t . y} eta^{gamma_t} (c0 + |eta|^2)^{e_t}.

    Exact derivatives in both variables; covers multipliers, polynomial
    symbols, and bracket-weighted mixed-order entries.
    """

    def __init__(self, terms, q, order, c0=1.0, **kw):
        # terms: iterable of (freq, coef matrix, gamma, e)
        clean = []
        m_out = m_in = None
        for freq, coef, gamma, e in terms:
            coef = np.atleast_2d(np.asarray(coef, dtype=complex))
            m_out, m_in = coef.shape
            clean.append((tuple(int(c) for c in freq), coef,
                          tuple(int(g) for g in gamma), float(e)))
        if not clean:
            raise ConstructionError("a trig-poly symbol needs at least one term")
        super().__init__(q, m_out, m_in, order, **kw)
        self.terms = clean
        self.c0 = float(c0)
        self._beta_cache = {}

    @classmethod
    def multiplier(cls, e_bracket, q=1, coef=1.0, order=None, **kw):
        """coef * <eta>^{2 e_bracket} ... pass bracket exponent in orders."""
        coef = np.atleast_2d(np.asarray(coef, dtype=complex))
        order = 2 * e_bracket if order is None else order
        return cls([((0,) * q, coef, (0,) * q, e_bracket)], q, order, **kw)

    def _eta_terms(self, beta):
        hit = self._beta_cache.get(beta)
        if hit is None:
            hit = [EtaTerms([((gamma, e), 1.0)], self.q, self.c0).deriv_multi(beta)
                   for _, _, gamma, e in self.terms]
            self._beta_cache[beta] = hit
        return hit

    def _eval(self, alpha, beta, pts, eta, ctx):
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        etas = self._eta_terms(beta)
        for (freq, coef, _, _), et in zip(self.terms, etas):
            sval = et(eta)
            if sval == 0.0:
                continue
            k = np.asarray(freq, dtype=float)
            yfac = np.prod((1j * k) ** np.asarray(alpha, dtype=float))
            if yfac == 0.0:
                continue
            phase = np.exp(1j * pts @ k)
            out += (sval * yfac) * phase[:, None, None] * coef
        return out


class RadialTermsSymbol(TwistedSymbol):
    """Scalar symbol defined piecewise in r = |eta| by EtaTerms.

    ``pieces`` is a list of (r_lo, r_hi, EtaTerms or constant); intervals
    must cover the reals seen in use.  Constant pieces have all
    derivatives zero.
    """

    def __init__(self, pieces, q, order=0.0, **kw):
        super().__init__(q, 1, 1, order, **kw)
        self.pieces = pieces

    def _piece(self, eta):
        r = float(np.linalg.norm(eta))
        for lo, hi, data in self.pieces:
            if lo <= r < hi:
                return data
        return self.pieces[-1][2]

    def vanishes_near(self, eta):
        data = self._piece(eta)
        return isinstance(data, (int, float, complex)) and data == 0.0

    def _eval(self, alpha, beta, pts, eta, ctx):
        out = np.zeros((pts.shape[0], 1, 1), complex)
        if any(alpha):
            return out
        data = self._piece(eta)
        if isinstance(data, (int, float, complex)):
            if not any(beta):
                out[:] = data
            return out
        out[:] = data.deriv_multi(beta)(eta)
        return out


def smoothstep_terms(lo, hi, q):
    """Quintic blend 0 -> 1 on [lo, hi] as EtaTerms in r = |eta|.

    chi(r) = 6 t^5 - 15 t^4 + 10 t^3 with t = (r - lo)/(hi - lo).
    """
    w = hi - lo
    # expand in powers of r: chi = sum c_j r^j
    # t = (r - lo)/w; use binomial expansion of t^k
    coeffs = np.zeros(6)
    for k, ck in ((5, 6.0), (4, -15.0), (3, 10.0)):
        for j in range(k + 1):
            coeffs[j] += ck * math.comb(k, j) * ((-lo) ** (k - j)) / w ** k
    return EtaTerms.polynomial_in_r(list(coeffs), q)


def radial_cutoff(lo, hi, q, inside=0.0, order=0.0):
    """Scalar cutoff symbol: ``inside`` for r <= lo, 1 for r >= hi."""
    blend = smoothstep_terms(lo, hi, q)
    if inside != 0.0:
        # inside + (1 - inside) * chi
        blend = EtaTerms([(k, (1.0 - inside) * c) for k, c in blend.terms]
                         + [(((0,) * q, 0.0), inside)], q, c0=0.0)
    pieces = [(0.0, lo, inside), (lo, hi, blend), (hi, np.inf, 1.0)]
    return RadialTermsSymbol(pieces, q, order=order)


class SumSymbol(TwistedSymbol):
    def __init__(self, parts, coeffs=None, order=None, **kw):
        coeffs = [1.0] * len(parts) if coeffs is None else list(coeffs)
        p0 = parts[0]
        for p in parts:
            if (p.m_out, p.m_in, p.q) != (p0.m_out, p0.m_in, p0.q):
                raise ShapeError("summands must share sizes")
        order = max(p.order for p in parts) if order is None else order
        kw.setdefault("act_in", p0.act_in)
        kw.setdefault("act_out", p0.act_out)
        kw.setdefault("delta", max(p.delta for p in parts))
        super().__init__(p0.q, p0.m_out, p0.m_in, order, **kw)
        self.parts = list(parts)
        self.coeffs = [complex(c) for c in coeffs]

    @property
    def max_dy(self):
        return _maybe_min(*[p.max_dy for p in self.parts])

    @property
    def max_deta(self):
        return _maybe_min(*[p.max_deta for p in self.parts])

    def _eval(self, alpha, beta, pts, eta, ctx):
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for c, p in zip(self.coeffs, self.parts):
            out += c * p._memo(alpha, beta, pts, eta, ctx)
        return out


class ProductSymbol(TwistedSymbol):
    """Pointwise matrix product with Leibniz derivatives."""

    def __init__(self, left, right, order=None, **kw):
        if left.m_in != right.m_out:
            raise ShapeError(
                f"cannot chain sizes {left.m_out}x{left.m_in} @ "
                f"{right.m_out}x{right.m_in}")
        order = left.order + right.order if order is None else order
        kw.setdefault("act_in", right.act_in)
        kw.setdefault("act_out", left.act_out)
        kw.setdefault("delta", max(left.delta, right.delta))
        if "principal" not in kw and left.principal and right.principal:
            lp, rp = left.principal, right.principal
            kw["principal"] = lambda pts, om: np.einsum(
                "nij,njk->nik", lp(pts, om), rp(pts, om))
        super().__init__(left.q, left.m_out, right.m_in, order, **kw)
        self.left = left
        self.right = right

    @property
    def max_dy(self):
        return _maybe_min(self.left.max_dy, self.right.max_dy)

    @property
    def max_deta(self):
        return _maybe_min(self.left.max_deta, self.right.max_deta)

    def _eval(self, alpha, beta, pts, eta, ctx):
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for a1 in sub_indices(alpha):
            a2 = tuple(x - y for x, y in zip(alpha, a1))
            ca = _binom_prod(alpha, a1)
            for b1 in sub_indices(beta):
                b2 = tuple(x - y for x, y in zip(beta, b1))
                c = ca * _binom_prod(beta, b1)
                lv = self.left._memo(a1, b1, pts, eta, ctx)
                rv = self.right._memo(a2, b2, pts, eta, ctx)
                out += c * np.einsum("nij,njk->nik", lv, rv)
        return out


class ScalarTimesSymbol(TwistedSymbol):
    """Scalar symbol times matrix symbol, short-circuiting where the
    scalar vanishes identically (e.g. inside an excision cutoff)."""

    def __init__(self, scalar, mat, order=None, **kw):
        if (scalar.m_out, scalar.m_in) != (1, 1):
            raise ShapeError("left factor must be scalar")
        order = scalar.order + mat.order if order is None else order
        kw.setdefault("act_in", mat.act_in)
        kw.setdefault("act_out", mat.act_out)
        kw.setdefault("delta", max(scalar.delta, mat.delta))
        super().__init__(mat.q, mat.m_out, mat.m_in, order, **kw)
        self.scalar = scalar
        self.mat = mat

    @property
    def max_dy(self):
        return _maybe_min(self.scalar.max_dy, self.mat.max_dy)

    @property
    def max_deta(self):
        return _maybe_min(self.scalar.max_deta, self.mat.max_deta)

    def _eval(self, alpha, beta, pts, eta, ctx):
        if getattr(self.scalar, "vanishes_near", lambda e: False)(eta):
            return np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for a1 in sub_indices(alpha):
            a2 = tuple(x - y for x, y in zip(alpha, a1))
            ca = _binom_prod(alpha, a1)
            for b1 in sub_indices(beta):
                b2 = tuple(x - y for x, y in zip(beta, b1))
                c = ca * _binom_prod(beta, b1)
                sv = self.scalar._memo(a1, b1, pts, eta, ctx)
                mv = self.mat._memo(a2, b2, pts, eta, ctx)
                out += c * sv * mv
        return out


class DerivShiftSymbol(TwistedSymbol):
    """View of D^da d^db p as a symbol of order mu - |db| + delta |da|."""

    def __init__(self, base, da, db, **kw):
        da = tuple(int(k) for k in da)
        db = tuple(int(k) for k in db)
        order = base.order - sum(db) + base.delta * sum(da)
        kw.setdefault("act_in", base.act_in)
        kw.setdefault("act_out", base.act_out)
        kw.setdefault("delta", base.delta)
        super().__init__(base.q, base.m_out, base.m_in, order, **kw)
        self.base = base
        self.da = da
        self.db = db

    @property
    def max_dy(self):
        b = self.base.max_dy
        return None if b is None else b - sum(self.da)

    @property
    def max_deta(self):
        b = self.base.max_deta
        return None if b is None else b - sum(self.db)

    def _eval(self, alpha, beta, pts, eta, ctx):
        a = tuple(x + y for x, y in zip(alpha, self.da))
        b = tuple(x + y for x, y in zip(beta, self.db))
        return self.base._memo(a, b, pts, eta, ctx)


class HermitianSymbol(TwistedSymbol):
    """Pointwise Hermitian adjoint p(y, eta)^*."""

    def __init__(self, base, **kw):
        kw.setdefault("act_in",
                      None if base.act_out is None else -base.act_out.adjoint())
        kw.setdefault("act_out",
                      None if base.act_in is None else -base.act_in.adjoint())
        kw.setdefault("delta", base.delta)
        if "principal" not in kw and base.principal:
            bp = base.principal
            kw["principal"] = lambda pts, om: np.conj(
                np.swapaxes(bp(pts, om), -1, -2))
        super().__init__(base.q, base.m_in, base.m_out, base.order, **kw)
        self.base = base

    @property
    def max_dy(self):
        return self.base.max_dy

    @property
    def max_deta(self):
        return self.base.max_deta

    def _eval(self, alpha, beta, pts, eta, ctx):
        v = self.base._memo(alpha, beta, pts, eta, ctx)
        return np.conj(np.swapaxes(v, -1, -2))


class InverseSymbol(TwistedSymbol):
    """Pointwise inverse with the Leibniz recursion for derivatives."""

    def __init__(self, base, **kw):
        if base.m_in != base.m_out:
            raise ShapeError("only square symbols can be inverted")
        kw.setdefault("act_in", base.act_out)
        kw.setdefault("act_out", base.act_in)
        kw.setdefault("delta", base.delta)
        if "principal" not in kw and base.principal:
            bp = base.principal
            kw["principal"] = lambda pts, om: np.linalg.inv(bp(pts, om))
        super().__init__(base.q, base.m_in, base.m_out, -base.order, **kw)
        self.base = base

    @property
    def max_dy(self):
        return self.base.max_dy

    @property
    def max_deta(self):
        return self.base.max_deta

    def _eval(self, alpha, beta, pts, eta, ctx):
        if not any(alpha) and not any(beta):
            return np.linalg.inv(self.base._memo(alpha, beta, pts, eta, ctx))
        inv0 = self._memo((0,) * self.q, (0,) * self.q, pts, eta, ctx)
        acc = np.zeros_like(inv0)
        for a1 in sub_indices(alpha):
            for b1 in sub_indices(beta):
                if not any(a1) and not any(b1):
                    continue
                c = _binom_prod(alpha, a1) * _binom_prod(beta, b1)
                a2 = tuple(x - y for x, y in zip(alpha, a1))
                b2 = tuple(x - y for x, y in zip(beta, b1))
                dp = self.base._memo(a1, b1, pts, eta, ctx)
                dinv = self._memo(a2, b2, pts, eta, ctx)
                acc += c * np.einsum("nij,njk->nik", dp, dinv)
        return -np.einsum("nij,njk->nik", inv0, acc)


class SphereSectionSymbol(TwistedSymbol):
    """q = 1 section h(y, omega) on the two-point sphere {+1, -1}.

    Data per sign: a list of (freq, coef) trig terms in y.  Derivatives
    in eta vanish away from the origin.
    """

    def __init__(self, plus_terms, minus_terms, q=1, order=0.0, **kw):
        if q != 1:
            raise ShapeError("SphereSectionSymbol is the q = 1 realization")
        p0 = np.atleast_2d(np.asarray(plus_terms[0][1], dtype=complex))
        kw.setdefault("principal", self._principal)
        super().__init__(1, p0.shape[0], p0.shape[1], order, **kw)
        self.data = {
            1: [(tuple(int(c) for c in f), np.atleast_2d(np.asarray(c_, complex)))
                for f, c_ in plus_terms],
            -1: [(tuple(int(c) for c in f), np.atleast_2d(np.asarray(c_, complex)))
                 for f, c_ in minus_terms],
        }

    def section(self, pts, sign, alpha=(0,)):
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for freq, coef in self.data[int(sign)]:
            k = np.asarray(freq, dtype=float)
            yfac = np.prod((1j * k) ** np.asarray(alpha, dtype=float))
            if yfac == 0.0:
                continue
            out += yfac * np.exp(1j * pts @ k)[:, None, None] * coef
        return out

    def _principal(self, pts, om):
        sign = 1 if float(np.atleast_1d(om)[0]) > 0 else -1
        return self.section(pts, sign)

    def _eval(self, alpha, beta, pts, eta, ctx):
        if any(beta):
            return np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        sign = 1 if eta[0] > 0 else -1
        return self.section(pts, sign, alpha)


class BlockSymbol(TwistedSymbol):
    """2x2 (or general) block matrix of symbols."""

    def __init__(self, blocks, order=None, **kw):
        rows = [b[0].m_out for b in blocks]
        cols = [b.m_in for b in blocks[0]]
        for r, row in enumerate(blocks):
            for c, b in enumerate(row):
                if b.m_out != rows[r] or b.m_in != cols[c]:
                    raise ShapeError("inconsistent block sizes")
        order = max(b.order for row in blocks for b in row) \
            if order is None else order
        q = blocks[0][0].q
        kw.setdefault("delta", max(b.delta for row in blocks for b in row))
        super().__init__(q, sum(rows), sum(cols), order, **kw)
        self.blocks = blocks
        self.row_sizes = rows
        self.col_sizes = cols

    @property
    def max_dy(self):
        return _maybe_min(*[b.max_dy for row in self.blocks for b in row])

    @property
    def max_deta(self):
        return _maybe_min(*[b.max_deta for row in self.blocks for b in row])

    def _eval(self, alpha, beta, pts, eta, ctx):
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        r0 = 0
        for r, row in enumerate(self.blocks):
            c0 = 0
            for c, b in enumerate(row):
                out[:, r0:r0 + self.row_sizes[r], c0:c0 + self.col_sizes[c]] = \
                    b._memo(alpha, beta, pts, eta, ctx)
                c0 += self.col_sizes[c]
            r0 += self.row_sizes[r]
        return out


class SubblockSymbol(TwistedSymbol):
    def __init__(self, base, rows, cols, order=None, **kw):
        order = base.order if order is None else order
        kw.setdefault("delta", base.delta)
        super().__init__(base.q, rows.stop - rows.start,
                         cols.stop - cols.start, order, **kw)
        self.base = base
        self.rows = rows
        self.cols = cols

    @property
    def max_dy(self):
        return self.base.max_dy

    @property
    def max_deta(self):
        return self.base.max_deta

    def _eval(self, alpha, beta, pts, eta, ctx):
        return self.base._memo(alpha, beta, pts, eta, ctx)[
            :, self.rows, self.cols]


class SmoothedNorm:
    """A smooth positive substitute for |eta| that is exact beyond R."""

    def __init__(self, pieces, q, crossover):
        self.pieces = pieces
        self.q = q
        self.crossover = crossover

    @classmethod
    def bracket(cls, q=1):
        """<eta> = sqrt(1 + |eta|^2); crossover flagged as infinite."""
        terms = EtaTerms.bracket_power(0.5, q, c0=1.0)
        return cls([(0.0, np.inf, terms)], q, np.inf)

    @classmethod
    def smoothed_abs(cls, R, q=1):
        """[eta] = |eta| for |eta| >= R, blended to R/2 near the origin."""
        outer = EtaTerms.polynomial_in_r([0.0, 1.0], q)      # r
        chi = smoothstep_terms(R / 2.0, R, q)
        # chi * r + (1 - chi) * (R/2)
        mid_terms = []
        for (gamma, e), c in chi.terms:
            mid_terms.append(((tuple(gamma), e + 0.5), c))          # chi * r
            mid_terms.append(((tuple(gamma), e), -c * R / 2.0))     # -chi R/2
        mid_terms.append((((0,) * q, 0.0), R / 2.0))
        mid = EtaTerms(mid_terms, q, c0=0.0)
        pieces = [(0.0, R / 2.0, R / 2.0), (R / 2.0, R, mid), (R, np.inf, outer)]
        return cls(pieces, q, R)

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float).reshape(self.q)
        r = float(np.linalg.norm(eta))
        for lo, hi, data in self.pieces:
            if lo <= r < hi:
                break
        if isinstance(data, (int, float)):
            return float(data)
        return float(np.real(data(eta)))

    def as_symbol(self, order=1.0):
        return RadialTermsSymbol(self.pieces, self.q, order=order)


def dn_symbol(entries, weights_out, weights_in, q=1, delta=DEFAULT_DELTA,
              order_tol=1e-12):
    """Assemble a mixed-order system from scalar entries and weight vectors.

    ``entries[k][l]`` must be a scalar symbol of declared order
    ``weights_in[l] - weights_out[k]``; the result has order zero with the
    constant diagonal weights as actions.
    """
    m_out = len(entries)
    m_in = len(entries[0])
    if len(weights_out) != m_out or len(weights_in) != m_in:
        raise ConstructionError("weight vectors must match the entry grid")
    for k, row in enumerate(entries):
        for l, p in enumerate(row):
            want = weights_in[l] - weights_out[k]
            if abs(p.order - want) > order_tol:
                raise ConstructionError(
                    f"entry ({k},{l}) declares order {p.order}, "
                    f"weights demand {want}")
            if (p.m_out, p.m_in) != (1, 1):
                raise ConstructionError("entries must be scalar symbols")

    act_in = EndomorphismField.constant(np.diag(weights_in).astype(complex), q)
    act_out = EndomorphismField.constant(np.diag(weights_out).astype(complex), q)

    class _DN(TwistedSymbol):
        def __init__(self):
            super().__init__(q, m_out, m_in, 0.0, act_in=act_in,
                             act_out=act_out, delta=delta)
            self.entries = entries

        @property
        def max_dy(self):
            return _maybe_min(*[p.max_dy for row in entries for p in row])

        @property
        def max_deta(self):
            return _maybe_min(*[p.max_deta for row in entries for p in row])

        def _eval(self, alpha, beta, pts, eta, ctx):
            out = np.zeros((pts.shape[0], m_out, m_in), complex)
            for k in range(m_out):
                for l in range(m_in):
                    out[:, k, l] = entries[k][l]._memo(
                        alpha, beta, pts, eta, ctx)[:, 0, 0]
            return out

    sym = _DN()
    if all(getattr(p, "principal", None) for row in entries for p in row):
        def principal(pts, om):
            out = np.zeros((pts.shape[0], m_out, m_in), complex)
            for k in range(m_out):
                for l in range(m_in):
                    out[:, k, l] = entries[k][l].principal(pts, om)[:, 0, 0]
            return out
        sym.principal = principal
    return sym


def check_action_chain(p_left, p_right, tol=1e-9):
    """Raise CompositionError unless right's output action matches left's input."""
    from .matfun import fields_close
    if p_left.m_in != p_right.m_out:
        raise CompositionError(
            f"size chain mismatch: {p_right.m_out}x{p_right.m_in} then "
            f"{p_left.m_out}x{p_left.m_in}")
    if not fields_close(p_left.act_in, p_right.act_out, tol=tol):
        raise CompositionError("action chain mismatch between factors")
