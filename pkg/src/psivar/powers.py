"""Bracket and scalar-base powers of matrix fields via contour quadrature.

These symbols realize <eta>^{s + a(y)}, |eta|^{a(y)}, and b(y,eta)^{a(y)}
with exact mixed derivatives: eta-derivatives act on the scalar power of
the integration variable (closed-form term families), y-derivatives act
on the resolvent (Leibniz recursion), and for a genuinely (y,eta)-dependent
base the two are tied together by a Bell-polynomial recursion.
"""

from __future__ import annotations

import numpy as np

from ._scalarterms import SigmaEtaTerms, log_derivs, power_factor
from .admissibility import SampledRegion, cluster_eigenvalues
from .errors import PositivityError
from .matfun import EndomorphismField, ResolventTable, _binom_prod
from .symbols import (
    DEFAULT_DELTA,
    ProductSymbol,
    ScalarTimesSymbol,
    SphereSectionSymbol,
    TwistedSymbol,
    radial_cutoff,
    sub_indices,
)


def _decomposition_for(field, delta, grid_n):
    region = SampledRegion.torus(field.q, grid_n)
    return cluster_eigenvalues(field, region, delta)


class BracketPowerSymbol(TwistedSymbol):
    """(c0 + |eta|^2)^{(s + a(y))/2} by per-cluster Dunford quadrature.

    ``c0 = 1`` gives the bracket weight <eta>^{s+a(y)}, ``c0 = 0`` the
    plain power |eta|^{s+a(y)} (then only evaluate away from eta = 0),
    and ``c0 = 1 + lambda^2`` the parameter bracket <eta, lambda>^{s+a(y)}.
    """

    def __init__(self, field, s=0.0, c0=1.0, order=None, delta=DEFAULT_DELTA,
                 decomposition=None, grid_n=16, **kw):
        exponent = field.shifted(s) if s != 0.0 else field
        if decomposition is None:
            decomposition = _decomposition_for(exponent, delta, grid_n)
        order = float(s) if order is None else order
        kw.setdefault("delta", delta)
        super().__init__(field.q, field.size, field.size, order, **kw)
        self.exponent = exponent
        self.c0 = float(c0)
        self.decomposition = decomposition
        self._beta_terms = {}

    @property
    def contours(self):
        return self.decomposition.contours()

    def _phi(self, beta):
        hit = self._beta_terms.get(beta)
        if hit is None:
            hit = SigmaEtaTerms.base(self.q, self.c0).deriv_multi(beta)
            self._beta_terms[beta] = hit
        return hit

    def _tables(self, pts, ctx):
        key = ("rtab", id(self), pts.shape[0])
        tabs = ctx.get(key)
        if tabs is None:
            tabs = [ResolventTable(self.exponent, c.nodes, pts)
                    for c in self.contours]
            ctx[key] = tabs
        return tabs

    def _eval(self, alpha, beta, pts, eta, ctx):
        phi = self._phi(beta)
        tabs = self._tables(pts, ctx)
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for contour, tab in zip(self.contours, tabs):
            scal = phi(contour.nodes, eta) * contour.weights
            out += np.einsum("j,jnik->nik", scal, tab.get(alpha))
        return out


class ScalarPowerSymbol(TwistedSymbol):
    """b(y, eta)^{a(y)} for a positive scalar symbol b."""

    def __init__(self, base, field, order=0.0, delta=DEFAULT_DELTA,
                 decomposition=None, grid_n=16, **kw):
        if (base.m_out, base.m_in) != (1, 1):
            raise PositivityError("the base must be a scalar symbol")
        if decomposition is None:
            decomposition = _decomposition_for(field, delta, grid_n)
        kw.setdefault("delta", delta)
        super().__init__(field.q, field.size, field.size, order, **kw)
        self.base = base
        self.field = field
        self.decomposition = decomposition

    @property
    def max_dy(self):
        return self.base.max_dy

    @property
    def max_deta(self):
        return self.base.max_deta

    def _tables(self, pts, ctx):
        key = ("rtab", id(self), pts.shape[0])
        tabs = ctx.get(key)
        if tabs is None:
            tabs = [ResolventTable(self.field, c.nodes, pts)
                    for c in self.decomposition.contours()]
            ctx[key] = tabs
        return tabs

    def _u_derivs(self, alpha, beta, pts, eta, ctx):
        """Derivatives of log b up to (alpha, beta), as joint multi-indices."""
        key = ("ulog", id(self), alpha, beta)
        hit = ctx.get(key)
        if hit is None:
            b_derivs = {}
            for a1 in sub_indices(alpha):
                for b1 in sub_indices(beta):
                    val = self.base._memo(a1, b1, pts, eta, ctx)[:, 0, 0]
                    b_derivs[a1 + b1] = val
            u = log_derivs(b_derivs)
            hit = (b_derivs[(0,) * (2 * self.q)], u)
            ctx[key] = hit
        return hit

    def _eval(self, alpha, beta, pts, eta, ctx):
        tabs = self._tables(pts, ctx)
        b0, u = self._u_derivs(alpha, beta, pts, eta, ctx)
        logb = np.log(b0)
        out = np.zeros((pts.shape[0], self.m_out, self.m_in), complex)
        for contour, tab in zip(self.decomposition.contours(), tabs):
            bsig = np.exp(np.outer(contour.nodes, logb))       # (j, n)
            for gamma in sub_indices(alpha):
                coef = _binom_prod(alpha, gamma)
                rem = tuple(a - g for a, g in zip(alpha, gamma))
                fac = power_factor(u, gamma + beta, contour.nodes,
                                   b0.shape)                       # (j, n)
                scal = bsig * fac * contour.weights[:, None]
                out += coef * np.einsum("jn,jnik->nik", scal, tab.get(rem))
        return out


def beta1_zero(q):
    return (0,) * q


def scalar_power_symbol(base, field, delta=DEFAULT_DELTA, grid_n=16,
                        probe_radii=(1.0, 4.0, 16.0, 64.0), probe_y=8):
    """b(y,eta)^{a(y)} after checking positivity of b on a probe lattice."""
    pts = SampledRegion.torus(field.q, probe_y).points
    for r in probe_radii:
        for sgn in (1.0, -1.0):
            eta = np.zeros(field.q)
            eta[0] = sgn * r
            vals = base(pts, eta)[:, 0, 0]
            if np.any(vals.real <= 0) or np.any(np.abs(vals.imag) > 1e-10):
                raise PositivityError(
                    f"base symbol is not positive at |eta| = {r}")
    return ScalarPowerSymbol(base, field, order=0.0, delta=delta,
                             grid_n=grid_n)


def twisted_extend(section, mu, act_in=None, act_out=None, delta=DEFAULT_DELTA,
                   cut=(0.5, 1.0), grid_n=16):
    """Extend a sphere section to a symbol by twisted homogeneity.

    For |eta| >= 1 the result is
        |eta|^mu |eta|^{-a2(y)} h(y, eta/|eta|) |eta|^{a1(y)},
    excised to zero inside |eta| <= 1/2 by a quintic radial blend.
    """
    q = section.q
    m_in, m_out = section.m_in, section.m_out
    zero_in = EndomorphismField.constant(np.zeros((m_in, m_in)), q)
    zero_out = EndomorphismField.constant(np.zeros((m_out, m_out)), q)
    f_in = act_in if act_in is not None else zero_in
    f_out = act_out if act_out is not None else zero_out
    # |eta|^{mu - a2} = |eta|^{-(a2 - mu)}
    left = BracketPowerSymbol((-f_out), s=mu, c0=0.0, order=mu, delta=delta,
                              grid_n=grid_n)
    right = BracketPowerSymbol(f_in, s=0.0, c0=0.0, order=0.0, delta=delta,
                               grid_n=grid_n)
    hom = ProductSymbol(ProductSymbol(left, section), right, order=mu)
    chi = radial_cutoff(cut[0], cut[1], q)
    sym = ScalarTimesSymbol(chi, hom, order=mu, act_in=act_in,
                            act_out=act_out, delta=delta,
                            principal=section.principal)
    return sym


def bracket_power(field, s=0.0, delta=DEFAULT_DELTA, grid_n=16, c0=1.0,
                  order=None, **kw):
    """Convenience constructor for <eta>^{s + a(y)}-type symbols."""
    return BracketPowerSymbol(field, s=s, c0=c0, delta=delta, grid_n=grid_n,
                              order=order, **kw)


def bracket_growth_exponent(field, eta_max=2 ** 8, y_n=16, delta=DEFAULT_DELTA):
    """Fitted m with ||<eta>^{a(y)}|| <= C <eta>^m over a dyadic sweep."""
    sym = bracket_power(field, 0.0, delta=delta)
    pts = SampledRegion.torus(field.q, y_n).points
    radii = 2.0 ** np.arange(0, int(np.log2(eta_max)) + 1)
    vals = []
    for r in radii:
        worst = 0.0
        for sgn in (1.0, -1.0):
            eta = np.zeros(field.q)
            eta[0] = sgn * r
            v = sym(pts, eta)
            worst = max(worst, float(np.max(
                np.linalg.svd(v, compute_uv=False)[:, 0])))
        vals.append(worst)
    logs = np.log2(np.asarray(vals))
    logr = np.log2(np.sqrt(1 + radii ** 2))
    k = min(4, len(radii) - 1)
    slope = np.polyfit(logr[-k - 1:], logs[-k - 1:], 1)[0]
    return float(slope), list(zip(radii.tolist(), vals))
