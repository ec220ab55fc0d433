"""Symbol-level operator calculus: composition, adjoints, parametrices,
frame changes, and invertible order reductions.

Asymptotic sums are always explicit finite truncations at an expansion
order J; residual orders are measured, never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoOrderReductionError, NotEllipticError, OrderError
from .matfun import EndomorphismField
from .powers import BracketPowerSymbol
from .seminorms import verify_ellipticity
from .symbols import (
    DerivShiftSymbol,
    HermitianSymbol,
    InverseSymbol,
    ProductSymbol,
    ScalarTimesSymbol,
    SumSymbol,
    check_action_chain,
    identity_symbol,
    multi_indices,
    radial_cutoff,
)


def validate_expansion_order(J, *symbols):
    J = int(J)
    if J < 0:
        raise OrderError("expansion order must be non-negative")
    for p in symbols:
        for avail in (p.max_dy, p.max_deta):
            if avail is not None and J > avail:
                raise OrderError(
                    f"J = {J} exceeds available derivative order {avail}")
    return J


def _factorial_multi(alpha):
    out = 1
    for k in alpha:
        out *= math.factorial(k)
    return out


def sharp_product(p1, p2, J=1, check=True):
    """Truncated composition symbol

        sum_{|alpha| <= J} (1/alpha!) (d_eta^alpha p1) (D_y^alpha p2),

    with D = -i d.  The factors must chain: p2 maps into the pair that
    p1 maps out of.
    """
    J = validate_expansion_order(J, p1, p2)
    if check:
        check_action_chain(p1, p2)
    parts, coeffs = [], []
    for alpha in multi_indices(p1.q, J):
        term = ProductSymbol(DerivShiftSymbol(p1, (0,) * p1.q, alpha),
                             DerivShiftSymbol(p2, alpha, (0,) * p1.q),
                             order=p1.order + p2.order - (1 - p1.delta)
                             * sum(alpha))
        parts.append(term)
        coeffs.append(((-1j) ** sum(alpha)) / _factorial_multi(alpha))
    out = SumSymbol(parts, coeffs, order=p1.order + p2.order,
                    act_in=p2.act_in, act_out=p1.act_out,
                    delta=max(p1.delta, p2.delta))
    if p1.principal and p2.principal:
        lp, rp = p1.principal, p2.principal
        out.principal = lambda pts, om: np.einsum(
            "nij,njk->nik", lp(pts, om), rp(pts, om))
    return out


def adjoint_symbol(p, J=0):
    """Truncated formal-adjoint symbol

        sum_{|alpha| <= J} (1/alpha!) D_y^alpha d_eta^alpha p(y, eta)^*,

    carrying the actions (-a2^*, -a1^*).
    """
    J = validate_expansion_order(J, p)
    star = HermitianSymbol(p)
    parts, coeffs = [], []
    for alpha in multi_indices(p.q, J):
        parts.append(DerivShiftSymbol(star, alpha, alpha))
        coeffs.append(((-1j) ** sum(alpha)) / _factorial_multi(alpha))
    out = SumSymbol(parts, coeffs, order=p.order,
                    act_in=star.act_in, act_out=star.act_out, delta=p.delta)
    out.principal = star.principal
    return out


def parametrix_symbol(p, J=1, report=None, eta_max=2 ** 6, y_n=8):
    """Truncated parametrix of an elliptic symbol.

    The leading term is chi(eta) p^{-1} with chi a quintic excision
    vanishing for |eta| <= R and equal to one for |eta| >= 2R; Neumann
    corrections through J steps push the left residual order down by
    (1 - delta) per step.
    """
    J = validate_expansion_order(J, p)
    if report is None:
        report = verify_ellipticity(p, eta_max=eta_max, y_n=y_n)
    if not report.elliptic:
        raise NotEllipticError(
            f"symbol is not elliptic on the lattice (R = {report.radius})")
    R = max(report.radius, 1.0)
    chi = radial_cutoff(R, 2 * R, p.q)
    q0 = ScalarTimesSymbol(chi, InverseSymbol(p), order=-p.order,
                           act_in=p.act_out, act_out=p.act_in, delta=p.delta)
    if J == 0:
        return q0
    ident = identity_symbol(p.m_in, q=p.q, act_in=p.act_in, act_out=p.act_in,
                            delta=p.delta)
    resid = SumSymbol([ident, sharp_product(q0, p, J, check=False)],
                      [1.0, -1.0], order=-(1 - p.delta),
                      act_in=p.act_in, act_out=p.act_in, delta=p.delta)
    out = q0
    for _ in range(J):
        out = SumSymbol([q0, sharp_product(resid, out, J, check=False)],
                        [1.0, 1.0], order=-p.order,
                        act_in=p.act_out, act_out=p.act_in, delta=p.delta)
    if p.principal:
        bp = p.principal
        out.principal = lambda pts, om: np.linalg.inv(bp(pts, om))
    return out


def frame_conjugate(p, theta1, theta2, J=1, check=True, rhos=(0.5, 2.0),
                    tol=1e-8):
    """Symbol of Theta2 o Op(p) o Theta1^{-1} for frame transition fields.

    The thetas are y-only matrix fields; the left factor composes
    exactly, the right inverse enters through one sharp expansion.
    """
    from .admissibility import transition_homogeneity_check
    from .errors import FrameError
    from .symbols import FieldSymbol

    if check and p.act_in is not None:
        a_new = _conjugated_action(theta1, p.act_in)
        rep = transition_homogeneity_check(
            _identity_frame(theta1), theta1, p.act_in, a_new, rhos=rhos)
        if rep.max_residual > tol:
            raise FrameError(
                f"transition check failed ({rep.max_residual:.3e})")
    th2 = FieldSymbol(theta2, order=0.0)
    th1inv = InverseSymbol(FieldSymbol(theta1, order=0.0))
    inner = sharp_product(p, th1inv, J, check=False)
    out = ProductSymbol(th2, inner, order=p.order)
    out.act_in = (None if p.act_in is None
                  else _conjugated_action(theta1, p.act_in))
    out.act_out = (None if p.act_out is None
                   else _conjugated_action(theta2, p.act_out))
    out.delta = p.delta
    if p.principal:
        bp = p.principal

        def principal(pts, om):
            t2 = theta2(pts)
            t1i = np.linalg.inv(theta1(pts))
            return np.einsum("nij,njk,nkl->nil", t2, bp(pts, om), t1i)
        out.principal = principal
    return out


def _identity_frame(theta):
    return EndomorphismField.constant(np.eye(theta.size), theta.q)


def _conjugated_action(theta, act):
    """Field y -> theta(y) a(y) theta(y)^{-1}."""
    def fn(pts):
        tv = theta(pts)
        av = act(pts)
        return np.einsum("nij,njk,nkl->nil", tv, av, np.linalg.inv(tv))
    return EndomorphismField.from_callable(fn, theta.q, theta.size,
                                           label="conj-action")


@dataclass
class ParametricSymbol:
    """Family lambda -> symbol, sharing the joint bracket <eta, lambda>."""

    builder: object           # callable lambda -> TwistedSymbol
    order: float
    size: int
    q: int

    def at(self, lam):
        return self.builder(float(lam))


@dataclass
class OrderReductionResult:
    symbol: object
    lambda0: float
    operator: object          # TruncatedOperator at lambda0
    inverse: np.ndarray
    ratio_curve: list         # (lambda, sigma_min/sigma_max)
    inverse_profile_order: float

    def to_json(self):
        return {"lambda0": self.lambda0,
                "ratio_curve": self.ratio_curve,
                "inverse_profile_order": self.inverse_profile_order}


def order_reduction_family(size, act_in, act_out, mu, q=1,
                           delta=0.5, grid_n=16):
    """The parameter family extending the identity twisted-homogeneously.

    At each lambda the symbol is
        <eta,l>^mu <eta,l>^{-a2(y)} <eta,l>^{a1(y)}
    which restricts to the identity on the joint unit sphere.
    """
    zero = EndomorphismField.constant(np.zeros((size, size)), q)
    f_in = act_in if act_in is not None else zero
    f_out = act_out if act_out is not None else zero

    def build(lam):
        c0 = 1.0 + lam * lam
        left = BracketPowerSymbol(-f_out, s=mu, c0=c0, order=mu, delta=delta,
                                  grid_n=grid_n)
        right = BracketPowerSymbol(f_in, s=0.0, c0=c0, order=0.0, delta=delta,
                                   grid_n=grid_n)
        sym = ProductSymbol(left, right, order=mu)
        sym.act_in = act_in
        sym.act_out = act_out
        sym.delta = delta
        return sym

    return ParametricSymbol(build, mu, size, q)


def order_reduction(size, act_in, act_out, mu, N, q=1, lambdas=None,
                    sv_floor=1e-6, delta=0.5, grid_n=16):
    """Sweep the parameter upward until the truncation is invertible.

    Returns an :class:`OrderReductionResult`; raises
    :class:`NoOrderReductionError` with the conditioning curve when the
    sweep is exhausted.
    """
    from .discretization import fourier_profile, quantize

    fam = order_reduction_family(size, act_in, act_out, mu, q=q, delta=delta,
                                 grid_n=grid_n)
    if lambdas is None:
        lambdas = [2.0 ** j for j in range(0, 21)]
    curve = []
    for lam in lambdas:
        sym = fam.at(lam)
        op = quantize(sym, N)
        sv = np.linalg.svd(op.matrix, compute_uv=False)
        ratio = float(sv[-1] / sv[0])
        curve.append((float(lam), ratio))
        if ratio >= sv_floor:
            inv = np.linalg.inv(op.matrix)
            prof = fourier_profile(op.clone_with(inv))
            return OrderReductionResult(
                symbol=sym, lambda0=float(lam), operator=op, inverse=inv,
                ratio_curve=curve,
                inverse_profile_order=prof["diag_order"])
    raise NoOrderReductionError("no invertible member found in the sweep",
                                curve=curve)
