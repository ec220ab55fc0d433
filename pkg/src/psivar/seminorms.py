"""Empirical symbol-class measurements on dyadic (y, eta) lattices.

Symbol estimates are asymptotic statements; at desk scale they are
sampled on a logarithmic eta lattice and certified by log-log slope
fits over the top octaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import EvaluationError
from .matfun import torus_grid
from .powers import bracket_power
from .symbols import DEFAULT_DELTA, multi_indices

SLOPE_TOL = 0.05


@dataclass
class EtaLattice:
    """Dyadic radii times a fixed set of unit directions."""

    q: int
    radii: np.ndarray
    directions: np.ndarray      # (D, q) unit vectors

    @classmethod
    def standard(cls, q, eta_max, dirs_per_octave=16):
        n_oct = int(round(np.log2(eta_max)))
        radii = 2.0 ** np.arange(0, n_oct + 1)
        if q == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            ang = 2 * np.pi * np.arange(dirs_per_octave) / dirs_per_octave
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
            dirs[np.abs(dirs) < 1e-15] = 0.0   # hit the axes exactly
            if q > 2:
                raise NotImplementedError("lattices are built for q <= 2")
        return cls(q, radii, dirs)

    def points_at(self, r):
        return r * self.directions


def fit_loglog(radii, values, n_points=3):
    """Slope of log2(values) against log2(<radii>) over the top points."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return 0.0
    radii, values = radii[keep], values[keep]
    n = min(n_points, len(radii))
    x = np.log2(np.sqrt(1.0 + radii[-n:] ** 2))
    y = np.log2(values[-n:])
    return float(np.polyfit(x, y, 1)[0])


class ActionWeights:
    """Cached bracket weights <eta>^{a2(y)} . <eta>^{-a1(y)}."""

    def __init__(self, act_out, act_in, delta=DEFAULT_DELTA):
        self.w_out = None if act_out is None else bracket_power(
            act_out, delta=delta)
        self.w_in = None if act_in is None else bracket_power(
            act_in.scaled(-1.0), delta=delta)

    def apply(self, vals, pts, eta):
        if self.w_out is not None:
            vals = np.einsum("nij,njk->nik", self.w_out(pts, eta), vals)
        if self.w_in is not None:
            vals = np.einsum("nij,njk->nik", vals, self.w_in(pts, eta))
        return vals


def _spec_norms(vals):
    return np.linalg.svd(vals, compute_uv=False)[..., 0]


def _max_weighted_norm(p, alpha, beta, pts, lattice, r, weights):
    worst = 0.0
    for eta in lattice.points_at(r):
        vals = p.deriv(alpha, beta, pts, eta)
        finite = np.isfinite(vals.reshape(len(pts), -1)).all(axis=-1)
        if not finite.all():
            bad = pts[int(np.argmin(finite))]
            raise EvaluationError(
                f"non-finite symbol value at eta = {eta}", point=(bad, eta))
        vals = weights.apply(vals, pts, eta)
        worst = max(worst, float(np.max(_spec_norms(vals))))
    return worst


@dataclass
class SeminormEntry:
    alpha: tuple
    beta: tuple
    sup: float
    slope: float
    passed: bool
    values: list


@dataclass
class SeminormReport:
    order: float
    delta: float
    radii: list
    entries: dict = dc_field(default_factory=dict)

    @property
    def all_pass(self):
        return all(e.passed for e in self.entries.values())

    def to_json(self):
        return {
            "order": self.order,
            "delta": self.delta,
            "radii": self.radii,
            "all_pass": self.all_pass,
            "entries": [
                {"alpha": list(e.alpha), "beta": list(e.beta), "sup": e.sup,
                 "slope": e.slope, "passed": e.passed, "values": e.values}
                for e in self.entries.values()],
        }


def seminorm_estimate(p, max_alpha=1, max_beta=1, eta_max=2 ** 6, y_n=12,
                      slope_tol=SLOPE_TOL, fit_points=3, lattice=None,
                      weights=None):
    """Measure the weighted seminorms of ``p`` over a dyadic lattice.

    An entry passes when the weighted, order-normalized sup stays flat
    (fitted slope <= ``slope_tol`` over the top two octaves).
    """
    if lattice is None:
        lattice = EtaLattice.standard(p.q, eta_max)
    pts = torus_grid(p.q, y_n)
    if weights is None:
        weights = ActionWeights(p.act_out, p.act_in, p.delta)
    report = SeminormReport(order=p.order, delta=p.delta,
                            radii=lattice.radii.tolist())
    for alpha in multi_indices(p.q, max_alpha):
        for beta in multi_indices(p.q, max_beta):
            scale = (-p.order + sum(beta) - p.delta * sum(alpha))
            vals = []
            for r in lattice.radii:
                g = _max_weighted_norm(p, alpha, beta, pts, lattice, r,
                                       weights)
                vals.append(g * np.sqrt(1.0 + r * r) ** scale)
            sup = float(max(vals))
            slope = fit_loglog(lattice.radii, vals, fit_points)
            passed = bool(np.isfinite(sup) and slope <= slope_tol)
            report.entries[(alpha, beta)] = SeminormEntry(
                alpha, beta, sup, slope, passed, vals)
    return report


def measure_order(p, eta_max=2 ** 6, y_n=12, fit_points=3, weighted=True,
                  lattice=None):
    """Fitted growth order of the (weighted) symbol norm.

    Returns (order, radii, values).
    """
    if lattice is None:
        lattice = EtaLattice.standard(p.q, eta_max)
    pts = torus_grid(p.q, y_n)
    weights = (ActionWeights(p.act_out, p.act_in, p.delta) if weighted
               else ActionWeights(None, None))
    zero = (0,) * p.q
    vals = [_max_weighted_norm(p, zero, zero, pts, lattice, r, weights)
            for r in lattice.radii]
    return (fit_loglog(lattice.radii, vals, fit_points),
            lattice.radii.tolist(), vals)


def bracket_derivative_decay(field, alpha1=(0,), beta1=(0,), alpha2=(0,),
                             beta2=(0,), eta_max=2 ** 10, y_n=16,
                             delta=DEFAULT_DELTA, fit_points=5):
    """Fitted decay exponent of

        || (D^a1 d^b1 <eta>^{a(y)}) (D^a2 d^b2 <eta>^{-a(y)}) ||

    over a dyadic lattice; returns (exponent, radii, values).
    """
    plus = bracket_power(field, delta=delta)
    minus = bracket_power(field.scaled(-1.0), delta=delta)
    lattice = EtaLattice.standard(field.q, eta_max)
    pts = torus_grid(field.q, y_n)
    vals = []
    for r in lattice.radii:
        worst = 0.0
        for eta in lattice.points_at(r):
            a = plus.deriv(alpha1, beta1, pts, eta)
            b = minus.deriv(alpha2, beta2, pts, eta)
            prod = np.einsum("nij,njk->nik", a, b)
            if not np.all(np.isfinite(prod)):
                raise EvaluationError(
                    f"non-finite product at eta = {eta}", point=eta)
            worst = max(worst, float(np.max(_spec_norms(prod))))
        vals.append(worst)
    return (fit_loglog(lattice.radii, vals, fit_points),
            lattice.radii.tolist(), vals)


@dataclass
class EllipticityReport:
    elliptic: bool
    radius: float
    constant: float
    slope: float
    curve: list

    def to_json(self):
        return {"elliptic": self.elliptic, "radius": self.radius,
                "constant": self.constant, "slope": self.slope,
                "curve": self.curve}


def verify_ellipticity(p, eta_max=2 ** 6, y_n=12, growth_tol=0.1,
                       cond_floor=1e-12, constant_cap=1e10, lattice=None):
    """Find the smallest lattice radius beyond which ``p`` is invertible
    with the action-weighted inverse bounded by <eta>^{-order}."""
    if p.m_in != p.m_out:
        return EllipticityReport(False, float("inf"), float("nan"), 0.0, [])
    if lattice is None:
        lattice = EtaLattice.standard(p.q, eta_max)
    pts = torus_grid(p.q, y_n)
    w_in = (None if p.act_in is None
            else bracket_power(p.act_in, delta=p.delta))
    w_out = (None if p.act_out is None
             else bracket_power(p.act_out.scaled(-1.0), delta=p.delta))
    curve = []
    for r in lattice.radii:
        ok = True
        worst = 0.0
        for eta in lattice.points_at(r):
            vals = p.deriv((0,) * p.q, (0,) * p.q, pts, eta)
            sv = np.linalg.svd(vals, compute_uv=False)
            if np.any(sv[:, -1] <= cond_floor * np.maximum(sv[:, 0], 1e-300)):
                ok = False
                break
            inv = np.linalg.inv(vals)
            if w_in is not None:
                inv = np.einsum("nij,njk->nik", w_in(pts, eta), inv)
            if w_out is not None:
                inv = np.einsum("nij,njk->nik", inv, w_out(pts, eta))
            weighted = np.max(_spec_norms(inv)) * np.sqrt(1 + r * r) ** p.order
            worst = max(worst, float(weighted))
        curve.append((float(r), worst if ok else float("inf")))
    start = None
    for i in range(len(curve)):
        if all(np.isfinite(curve[j][1]) for j in range(i, len(curve))):
            start = i
            break
    if start is None or len(curve) - start < 2:
        return EllipticityReport(False, float("inf"), float("nan"), 0.0, curve)
    radii = np.array([curve[j][0] for j in range(start, len(curve))])
    vals = np.array([curve[j][1] for j in range(start, len(curve))])
    slope = fit_loglog(radii, vals, min(3, len(radii)))
    elliptic = slope <= growth_tol and vals.max() <= constant_cap
    return EllipticityReport(bool(elliptic), float(radii[0]),
                             float(vals.max()), slope, curve)
