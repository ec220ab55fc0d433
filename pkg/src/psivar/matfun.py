"""Resolvents, contour quadrature, and multiplicative group actions.

Everything here works on plain complex numpy matrices or on periodic
matrix fields over the q-torus (period 2*pi in each coordinate).
The quadrature convention throughout is

    (1/2*pi*i) * contour integral of f  ~  sum_j w_j f(sigma_j)

so spectral projections and matrix powers are plain weighted sums of
resolvents.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np
import scipy.linalg as sla

from .errors import (
    IllConditionedContourError,
    SeparationError,
    ShapeError,
    SingularityError,
)

DEFAULT_NODES = 64
TWO_PI = 2.0 * np.pi


def eigenvalues(a):
    """Eigenvalues via a complex Schur decomposition (robust for non-normal a)."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    t, _ = sla.schur(a, output="complex")
    return np.diag(t).copy()


def resolvent(a, sigma):
    """(sigma - a)^{-1} with a guard against near-singular shifts."""
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ShapeError("matrix has non-finite entries")
    dist = np.min(np.abs(eigenvalues(a) - sigma))
    if dist < 1e-10:
        raise SingularityError(
            f"shift {sigma} is within {dist:.3e} of an eigenvalue"
        )
    m = a.shape[0]
    return np.linalg.solve(sigma * np.eye(m) - a, np.eye(m, dtype=complex))


class Contour:
    """Closed quadrature contour given by nodes and weights.

    ``nodes[j]`` are points on the curve and ``weights[j]`` are chosen so
    that ``sum_j weights[j] * f(nodes[j])`` approximates the normalized
    contour integral (1/2*pi*i) * integral of f.
    """

    def __init__(self, nodes, weights, kind="generic", params=None):
        nodes = np.asarray(nodes, dtype=complex)
        weights = np.asarray(weights, dtype=complex)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ShapeError("nodes and weights must be matching 1-d arrays")
        if nodes.size < 16:
            raise ShapeError("a contour needs at least 16 nodes")
        self.nodes = nodes
        self.weights = weights
        self.kind = kind
        self.params = dict(params or {})

    @classmethod
    def circle(cls, center, radius, n=DEFAULT_NODES):
        """Circle sampled with the periodic trapezoid rule."""
        if radius <= 0:
            raise ShapeError("circle radius must be positive")
        n = max(int(n), 16)
        t = TWO_PI * np.arange(n) / n
        e = np.exp(1j * t)
        nodes = center + radius * e
        weights = radius * e / n
        return cls(nodes, weights, kind="circle",
                   params={"center": complex(center), "radius": float(radius), "n": n})

    @classmethod
    def stadium(cls, c1, c2, radius, n=DEFAULT_NODES):
        """Stadium around the segment [c1, c2], sampled piecewise by arclength."""
        c1 = complex(c1)
        c2 = complex(c2)
        if radius <= 0:
            raise ShapeError("stadium radius must be positive")
        if c1 == c2:
            return cls.circle(c1, radius, n)
        n = max(int(n), 16)
        u = (c2 - c1) / abs(c2 - c1)
        L = abs(c2 - c1)
        arc = np.pi * radius
        total = 2 * L + 2 * arc
        n_seg = max(4, int(round(n * L / total)))
        n_arc = max(4, (n - 2 * n_seg) // 2)
        nodes, tangents, steps = [], [], []
        # one straight edge, a cap, the other edge, the other cap
        for s in np.arange(n_seg) / n_seg:
            nodes.append(c1 + 1j * u * radius + u * L * s)
            tangents.append(u)
            steps.append(L / n_seg)
        phi0 = np.angle(1j * u)
        for s in np.arange(n_arc) / n_arc:
            phi = phi0 - np.pi * s
            nodes.append(c2 + radius * np.exp(1j * phi))
            tangents.append(-1j * np.exp(1j * phi))
            steps.append(arc / n_arc)
        for s in np.arange(n_seg) / n_seg:
            nodes.append(c2 - 1j * u * radius - u * L * s)
            tangents.append(-u)
            steps.append(L / n_seg)
        for s in np.arange(n_arc) / n_arc:
            phi = phi0 - np.pi - np.pi * s
            nodes.append(c1 + radius * np.exp(1j * phi))
            tangents.append(-1j * np.exp(1j * phi))
            steps.append(arc / n_arc)
        nodes = np.asarray(nodes)
        weights = np.asarray(tangents) * np.asarray(steps) / (2j * np.pi)
        return cls(nodes, weights, kind="stadium",
                   params={"c1": c1, "c2": c2, "radius": float(radius), "n": n})

    @property
    def diameter(self):
        d = np.abs(self.nodes[:, None] - self.nodes[None, :])
        return float(d.max())

    def refine(self, factor=2):
        """Same curve with ``factor`` times as many nodes."""
        if self.kind == "circle":
            p = self.params
            return Contour.circle(p["center"], p["radius"], factor * p["n"])
        if self.kind == "stadium":
            p = self.params
            return Contour.stadium(p["c1"], p["c2"], p["radius"], factor * p["n"])
        raise ShapeError("cannot refine a generic node list")

    def winding(self, z):
        """Winding number of the node polygon around z."""
        v = self.nodes - z
        ang = np.angle(np.roll(v, -1) / v)
        return int(round(ang.sum() / TWO_PI))

    def min_distance(self, points):
        points = np.atleast_1d(np.asarray(points, dtype=complex))
        return float(np.min(np.abs(self.nodes[:, None] - points[None, :])))


def auto_contour(a, margin=None, n=DEFAULT_NODES):
    """Circle comfortably enclosing the spectrum of ``a``."""
    ev = eigenvalues(a)
    center = ev.mean()
    spread = float(np.max(np.abs(ev - center)))
    if margin is None:
        margin = spread + 1.0
    return Contour.circle(center, spread + margin, n=n)


def _contour_sum(contour, scalar_values, a):
    """sum_j w_j * scalar_values[j] * (nodes[j] - a)^{-1} by batched solves."""
    a = np.asarray(a, dtype=complex)
    m = a.shape[0]
    shifts = contour.nodes[:, None, None] * np.eye(m) - a[None, :, :]
    res = np.linalg.solve(shifts, np.broadcast_to(np.eye(m, dtype=complex),
                                                  (contour.nodes.size, m, m)))
    coef = contour.weights * scalar_values
    return np.einsum("j,jkl->kl", coef, res)


def group_action(a, rho, contour=None, n=DEFAULT_NODES):
    """rho**a for rho > 0 via the resolvent contour integral."""
    a = np.asarray(a, dtype=complex)
    if rho <= 0:
        raise ShapeError("rho must be positive")
    if contour is None:
        contour = auto_contour(a, n=n)
    ev = eigenvalues(a)
    if contour.min_distance(ev) < 1e-8:
        raise IllConditionedContourError(
            "contour passes within 1e-8 of an eigenvalue")
    powers = np.exp(contour.nodes * math.log(rho))
    return _contour_sum(contour, powers, a)


def spectral_projection(a, contour):
    """Spectral projection onto the part of spec(a) enclosed by ``contour``."""
    a = np.asarray(a, dtype=complex)
    ev = eigenvalues(a)
    if contour.min_distance(ev) < 1e-8:
        raise IllConditionedContourError(
            "contour passes within 1e-8 of an eigenvalue")
    pi = _contour_sum(contour, np.ones_like(contour.nodes), a)
    tr = np.trace(pi)
    if abs(tr - round(tr.real)) > 1e-6:
        raise SeparationError(
            f"trace {tr:.6f} is far from an integer; the contour does not "
            "separate a cluster")
    return pi


def torus_grid(q, n):
    """Uniform grid on the q-torus, returned as an (n**q, q) array."""
    pts = TWO_PI * np.arange(n) / n
    if q == 1:
        return pts[:, None]
    grids = np.meshgrid(*([pts] * q), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _as_points(y, q):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        if y.shape[0] != q:
            raise ShapeError(f"expected a point in R^{q}, got shape {y.shape}")
        return y[None, :], True
    if y.ndim != 2 or y.shape[1] != q:
        raise ShapeError(f"expected points of shape (n, {q}), got {y.shape}")
    return y, False


class EndomorphismField:
    """Periodic matrix-valued map on the q-torus with derivative access.

    The evaluator is vectorized over base points: it maps an array of
    shape (n, q) to an array of shape (n, M, M).  Derivatives up to
    ``max_order`` either come from exact callbacks (trigonometric
    polynomial fields) or fall back to centered finite differences with
    step ``fd_step``.
    """

    FD_STEP = 1e-5 * TWO_PI

    def __init__(self, fn, q, size, deriv_fn=None, max_order=None,
                 label="field", fd_step=None):
        self.q = int(q)
        self.size = int(size)
        self._fn = fn
        self._deriv_fn = deriv_fn
        self.max_order = max_order
        self.label = label
        self.fd_step = self.FD_STEP if fd_step is None else float(fd_step)

    def __call__(self, y):
        pts, single = _as_points(y, self.q)
        out = np.asarray(self._fn(pts), dtype=complex)
        return out[0] if single else out

    def deriv(self, alpha, y):
        """D^alpha of the field at y; alpha is a length-q multi-index."""
        alpha = tuple(int(k) for k in alpha)
        if len(alpha) != self.q:
            raise ShapeError("multi-index length must equal the base dimension")
        pts, single = _as_points(y, self.q)
        if all(k == 0 for k in alpha):
            out = np.asarray(self._fn(pts), dtype=complex)
        elif self._deriv_fn is not None:
            out = np.asarray(self._deriv_fn(alpha, pts), dtype=complex)
        else:
            out = self._fd_deriv(alpha, pts)
        return out[0] if single else out

    def _fd_deriv(self, alpha, pts):
        axis = next(i for i, k in enumerate(alpha) if k > 0)
        lower = tuple(k - 1 if i == axis else k for i, k in enumerate(alpha))
        h = self.fd_step
        step = np.zeros(self.q)
        step[axis] = h
        fp = (self._fn(pts + step) if lower == (0,) * self.q
              else self._fd_deriv(lower, pts + step))
        fm = (self._fn(pts - step) if lower == (0,) * self.q
              else self._fd_deriv(lower, pts - step))
        return (np.asarray(fp, dtype=complex) - np.asarray(fm, dtype=complex)) / (2 * h)

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, mat, q=1):
        mat = np.asarray(mat, dtype=complex)
        m = mat.shape[0]

        def fn(pts):
            return np.broadcast_to(mat, (pts.shape[0], m, m)).copy()

        def dfn(alpha, pts):
            if any(alpha):
                return np.zeros((pts.shape[0], m, m), dtype=complex)
            return fn(pts)

        f = cls(fn, q, m, deriv_fn=dfn, max_order=None, label="const")
        f._trig_terms = {(0,) * q: mat}
        return f

    @classmethod
    def from_trig(cls, terms, q=1, label="trig"):
        """Field sum_k coef_k * exp(i k.y) from a dict {freq tuple: matrix}."""
        terms = {tuple(int(c) for c in k): np.asarray(v, dtype=complex)
                 for k, v in terms.items()}
        m = next(iter(terms.values())).shape[0]
        freqs = np.array(list(terms.keys()), dtype=float)
        coefs = np.stack([terms[tuple(int(c) for c in k)] for k in freqs])

        def dfn(alpha, pts):
            phase = np.exp(1j * pts @ freqs.T)           # (n, nterms)
            fac = np.prod(freqs ** np.asarray(alpha, dtype=float), axis=1)
            fac = fac * (1j ** sum(alpha))
            return np.einsum("nt,t,tij->nij", phase, fac, coefs)

        def fn(pts):
            return dfn((0,) * q, pts)

        f = cls(fn, q, m, deriv_fn=dfn, max_order=None, label=label)
        f._trig_terms = terms
        return f

    @classmethod
    def from_callable(cls, fn, q, size, deriv_fn=None, max_order=3,
                      label="callable"):
        return cls(fn, q, size, deriv_fn=deriv_fn, max_order=max_order,
                   label=label)

    # algebra ----------------------------------------------------------

    def _map_terms(self, op, label):
        if hasattr(self, "_trig_terms"):
            return EndomorphismField.from_trig(op(self._trig_terms), self.q,
                                               label=label)
        return None

    def shifted(self, s):
        """Field y -> a(y) + s * I."""
        s = complex(s)
        eye = np.eye(self.size, dtype=complex)

        def op(terms):
            out = {k: v.copy() for k, v in terms.items()}
            zero = (0,) * self.q
            out[zero] = out.get(zero, np.zeros_like(eye)) + s * eye
            return out

        f = self._map_terms(op, f"{self.label}+{s}")
        if f is not None:
            return f
        return EndomorphismField(
            lambda pts: self._fn(pts) + s * eye, self.q, self.size,
            deriv_fn=None if self._deriv_fn is None else
            (lambda alpha, pts: self._deriv_fn(alpha, pts) +
             (s * eye if not any(alpha) else 0.0)),
            max_order=self.max_order, label=f"{self.label}+{s}")

    def scaled(self, c):
        c = complex(c)
        f = self._map_terms(lambda terms: {k: c * v for k, v in terms.items()},
                            f"{c}*{self.label}")
        if f is not None:
            return f
        return EndomorphismField(
            lambda pts: c * self._fn(pts), self.q, self.size,
            deriv_fn=None if self._deriv_fn is None else
            (lambda alpha, pts: c * self._deriv_fn(alpha, pts)),
            max_order=self.max_order, label=f"{c}*{self.label}")

    def __neg__(self):
        return self.scaled(-1.0)

    def adjoint(self):
        """Pointwise Hermitian adjoint field y -> a(y)^H."""
        f = self._map_terms(
            lambda terms: {tuple(-c for c in k): v.conj().T
                           for k, v in terms.items()},
            f"{self.label}^*")
        if f is not None:
            return f
        return EndomorphismField(
            lambda pts: np.conj(np.swapaxes(self._fn(pts), -1, -2)),
            self.q, self.size,
            deriv_fn=None if self._deriv_fn is None else
            (lambda alpha, pts:
             np.conj(np.swapaxes(self._deriv_fn(alpha, pts), -1, -2))),
            max_order=self.max_order, label=f"{self.label}^*")

    def spectrum_on(self, points):
        """Eigenvalues at each sample point, shape (n, M)."""
        vals = self(points)
        return np.linalg.eigvals(vals)


def fields_close(f, g, n=8, tol=1e-9):
    """True when two fields agree on a probe grid (both None counts as equal)."""
    if f is None and g is None:
        return True
    if f is None or g is None:
        f_ = f or g
        pts = torus_grid(f_.q, n)
        return float(np.max(np.abs(f_(pts)))) <= tol
    if f.q != g.q or f.size != g.size:
        return False
    pts = torus_grid(f.q, n)
    return float(np.max(np.abs(f(pts) - g(pts)))) <= tol


class ResolventTable:
    """y-derivatives of (sigma - a(y))^{-1} on a fixed node set and grid.

    Uses the Leibniz recursion from (sigma - a) R = I:

        D^alpha R = R * sum_{0 < gamma <= alpha} C(alpha, gamma)
                        (D^gamma a) (D^{alpha-gamma} R).
    """

    def __init__(self, field, nodes, pts):
        self.field = field
        self.nodes = np.asarray(nodes, dtype=complex)
        self.pts = np.asarray(pts, dtype=float)
        self._cache = {}
        self._field_cache = {}

    def _dfield(self, alpha):
        if alpha not in self._field_cache:
            self._field_cache[alpha] = self.field.deriv(alpha, self.pts)
        return self._field_cache[alpha]

    def get(self, alpha):
        alpha = tuple(int(k) for k in alpha)
        if alpha in self._cache:
            return self._cache[alpha]
        m = self.field.size
        a = self._dfield((0,) * self.field.q)
        if not any(alpha):
            shifts = (self.nodes[:, None, None, None] * np.eye(m)
                      - a[None, :, :, :])
            rhs = np.broadcast_to(np.eye(m, dtype=complex), shifts.shape)
            out = np.linalg.solve(shifts, rhs)
        else:
            r0 = self.get((0,) * self.field.q)
            acc = np.zeros_like(r0)
            for gamma in _sub_multi_indices(alpha):
                if not any(gamma):
                    continue
                coef = _binom_prod(alpha, gamma)
                rem = tuple(a_ - g_ for a_, g_ in zip(alpha, gamma))
                da = self._dfield(gamma)
                acc += coef * np.einsum("nij,snjk->snik", da, self.get(rem))
            out = np.einsum("snij,snjk->snik", r0, acc)
        self._cache[alpha] = out
        return out


def _sub_multi_indices(alpha):
    """All gamma with 0 <= gamma <= alpha componentwise."""
    ranges = [range(k + 1) for k in alpha]
    return [tuple(g) for g in product(*ranges)]


def _binom_prod(alpha, gamma):
    out = 1
    for a_, g_ in zip(alpha, gamma):
        out *= math.comb(a_, g_)
    return out
