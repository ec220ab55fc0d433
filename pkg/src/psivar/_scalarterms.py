"""Closed-form derivative machinery for radial scalar factors.

Two term families, both closed under eta-differentiation:

* ``EtaTerms``   -- sums of  c * eta^gamma * (c0 + |eta|^2)^e  with fixed
  real exponents (polynomials, bracket powers, cutoff blends).
* ``SigmaEtaTerms`` -- sums of  c * sigma^j * eta^gamma * (c0+|eta|^2)^(sigma/2 - k)
  used for derivatives of bracket powers inside contour quadrature.

Plus a small Bell-polynomial recursion that turns derivative values of a
positive scalar b into derivative values of b^sigma.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def _merge(terms):
    out = {}
    for key, coeff in terms:
        out[key] = out.get(key, 0.0) + coeff
    return [(k, c) for k, c in out.items() if c != 0.0]


class EtaTerms:
    """sum_t coeff_t * eta^gamma_t * (c0 + |eta|^2)^e_t."""

    def __init__(self, terms, q, c0=1.0):
        # terms: list of ((gamma tuple, e float), coeff)
        self.terms = _merge(terms)
        self.q = q
        self.c0 = float(c0)

    @classmethod
    def bracket_power(cls, e, q, c0=1.0):
        return cls([(((0,) * q, float(e)), 1.0)], q, c0)

    @classmethod
    def monomial(cls, gamma, q, coeff=1.0):
        return cls([((tuple(gamma), 0.0), coeff)], q, 1.0)

    @classmethod
    def polynomial_in_r(cls, coeffs, q):
        """sum_j coeffs[j] * |eta|^j as terms over base |eta|^2 (c0 = 0)."""
        terms = [(((0,) * q, 0.5 * j), c) for j, c in enumerate(coeffs) if c != 0.0]
        return cls(terms, q, c0=0.0)

    def derivative(self, m):
        new = []
        for (gamma, e), coeff in self.terms:
            if gamma[m] > 0:
                g2 = tuple(g - 1 if i == m else g for i, g in enumerate(gamma))
                new.append(((g2, e), coeff * gamma[m]))
            if e != 0.0:
                g2 = tuple(g + 1 if i == m else g for i, g in enumerate(gamma))
                new.append(((g2, e - 1.0), coeff * 2.0 * e))
        return EtaTerms(new, self.q, self.c0)

    def deriv_multi(self, beta):
        out = self
        for m, k in enumerate(beta):
            for _ in range(k):
                out = out.derivative(m)
        return out

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        b = self.c0 + float(np.dot(eta, eta))
        total = 0.0
        for (gamma, e), coeff in self.terms:
            mono = 1.0
            for g, x in zip(gamma, eta):
                mono *= x ** g
            total += coeff * mono * b ** e
        return total


class SigmaEtaTerms:
    """sum_t coeff_t * sigma^j * eta^gamma * (c0+|eta|^2)^(sigma/2 - k)."""

    def __init__(self, terms, q, c0=1.0):
        # terms: list of ((j int, gamma tuple, k int), coeff)
        self.terms = _merge(terms)
        self.q = q
        self.c0 = float(c0)

    @classmethod
    def base(cls, q, c0=1.0):
        return cls([((0, (0,) * q, 0), 1.0)], q, c0)

    def derivative(self, m):
        new = []
        for (j, gamma, k), coeff in self.terms:
            if gamma[m] > 0:
                g2 = tuple(g - 1 if i == m else g for i, g in enumerate(gamma))
                new.append(((j, g2, k), coeff * gamma[m]))
            g2 = tuple(g + 1 if i == m else g for i, g in enumerate(gamma))
            new.append(((j + 1, g2, k + 1), coeff))
            if k != 0:
                new.append(((j, g2, k + 1), -2.0 * k * coeff))
        return SigmaEtaTerms(new, self.q, self.c0)

    def deriv_multi(self, beta):
        out = self
        for m, k in enumerate(beta):
            for _ in range(k):
                out = out.derivative(m)
        return out

    def __call__(self, sigmas, eta):
        """Evaluate at contour nodes; returns an array of shape (n_nodes,)."""
        sigmas = np.asarray(sigmas, dtype=complex)
        eta = np.asarray(eta, dtype=float)
        b = self.c0 + float(np.dot(eta, eta))
        logb = math.log(b)
        bs = np.exp(0.5 * sigmas * logb)          # b^(sigma/2)
        out = np.zeros_like(sigmas)
        for (j, gamma, k), coeff in self.terms:
            mono = 1.0
            for g, x in zip(gamma, eta):
                mono *= x ** g
            out = out + coeff * mono * sigmas ** j * bs * b ** (-k)
        return out


# ---------------------------------------------------------------------------
# Bell recursion: derivatives of b^sigma from derivatives of b
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def exp_expansion(kappa, nvars):
    """Symbolic expansion of D^kappa e^{sigma u} / e^{sigma u}.

    Returns a dict {(sigma_deg, monomial): coeff} where ``monomial`` is a
    sorted tuple of multi-indices, each standing for one factor D^lambda u.
    """
    kappa = tuple(kappa)
    if not any(kappa):
        return {(0, ()): 1.0}
    m = next(i for i, k in enumerate(kappa) if k > 0)
    lower = tuple(k - 1 if i == m else k for i, k in enumerate(kappa))
    prev = exp_expansion(lower, nvars)
    unit = tuple(1 if i == m else 0 for i in range(nvars))
    out = {}

    def add(key, c):
        out[key] = out.get(key, 0.0) + c

    for (deg, mono), coeff in prev.items():
        # sigma * (d_m u) * previous
        add((deg + 1, tuple(sorted(mono + (unit,)))), coeff)
        # d_m applied to each factor of the monomial
        for idx in range(len(mono)):
            lam = mono[idx]
            lam2 = tuple(l + 1 if i == m else l for i, l in enumerate(lam))
            new_mono = tuple(sorted(mono[:idx] + (lam2,) + mono[idx + 1:]))
            add((deg, new_mono), coeff)
    return out


def all_sub_indices(kappa):
    from itertools import product
    return [tuple(g) for g in product(*[range(k + 1) for k in kappa])]


def log_derivs(b_derivs):
    """Derivative values of u = log b from derivative values of b.

    ``b_derivs`` maps multi-indices to arrays (same shapes); must contain
    every index below the maximal ones requested.  Returns the same map
    for u (zero index omitted).
    """
    some = next(iter(b_derivs))
    nvars = len(some)
    b0 = b_derivs[(0,) * nvars]
    order = sorted((k for k in b_derivs if any(k)),
                   key=lambda k: (sum(k), k))
    u = {}
    for kappa in order:
        exp = exp_expansion(kappa, nvars)
        # at sigma = 1:  D^kappa b / b = u_kappa + other monomials
        rest = np.zeros_like(b0)
        for (deg, mono), coeff in exp.items():
            if mono == (kappa,):
                continue
            term = coeff * np.ones_like(b0)
            for lam in mono:
                term = term * u[lam]
            rest = rest + term
        u[kappa] = b_derivs[kappa] / b0 - rest
    return u


def power_factor(u_derivs, kappa, sigmas, shape):
    """D^kappa b^sigma / b^sigma as an array over (nodes,) x value-shape.

    ``sigmas`` has shape (n,); u values have shape ``shape``; the output
    has shape (n,) + shape.
    """
    nvars = len(kappa)
    exp = exp_expansion(tuple(kappa), nvars)
    out = np.zeros((len(sigmas),) + shape, dtype=complex)
    for (deg, mono), coeff in exp.items():
        term = coeff * np.ones(shape, dtype=complex)
        for lam in mono:
            term = term * u_derivs[lam]
        out = out + sigmas.reshape((-1,) + (1,) * len(shape)) ** deg * term
    return out
