"""Eigenvalue clustering of matrix fields over sampled base regions.

The clustering pools the spectra of a(y) over all sample points, joins
eigenvalue branches between neighboring samples (so a branch can never
be split across clusters), and then agglomerates by single linkage.
The coarsest grouping whose cluster hulls have diameter < delta,
pairwise positive gaps, and room for enclosing circles wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import linear_sum_assignment
from shapely.geometry import MultiPoint

from .errors import FrameError, NeedsSubdivisionError, ShapeError
from .matfun import (
    Contour,
    EndomorphismField,
    ResolventTable,
    TWO_PI,
    group_action,
    torus_grid,
)

DEFAULT_DELTA = 0.5


class SampledRegion:
    """Uniform grid of base points over the torus or a sub-box."""

    def __init__(self, points, shape, bounds):
        self.points = np.asarray(points, dtype=float)
        self.shape = tuple(int(n) for n in shape)
        self.bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        self.q = self.points.shape[1]
        if any(n < 8 for n in self.shape):
            raise ShapeError("a sampled region needs at least 8 points per axis")

    @classmethod
    def torus(cls, q=1, n=32):
        return cls(torus_grid(q, n), (n,) * q, [(0.0, TWO_PI)] * q)

    @classmethod
    def box(cls, bounds, n=16):
        bounds = [tuple(b) for b in np.atleast_2d(bounds)]
        q = len(bounds)
        axes = [np.linspace(lo, hi, n) for lo, hi in bounds]
        if q == 1:
            pts = axes[0][:, None]
        else:
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=-1)
        return cls(pts, (n,) * q, bounds)

    @property
    def periodic(self):
        return all(abs((hi - lo) - TWO_PI) < 1e-12 for lo, hi in self.bounds)

    def neighbor_pairs(self):
        """Index pairs of grid-adjacent sample points."""
        idx = np.arange(len(self.points)).reshape(self.shape)
        pairs = []
        for axis in range(self.q):
            a = idx
            b = np.roll(idx, -1, axis=axis)
            take = [slice(None)] * self.q
            if not self.periodic:
                take[axis] = slice(0, self.shape[axis] - 1)
            pairs.append(np.stack([a[tuple(take)].ravel(),
                                   b[tuple(take)].ravel()], axis=-1))
        return np.concatenate(pairs, axis=0)

    def bisect(self, axis=0):
        """Split along one axis into two half regions (same point count each)."""
        lo, hi = self.bounds[axis]
        mid = 0.5 * (lo + hi)
        b1 = list(self.bounds)
        b2 = list(self.bounds)
        b1[axis] = (lo, mid)
        b2[axis] = (mid, hi)
        n = max(self.shape)
        return SampledRegion.box(b1, n), SampledRegion.box(b2, n)


@dataclass
class Cluster:
    """One eigenvalue cluster with its enclosing contour."""

    points: np.ndarray
    centroid: complex
    radius: float
    diameter: float
    contour: Contour
    dim: int
    sample_ids: np.ndarray


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _hull(points):
    return MultiPoint([(z.real, z.imag) for z in points]).convex_hull


def _diameter(points):
    if len(points) == 1:
        return 0.0
    d = np.abs(points[:, None] - points[None, :])
    return float(d.max())


def _adaptive_nodes(inner, outer, base=64):
    """Node count for spectral accuracy given inner/outer distance ratios."""
    rho = max(inner, outer)
    if rho <= 0 or rho >= 1:
        return base
    need = int(math.ceil(math.log(1e-14) / math.log(rho)))
    return int(min(1024, max(base, need)))


def _check_grouping(groups, pooled, delta, gap_req):
    """Validity data for one grouping, or None if it violates a constraint."""
    info = []
    hulls = [_hull(pooled[g]) for g in groups]
    # pairwise hull gap
    gap = np.inf
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gap = min(gap, hulls[i].distance(hulls[j]))
    if len(groups) > 1 and gap < gap_req:
        return None
    for k, g in enumerate(groups):
        pts = pooled[g]
        diam = _diameter(pts)
        if diam >= delta:
            return None
        c = pts.mean()
        r = float(np.max(np.abs(pts - c)))
        others = np.concatenate([pooled[g2] for j, g2 in enumerate(groups)
                                 if j != k]) if len(groups) > 1 else None
        avail = float(np.min(np.abs(others - c))) if others is not None else np.inf
        gap_used = min(gap, avail - r) if others is not None else np.inf
        if others is not None and gap_used < gap_req:
            return None
        if 2 * r + gap_req >= delta:
            return None
        radius = r + 0.5 * min(gap_used, 0.99 * (delta - 2 * r))
        info.append({"centroid": c, "radius_pts": r, "diameter": diam,
                     "contour_radius": radius, "available": avail})
    return info


def cluster_eigenvalues(field, region, delta=DEFAULT_DELTA, nodes=64):
    """Pooled-spectrum clustering of ``field`` over ``region``.

    Returns a :class:`ClusterDecomposition` or raises
    :class:`NeedsSubdivisionError` when eigenvalue branches sweep across
    every candidate gap.
    """
    if not 0 < delta < 1:
        raise ShapeError("delta must lie in (0, 1)")
    pts = region.points
    evals = field.spectrum_on(pts)          # (P, M)
    P, M = evals.shape
    pooled = evals.ravel()
    sample_of = np.repeat(np.arange(P), M)

    uf = _UnionFind(P * M)
    for i, j in region.neighbor_pairs():
        cost = np.abs(evals[i][:, None] - evals[j][None, :])
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            uf.union(i * M + r, j * M + c)

    comp_of = np.array([uf.find(i) for i in range(P * M)])
    labels = {c: n for n, c in enumerate(dict.fromkeys(comp_of))}
    comp_of = np.array([labels[c] for c in comp_of])
    groups = [np.nonzero(comp_of == k)[0] for k in range(len(labels))]

    # single-linkage agglomeration over branch components
    merges = [list(groups)]
    work = list(groups)
    while len(work) > 1:
        best = (np.inf, 0, 1)
        for i in range(len(work)):
            for j in range(i + 1, len(work)):
                d = np.min(np.abs(pooled[work[i]][:, None]
                                  - pooled[work[j]][None, :]))
                if d < best[0] - 1e-15:
                    best = (d, i, j)
        _, i, j = best
        merged = [work[k] for k in range(len(work)) if k not in (i, j)]
        merged.append(np.concatenate([work[i], work[j]]))
        work = merged
        merges.append(list(work))

    gap_req = max(1e-6, delta / 10.0)
    chosen = None
    for grouping in reversed(merges):        # coarsest first
        info = _check_grouping(grouping, pooled, delta, gap_req)
        if info is not None:
            chosen = (grouping, info)
            break
    if chosen is None:
        # report the samples of the tightest over-spread branch component
        bad = max(groups, key=lambda g: _diameter(pooled[g]))
        bad_pts = pts[np.unique(sample_of[bad])]
        raise NeedsSubdivisionError(
            f"no clustering with diameter < {delta} and positive gaps exists "
            "over this region", points=bad_pts)

    grouping, info = chosen
    clusters = []
    for g, meta in zip(grouping, info):
        inner = meta["radius_pts"] / meta["contour_radius"]
        outer = (meta["contour_radius"] / meta["available"]
                 if np.isfinite(meta["available"]) else 0.0)
        n_k = _adaptive_nodes(inner, outer, base=nodes)
        contour = Contour.circle(meta["centroid"], meta["contour_radius"], n_k)
        clusters.append(Cluster(
            points=pooled[g], centroid=meta["centroid"],
            radius=meta["radius_pts"], diameter=meta["diameter"],
            contour=contour, dim=0, sample_ids=np.unique(sample_of[g])))
    dec = ClusterDecomposition(field, region, delta, clusters)
    dec._assign_dims()
    return dec


class ClusterDecomposition:
    """delta-admissible decomposition data for one matrix field."""

    def __init__(self, field, region, delta, clusters):
        self.field = field
        self.region = region
        self.delta = float(delta)
        self.clusters = clusters

    @property
    def size(self):
        return self.field.size

    def projector_field(self, k):
        """Pi_k as a matrix field with exact derivatives."""
        contour = self.clusters[k].contour
        fld = self.field

        def make(pts, alpha):
            tab = ResolventTable(fld, contour.nodes, pts)
            return np.einsum("s,snij->nij", contour.weights, tab.get(alpha))

        return EndomorphismField(
            lambda pts: make(pts, (0,) * fld.q), fld.q, fld.size,
            deriv_fn=lambda alpha, pts: make(pts, alpha),
            label=f"proj[{k}]")

    def projectors_at(self, pts):
        """All Pi_k stacked, shape (K, n, M, M)."""
        return np.stack([self.projector_field(k)(pts)
                         for k in range(len(self.clusters))])

    def _assign_dims(self):
        pis = self.projectors_at(self.region.points)
        for k, cl in enumerate(self.clusters):
            cl.dim = int(round(float(np.mean(np.trace(
                pis[k], axis1=-2, axis2=-1).real))))

    def contours(self):
        return [cl.contour for cl in self.clusters]

    def validate(self, tol=1e-9):
        """Check every structural invariant; returns a diagnostics dict."""
        out = {"ok": True, "issues": []}
        hulls = [_hull(cl.points) for cl in self.clusters]
        for k, cl in enumerate(self.clusters):
            if cl.diameter >= self.delta:
                out["issues"].append(f"cluster {k} diameter {cl.diameter}")
            if cl.contour.diameter >= self.delta + 1e-12:
                out["issues"].append(f"contour {k} diameter too large")
        for i in range(len(self.clusters)):
            for j in range(i + 1, len(self.clusters)):
                if hulls[i].distance(hulls[j]) <= 0:
                    out["issues"].append(f"hulls {i},{j} intersect")
        if sum(cl.dim for cl in self.clusters) != self.size:
            out["issues"].append("subspace dimensions do not sum to M")
        pts = self.region.points
        pis = self.projectors_at(pts)
        ssum = pis.sum(axis=0)
        eye = np.eye(self.size)
        out["partition_residual"] = float(np.max(np.abs(ssum - eye)))
        idem = max(float(np.max(np.abs(
            np.einsum("nij,njk->nik", pis[k], pis[k]) - pis[k])))
            for k in range(len(self.clusters)))
        out["idempotency_residual"] = idem
        cross = 0.0
        for i in range(len(self.clusters)):
            for j in range(len(self.clusters)):
                if i == j:
                    continue
                cross = max(cross, float(np.max(np.abs(
                    np.einsum("nij,njk->nik", pis[i], pis[j])))))
        out["cross_residual"] = cross
        avals = self.field(pts)
        comm = max(float(np.max(np.abs(
            np.einsum("nij,njk->nik", avals, pis[k])
            - np.einsum("nij,njk->nik", pis[k], avals))))
            for k in range(len(self.clusters)))
        out["commutator_residual"] = comm
        for key in ("partition_residual", "idempotency_residual",
                    "cross_residual", "commutator_residual"):
            if out[key] > tol:
                out["issues"].append(f"{key} = {out[key]:.3e}")
        out["ok"] = not out["issues"]
        return out

    def summary(self):
        return {
            "delta": self.delta,
            "clusters": [
                {"centroid": [cl.centroid.real, cl.centroid.imag],
                 "diameter": cl.diameter,
                 "contour_radius": cl.contour.params.get("radius"),
                 "dim": cl.dim,
                 "count": int(cl.points.size)}
                for cl in self.clusters],
        }


def decompose_or_bisect(field, region, delta=DEFAULT_DELTA, max_depth=1):
    """Cluster the region, bisecting along axis 0 when required.

    Returns a list of (region, decomposition) pairs.
    """
    try:
        return [(region, cluster_eigenvalues(field, region, delta))]
    except NeedsSubdivisionError:
        if max_depth <= 0:
            raise
        out = []
        for half in region.bisect(axis=0):
            out.extend(decompose_or_bisect(field, half, delta,
                                           max_depth=max_depth - 1))
        return out


@dataclass
class TransitionReport:
    """Residuals of the zero-degree homogeneity identity for a frame change."""

    max_residual: float
    per_rho: dict
    samples: int
    passed: bool = dc_field(init=False)

    def __post_init__(self):
        self.passed = self.max_residual <= 1e-9


def transition_homogeneity_check(phi, psi, a_phi, a_psi, rhos=(0.5, 2.0, 10.0),
                                 region=None):
    """Measure max over samples of || Theta - rho^{-a_psi} Theta rho^{a_phi} ||.

    ``Theta = psi phi^{-1}``; a residual at round-off certifies that the
    transition intertwines the two actions.
    """
    if region is None:
        region = SampledRegion.torus(phi.q, 16)
    pts = region.points
    fvals = phi(pts)
    gvals = psi(pts)
    for name, vals in (("phi", fvals), ("psi", gvals)):
        sv = np.linalg.svd(vals, compute_uv=False)
        if np.any(sv[..., -1] < 1e-12 * sv[..., 0]):
            raise FrameError(f"frame {name} is singular at a sample point")
    theta = np.einsum("nij,njk->nik", gvals, np.linalg.inv(fvals))
    aphi = a_phi(pts)
    apsi = a_psi(pts)
    per_rho = {}
    for rho in rhos:
        worst = 0.0
        for n in range(pts.shape[0]):
            left = group_action(apsi[n], 1.0 / rho)
            right = group_action(aphi[n], rho)
            resid = theta[n] - left @ theta[n] @ right
            worst = max(worst, float(np.linalg.norm(resid, 2)))
        per_rho[float(rho)] = worst
    max_res = max(per_rho.values())
    return TransitionReport(max_residual=max_res, per_rho=per_rho,
                            samples=pts.shape[0])
