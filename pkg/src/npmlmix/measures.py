"""Discrete mixing measures, the hat-density sieve, and distances between fits.

Measures are immutable: constructors copy their inputs and mark the arrays
read-only, so values can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateMeasureError, InvalidArgumentError

_WEIGHT_NEG_TOL = 1e-15
_WEIGHT_SUM_TOL = 1e-6


def _clean_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0:
        raise InvalidArgumentError("a measure needs at least one weight")
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite")
    if np.any(w < -_WEIGHT_NEG_TOL):
        raise InvalidArgumentError("weights must be nonnegative")
    w = np.maximum(w, 0.0)
    total = w.sum()
    if abs(total - 1.0) > _WEIGHT_SUM_TOL:
        raise InvalidArgumentError(f"weights sum to {total!r}, expected 1")
    return w / total


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MixingMeasure:
    """Discrete candidate mixing law: m atoms in R^p with simplex weights."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise InvalidArgumentError("atoms must form a nonempty (m, p) array")
        if not np.all(np.isfinite(atoms)):
            raise InvalidArgumentError("atoms must be finite")
        w = _clean_weights(self.weights)
        if w.shape[0] != atoms.shape[0]:
            raise InvalidArgumentError("weights length does not match atom count")
        object.__setattr__(self, "atoms", _freeze(atoms))
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def p(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def with_weights(self, weights) -> "MixingMeasure":
        return MixingMeasure(self.atoms, weights)


def new_uniform_grid_measure(box: Sequence, counts) -> MixingMeasure:
    """Equal-weight measure on a tensor grid over the box.

    ``box`` is a sequence of (lo, hi) pairs; ``counts`` an int or sequence of
    per-axis node counts. Axes with a single node get the interval midpoint;
    otherwise nodes include the endpoints.
    """
    box_arr = np.asarray(box, dtype=float)
    if box_arr.ndim != 2 or box_arr.shape[1] != 2 or box_arr.shape[0] == 0:
        raise InvalidArgumentError("box must be a sequence of (lo, hi) pairs")
    if np.any(box_arr[:, 0] >= box_arr[:, 1]):
        raise InvalidArgumentError("box is empty: each axis needs lo < hi")
    p = box_arr.shape[0]
    if np.isscalar(counts):
        counts = [int(counts)] * p
    counts = [int(c) for c in counts]
    if len(counts) != p:
        raise InvalidArgumentError("counts length does not match box dimension")
    if any(c < 1 for c in counts):
        raise InvalidArgumentError("counts must be >= 1 per axis")
    axes = []
    for (lo, hi), c in zip(box_arr, counts):
        axes.append(np.array([(lo + hi) / 2.0]) if c == 1 else np.linspace(lo, hi, c))
    grids = np.meshgrid(*axes, indexing="ij")
    atoms = np.stack([g.reshape(-1) for g in grids], axis=1)
    m = atoms.shape[0]
    return MixingMeasure(atoms, np.full(m, 1.0 / m))


def prune(mu: MixingMeasure, eps: float) -> MixingMeasure:
    """Drop atoms with weight below eps and renormalize the rest."""
    if not (0 < eps < 1):
        raise InvalidArgumentError("eps must lie in (0, 1)")
    keep = mu.weights >= eps
    if not np.any(keep):
        raise DegenerateMeasureError("all weights fall below the pruning threshold")
    w = mu.weights[keep]
    return MixingMeasure(mu.atoms[keep], w / w.sum())


def merge_close_atoms(mu: MixingMeasure, radius: float) -> MixingMeasure:
    """Merge clusters of atoms within the radius to weighted centroids.

    Clusters are connected components of the "within radius" graph, so chains
    merge together; total mass and the measure's mean are preserved.
    """
    if radius < 0:
        raise InvalidArgumentError("radius must be nonnegative")
    m = mu.m
    if m == 1:
        return mu
    diff = mu.atoms[:, None, :] - mu.atoms[None, :, :]
    close = np.sqrt((diff * diff).sum(axis=2)) <= radius
    # union-find over the adjacency
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if close[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(m)]
    order = sorted(set(roots), key=roots.index)
    new_atoms, new_weights = [], []
    for r in order:
        members = [i for i in range(m) if roots[i] == r]
        w = mu.weights[members]
        total = w.sum()
        if total <= 0:
            # zero-mass cluster keeps its first atom location
            new_atoms.append(mu.atoms[members[0]])
            new_weights.append(0.0)
            continue
        new_atoms.append((w[:, None] * mu.atoms[members]).sum(axis=0) / total)
        new_weights.append(total)
    return MixingMeasure(np.asarray(new_atoms), np.asarray(new_weights))


def _w1_discrete(u_vals, u_w, v_vals, v_w) -> float:
    """Exact W1 between two weighted discrete 1-d measures via CDF coupling."""
    u_vals = np.asarray(u_vals, dtype=float)
    v_vals = np.asarray(v_vals, dtype=float)
    u_w = np.asarray(u_w, dtype=float)
    v_w = np.asarray(v_w, dtype=float)
    us = np.argsort(u_vals, kind="stable")
    vs = np.argsort(v_vals, kind="stable")
    all_vals = np.sort(np.concatenate([u_vals, v_vals]), kind="stable")
    deltas = np.diff(all_vals)
    u_cdf_idx = np.searchsorted(u_vals[us], all_vals[:-1], side="right")
    v_cdf_idx = np.searchsorted(v_vals[vs], all_vals[:-1], side="right")
    u_cum = np.concatenate([[0.0], np.cumsum(u_w[us])])
    v_cum = np.concatenate([[0.0], np.cumsum(v_w[vs])])
    u_cdf = u_cum[u_cdf_idx] / u_cum[-1]
    v_cdf = v_cum[v_cdf_idx] / v_cum[-1]
    return float(np.sum(np.abs(u_cdf - v_cdf) * deltas))


def wasserstein1_1d(mu: MixingMeasure, nu: MixingMeasure) -> float:
    """Exact 1-Wasserstein distance between two 1-d discrete measures."""
    if mu.p != 1 or nu.p != 1:
        raise InvalidArgumentError("wasserstein1_1d needs one-dimensional measures")
    return _w1_discrete(mu.atoms[:, 0], mu.weights, nu.atoms[:, 0], nu.weights)


def measure_distance(mu: MixingMeasure, nu: MixingMeasure) -> float:
    """Mean over coordinates of the marginal W1 distances (a pseudometric)."""
    if mu.p != nu.p:
        raise InvalidArgumentError("measures live in different dimensions")
    vals = [
        _w1_discrete(mu.atoms[:, c], mu.weights, nu.atoms[:, c], nu.weights)
        for c in range(mu.p)
    ]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Hat-density sieve
# ---------------------------------------------------------------------------


class SieveBasis:
    """Tensor-product hat densities on a uniform grid over a compact box.

    Per axis with k >= 2 nodes the nodes are equispaced including the
    endpoints (spacing h); element j is the tent at node j normalized to
    integrate to 1 (boundary tents are half tents). A single-node axis
    degenerates to the uniform density on that interval. Every convex
    combination of the tensor-product elements is a probability density
    supported in the box, and its Lipschitz constant is bounded by
    ``gradient_bound()``.
    """

    def __init__(self, box: Sequence, node_counts):
        box_arr = np.asarray(box, dtype=float)
        if box_arr.ndim != 2 or box_arr.shape[1] != 2 or box_arr.shape[0] == 0:
            raise InvalidArgumentError("box must be a sequence of (lo, hi) pairs")
        if np.any(box_arr[:, 0] >= box_arr[:, 1]):
            raise InvalidArgumentError("box is empty: each axis needs lo < hi")
        p = box_arr.shape[0]
        if np.isscalar(node_counts):
            node_counts = [int(node_counts)] * p
        node_counts = [int(c) for c in node_counts]
        if len(node_counts) != p:
            raise InvalidArgumentError("node_counts length does not match box dimension")
        if any(c < 1 for c in node_counts):
            raise InvalidArgumentError("node_counts must be >= 1 per axis")
        self.box = _freeze(box_arr)
        self.node_counts = tuple(node_counts)
        self._axis_nodes = []
        for (lo, hi), c in zip(box_arr, node_counts):
            if c == 1:
                self._axis_nodes.append(np.array([(lo + hi) / 2.0]))
            else:
                self._axis_nodes.append(np.linspace(lo, hi, c))
        grids = np.meshgrid(*self._axis_nodes, indexing="ij")
        self.nodes = _freeze(np.stack([g.reshape(-1) for g in grids], axis=1))

    @property
    def p(self) -> int:
        return self.box.shape[0]

    @property
    def m(self) -> int:
        return self.nodes.shape[0]

    def spacings(self) -> list:
        """Per-axis node spacing (interval width for single-node axes)."""
        out = []
        for (lo, hi), c in zip(self.box, self.node_counts):
            out.append((hi - lo) if c == 1 else (hi - lo) / (c - 1))
        return out

    def gradient_bound(self) -> float:
        """Upper bound on sup-norm gradients over the basis (hence over the hull)."""
        peaks, slopes = [], []
        for (lo, hi), c in zip(self.box, self.node_counts):
            if c == 1:
                peaks.append(1.0 / (hi - lo))
                slopes.append(0.0)
            else:
                h = (hi - lo) / (c - 1)
                peaks.append(2.0 / h)  # boundary tent peak dominates
                slopes.append(2.0 / (h * h))
        best = 0.0
        for axis in range(self.p):
            val = slopes[axis]
            for other in range(self.p):
                if other != axis:
                    val *= peaks[other]
            best = max(best, val)
        return best

    def _axis_log_values(self, axis: int, x: np.ndarray) -> np.ndarray:
        """Log of the normalized 1-d element values at points x: (len(x), c)."""
        nodes = self._axis_nodes[axis]
        lo, hi = self.box[axis]
        c = nodes.shape[0]
        if c == 1:
            inside = (x >= lo) & (x <= hi)
            out = np.full((x.shape[0], 1), -np.inf)
            out[inside, 0] = -np.log(hi - lo)
            return out
        h = (hi - lo) / (c - 1)
        tent = np.maximum(0.0, 1.0 - np.abs(x[:, None] - nodes[None, :]) / h)
        norms = np.full(c, h)
        norms[0] = h / 2.0
        norms[-1] = h / 2.0
        vals = tent / norms[None, :]
        with np.errstate(divide="ignore"):
            return np.log(vals)

    def log_basis_values(self, points: np.ndarray) -> np.ndarray:
        """Log basis densities at points: (Q, m) with -inf off support."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        per_axis = [self._axis_log_values(a, points[:, a]) for a in range(self.p)]
        out = per_axis[0]
        for a in range(1, self.p):
            out = out[:, :, None] + per_axis[a][:, None, :]
            out = out.reshape(points.shape[0], -1)
        return out

    def quadrature(self, points_per_cell: int):
        """Tensor Gauss-Legendre rule exact per grid cell: (points, log_weights)."""
        if points_per_cell < 1:
            raise InvalidArgumentError("points_per_cell must be >= 1")
        gl_x, gl_w = np.polynomial.legendre.leggauss(points_per_cell)
        axis_pts, axis_w = [], []
        for (lo, hi), c in zip(self.box, self.node_counts):
            edges = np.array([lo, hi]) if c == 1 else np.linspace(lo, hi, c)
            pts, wts = [], []
            for a, b in zip(edges[:-1], edges[1:]):
                half = (b - a) / 2.0
                pts.append((a + b) / 2.0 + half * gl_x)
                wts.append(half * gl_w)
            axis_pts.append(np.concatenate(pts))
            axis_w.append(np.concatenate(wts))
        grids = np.meshgrid(*axis_pts, indexing="ij")
        points = np.stack([g.reshape(-1) for g in grids], axis=1)
        wgrids = np.meshgrid(*axis_w, indexing="ij")
        weights = np.ones(points.shape[0])
        for g in wgrids:
            weights = weights * g.reshape(-1)
        return points, np.log(weights)


@dataclass(frozen=True)
class SieveDensity:
    """A point of the sieve: simplex coefficients over the basis elements."""

    basis: SieveBasis
    coefficients: np.ndarray

    def __post_init__(self):
        w = _clean_weights(self.coefficients)
        if w.shape[0] != self.basis.m:
            raise InvalidArgumentError("coefficient length does not match the basis size")
        object.__setattr__(self, "coefficients", _freeze(w))


def sieve_to_measure(d: SieveDensity) -> MixingMeasure:
    """Node representation of a sieve density, for distance reporting."""
    return MixingMeasure(d.basis.nodes, d.coefficients)
