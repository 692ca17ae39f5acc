"""Maximization of the mixture log-likelihood over weights and supports.

The discrete fit runs EM on a fixed atom grid, prunes negligible weights,
then alternates certificate scans with atom insertion at the best candidate
(a vertex-direction style refinement) until the directional derivative is
below 1 + refine_tol everywhere on the scan grid. The sieve fit is the same
EM on the basis-integrated kernel matrix, with the feasible set fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateMeasureError, InvalidArgumentError
from .likelihood import (
    KernelMatrix,
    build_kernel_matrix,
    build_sieve_kernel_matrix,
    kernel_columns,
    log_likelihood,
    row_log_mixture,
)
from .measures import MixingMeasure, SieveBasis, SieveDensity, new_uniform_grid_measure

STATUS_CONVERGED = "converged"
STATUS_ITER_LIMIT = "iter-limit"

# largest loglik drop tolerated from a bookkeeping step (insert/prune)
_TRACE_SLACK = 1e-13


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the EM loop, pruning, and support refinement."""

    tol_rel_loglik: float = 1e-10
    max_em_iters: int = 10000
    prune_eps: float = 1e-8
    refine_grid: int = 64
    refine_tol: float = 1e-6
    max_refinements: int = 50

    def __post_init__(self):
        if self.tol_rel_loglik <= 0 or self.prune_eps <= 0 or self.refine_tol <= 0:
            raise InvalidArgumentError("tolerances must be strictly positive")
        if self.max_em_iters < 1 or self.refine_grid < 1 or self.max_refinements < 0:
            raise InvalidArgumentError("iteration and grid limits must be positive")


@dataclass(frozen=True)
class Certificate:
    """Sup of the directional derivative over a scan grid plus the support."""

    sup_dir_derivative: float
    argmax_point: np.ndarray
    grid_resolution: int

    @property
    def optimal_within(self) -> float:
        return self.sup_dir_derivative - 1.0


@dataclass(frozen=True)
class FitResult:
    measure: Union[MixingMeasure, SieveDensity]
    loglik_trace: np.ndarray
    final_loglik: float
    iterations: int
    certificate: Certificate
    status: str


def _shifted_kernel(km: KernelMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Row-max-shifted kernel in probability space: entries in (0, 1]."""
    shift = km.log_k.max(axis=1)
    return np.exp(km.log_k - shift[:, None]), shift


def _checked_weights(km: KernelMatrix, w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != km.m:
        raise InvalidArgumentError("weight length does not match the kernel matrix")
    if np.any(w < -1e-12) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and nonnegative")
    w = np.maximum(w, 0.0)
    if w.sum() <= 0:
        raise InvalidArgumentError("weights must not all be zero")
    return w


def em_step(km: KernelMatrix, w) -> np.ndarray:
    """One multiplicative EM update of the mixture weights.

    w'_j = w_j * (1/N) sum_i k_ij / sum_l w_l k_il, computed against the
    row-max-shifted kernel. Zero weights stay exactly zero.
    """
    w = _checked_weights(km, w)
    E, _ = _shifted_kernel(km)
    M = np.maximum(E @ w, 1e-300)
    new_w = w * (E.T @ (1.0 / M)) / km.N
    total = new_w.sum()
    if total <= 0:
        raise InvalidArgumentError("EM step lost all mass; weights were degenerate")
    return new_w / total


def em_fit(
    km: KernelMatrix, w0, opts: Optional[FitOptions] = None
) -> Tuple[np.ndarray, np.ndarray, int, str]:
    """Iterate em_step until the relative log-likelihood gain is below tolerance.

    Returns (weights, loglik_trace, iterations, status); the trace includes
    the starting value and is nondecreasing up to floating-point noise. The
    shifted kernel is computed once, so each iteration is two mat-vecs.
    """
    opts = opts or FitOptions()
    w = _checked_weights(km, w0)
    E, shift = _shifted_kernel(km)
    shift_mean = float(shift.mean())
    M = np.maximum(E @ w, 1e-300)
    current = float(np.mean(np.log(M))) + shift_mean
    trace = [current]
    status = STATUS_ITER_LIMIT
    iterations = 0
    inv_n = 1.0 / km.N
    for _ in range(opts.max_em_iters):
        w = w * (E.T @ (1.0 / M)) * inv_n
        w = w / w.sum()
        M = np.maximum(E @ w, 1e-300)
        value = float(np.mean(np.log(M))) + shift_mean
        iterations += 1
        trace.append(value)
        gain = value - current
        current = value
        if gain <= opts.tol_rel_loglik * max(1.0, abs(value)):
            status = STATUS_CONVERGED
            break
    return w, np.asarray(trace), iterations, status


def directional_derivative(ds, mu: MixingMeasure, s) -> float:
    """First variation of the log-likelihood toward a point mass at s.

    d(s) = (1/N) sum_i k_{x_i}(s) / K(mu)(x_i). At an arg-maximum d <= 1
    everywhere with equality on the support.
    """
    return float(directional_derivatives(ds, mu, np.asarray(s, dtype=float)[None, :])[0])


def directional_derivatives(ds, mu: MixingMeasure, points: np.ndarray) -> np.ndarray:
    """Vectorized directional derivatives at many candidate points."""
    km = build_kernel_matrix(ds, mu)
    log_rows = row_log_mixture(km, mu.weights)
    return _dir_derivs_from_rows(ds, log_rows, points)


def _dir_derivs_from_rows(ds, log_rows: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    out = np.empty(points.shape[0])
    block = 2048
    for start in range(0, points.shape[0], block):
        cols = kernel_columns(ds, points[start : start + block])
        out[start : start + cols.shape[1]] = np.exp(cols - log_rows[:, None]).mean(axis=0)
    return out


def _scan_grid(box: np.ndarray, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _check_box(box, p: int) -> np.ndarray:
    box_arr = np.asarray(box, dtype=float)
    if box_arr.ndim != 2 or box_arr.shape != (p, 2) or np.any(box_arr[:, 0] >= box_arr[:, 1]):
        raise InvalidArgumentError("box must be a (p, 2) table of lo < hi bounds")
    return box_arr


def certify(ds, mu: MixingMeasure, box, grid_resolution: int = 64) -> Certificate:
    """Scan the directional derivative over a uniform grid plus the atoms.

    The fit is optimal on the box (up to the scan resolution) when the
    returned sup is <= 1 + refine_tol. Ties resolve to the lexicographically
    first grid point, so certificates are deterministic.
    """
    box_arr = _check_box(box, mu.p)
    if grid_resolution < 1:
        raise InvalidArgumentError("grid_resolution must be >= 1")
    km = build_kernel_matrix(ds, mu)
    log_rows = row_log_mixture(km, mu.weights)
    candidates = np.concatenate([_scan_grid(box_arr, grid_resolution), np.asarray(mu.atoms)])
    values = _dir_derivs_from_rows(ds, log_rows, candidates)
    best = int(np.argmax(values))
    return Certificate(
        sup_dir_derivative=float(values[best]),
        argmax_point=candidates[best].copy(),
        grid_resolution=grid_resolution,
    )


def _guarded_prune(km: KernelMatrix, ds, atoms, w, eps: float):
    """Prune small weights unless doing so would drop the log-likelihood.

    Pruning a decaying atom raises the objective; the guard only skips the
    rare case of pruning an atom the EM had not finished growing, keeping
    fit traces nondecreasing.
    """
    keep = w >= eps
    if np.all(keep):
        return km, atoms, w, False
    if not np.any(keep):
        raise DegenerateMeasureError("all weights fall below the pruning threshold")
    before = log_likelihood(km, w)
    w_new = w[keep] / w[keep].sum()
    km_new = KernelMatrix(km.log_k[:, keep], atoms=atoms[keep], censored=km.censored)
    after = log_likelihood(km_new, w_new)
    if after < before - _TRACE_SLACK:
        return km, atoms, w, False
    return km_new, atoms[keep], w_new, True


def _insert_atom(km: KernelMatrix, ds, atoms, w, point):
    """Append a support point, shrinking existing weights uniformly.

    The new weight starts at 1/(m+1) and halves until the objective does not
    decrease, which always terminates because the candidate's directional
    derivative exceeds one.
    """
    new_col = kernel_columns(ds, point[None, :])
    log_k = np.concatenate([km.log_k, new_col], axis=1)
    km_new = KernelMatrix(log_k, atoms=np.concatenate([atoms, point[None, :]]), censored=km.censored)
    before = log_likelihood(km, w)
    eps = 1.0 / (w.shape[0] + 1)
    for _ in range(200):
        w_new = np.concatenate([w * (1.0 - eps), [eps]])
        if log_likelihood(km_new, w_new) >= before - _TRACE_SLACK:
            return km_new, w_new
        eps *= 0.5
    return km_new, np.concatenate([w * (1.0 - eps), [eps]])


def _refine(ds, mu: MixingMeasure, box, opts: FitOptions):
    """Certificate-driven atom insertion; returns (measure, detail dict)."""
    box_arr = _check_box(box, mu.p)
    km = build_kernel_matrix(ds, mu)
    atoms = np.array(mu.atoms)
    w = np.array(mu.weights)
    trace_parts: List[np.ndarray] = []
    total_iters = 0
    status = STATUS_CONVERGED
    grid = _scan_grid(box_arr, opts.refine_grid)
    cert = None
    for round_idx in range(opts.max_refinements + 1):
        w, trace, iters, status = em_fit(km, w, opts)
        trace_parts.append(trace)
        total_iters += iters
        km, atoms, w, _ = _guarded_prune(km, ds, atoms, w, opts.prune_eps)
        log_rows = row_log_mixture(km, w)
        candidates = np.concatenate([grid, atoms])
        values = _dir_derivs_from_rows(ds, log_rows, candidates)
        best = int(np.argmax(values))
        cert = Certificate(
            sup_dir_derivative=float(values[best]),
            argmax_point=candidates[best].copy(),
            grid_resolution=opts.refine_grid,
        )
        if cert.sup_dir_derivative <= 1.0 + opts.refine_tol:
            break
        if round_idx == opts.max_refinements:
            status = STATUS_ITER_LIMIT
            break
        duplicate = np.any(np.all(atoms == cert.argmax_point[None, :], axis=1))
        if duplicate:
            # the scan cannot improve on an existing atom; stop honestly
            status = STATUS_ITER_LIMIT
            break
        km, w = _insert_atom(km, ds, atoms, w, cert.argmax_point)
        atoms = np.array(km.atoms)
    measure = MixingMeasure(atoms, w)
    detail = {
        "trace": np.concatenate(trace_parts),
        "iterations": total_iters,
        "status": status,
        "certificate": cert,
    }
    return measure, detail


def refine_support(ds, mu: MixingMeasure, box, opts: Optional[FitOptions] = None) -> MixingMeasure:
    """Add certificate-argmax atoms until the fit certifies (or budget ends)."""
    measure, _ = _refine(ds, mu, box, opts or FitOptions())
    return measure


def fit_npml(
    ds, box, initial_counts, opts: Optional[FitOptions] = None
) -> FitResult:
    """Discrete maximum-likelihood fit: grid init, EM, prune, refine, certify."""
    opts = opts or FitOptions()
    box_arr = _check_box(box, ds.spec.p)
    mu0 = new_uniform_grid_measure(box_arr, initial_counts)
    measure, detail = _refine(ds, mu0, box_arr, opts)
    trace = detail["trace"]
    return FitResult(
        measure=measure,
        loglik_trace=trace,
        final_loglik=float(trace[-1]),
        iterations=detail["iterations"],
        certificate=detail["certificate"],
        status=detail["status"],
    )


def fit_sieve(
    ds,
    basis: SieveBasis,
    opts: Optional[FitOptions] = None,
    quad_points_per_cell: int = 8,
) -> FitResult:
    """Sieve maximum-likelihood fit: EM over the basis coefficients.

    The feasible set is fixed, so there is no support refinement; the
    certificate scans the directional derivative over the basis elements
    themselves (the extreme points of the hull).
    """
    opts = opts or FitOptions()
    km = build_sieve_kernel_matrix(ds, basis, quad_points_per_cell)
    w0 = np.full(basis.m, 1.0 / basis.m)
    w, trace, iterations, status = em_fit(km, w0, opts)
    log_rows = row_log_mixture(km, w)
    values = np.exp(km.log_k - log_rows[:, None]).mean(axis=0)
    best = int(np.argmax(values))
    cert = Certificate(
        sup_dir_derivative=float(values[best]),
        argmax_point=basis.nodes[best].copy(),
        grid_resolution=basis.m,
    )
    return FitResult(
        measure=SieveDensity(basis, w),
        loglik_trace=trace,
        final_loglik=float(trace[-1]),
        iterations=iterations,
        certificate=cert,
        status=status,
    )


def _lattice_size(resolution: int, m: int) -> int:
    return math.comb(resolution + m - 1, m - 1)


def brute_force_oracle(km: KernelMatrix, resolution: int) -> np.ndarray:
    """Exhaustive simplex-lattice search for the weight optimum (desk scale).

    Enumerates all weight vectors with components j/resolution in
    lexicographic order and returns the first maximizer, making ties
    deterministic. Independent of the EM path by construction.
    """
    m = km.m
    if resolution < 1:
        raise InvalidArgumentError("resolution must be >= 1")
    if m > 4 or resolution * m > 10**7:
        raise InvalidArgumentError("oracle budget exceeded: needs m <= 4 and resolution*m <= 1e7")
    if _lattice_size(resolution, m) > 2 * 10**7:
        raise InvalidArgumentError("oracle budget exceeded: simplex lattice too large")
    if m == 1:
        return np.array([1.0])

    best_value = -np.inf
    best_w: Optional[np.ndarray] = None

    def consider(W: np.ndarray):
        nonlocal best_value, best_w
        shift = km.log_k.max(axis=1)
        # (C, N): mixture rows for every lattice point in the chunk
        mix = np.log(
            np.maximum(
                (np.exp(km.log_k - shift[:, None])[None, :, :] * (W / resolution)[:, None, :]).sum(
                    axis=2
                ),
                1e-320,
            )
        ) + shift[None, :]
        values = mix.mean(axis=1)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value = float(values[idx])
            best_w = W[idx] / resolution

    chunk: List[np.ndarray] = []
    count = 0

    def flush():
        nonlocal chunk, count
        if chunk:
            consider(np.concatenate(chunk))
            chunk = []
            count = 0

    def emit(block: np.ndarray):
        nonlocal count
        chunk.append(block)
        count += block.shape[0]
        if count >= 20000:
            flush()

    R = resolution
    if m == 2:
        j1 = np.arange(R + 1)
        emit(np.stack([j1, R - j1], axis=1))
    elif m == 3:
        for a in range(R + 1):
            j2 = np.arange(R - a + 1)
            block = np.stack([np.full_like(j2, a), j2, R - a - j2], axis=1)
            emit(block)
    else:
        for a in range(R + 1):
            for b in range(R - a + 1):
                j3 = np.arange(R - a - b + 1)
                block = np.stack(
                    [np.full_like(j3, a), np.full_like(j3, b), j3, R - a - b - j3], axis=1
                )
                emit(block)
    flush()
    return np.asarray(best_w, dtype=float)


def concavity_probe(km: KernelMatrix, w1, w2, lambdas: Sequence[float]):
    """Concavity defects of the weight log-likelihood along a segment.

    Returns [(lambda, defect)] with defect = L(lam*w1 + (1-lam)*w2)
    - lam*L(w1) - (1-lam)*L(w2); concavity means defects >= 0 up to noise.
    """
    w1 = np.asarray(w1, dtype=float).reshape(-1)
    w2 = np.asarray(w2, dtype=float).reshape(-1)
    l1 = log_likelihood(km, w1)
    l2 = log_likelihood(km, w2)
    out = []
    for lam in lambdas:
        lam = float(lam)
        mixed = log_likelihood(km, lam * w1 + (1.0 - lam) * w2)
        out.append((lam, mixed - (lam * l1 + (1.0 - lam) * l2)))
    return out
