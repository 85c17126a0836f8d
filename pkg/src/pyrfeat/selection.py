"""Feature normalization, dead-column elimination and NCA weighting.

The selection chain is: min-max normalize each column to [0, 1], drop
columns whose normalized sum over all rows is zero (constant columns,
including the all-zero deep blocks produced by a stub store), learn one
non-negative relevance weight per surviving column, keep the top k.

The weight learner is the feature-weighting flavor of neighborhood
component analysis: soft-neighbor probabilities

    p_ij = exp(-sum_r w_r^2 |x_ir - x_jr|) / sum_{l != i} exp(-d_il),

objective  F(w) = sum_i sum_{j in class(i)} p_ij  -  lambda * sum_r w_r^2,

maximized by gradient ascent from w = all ones with a backtracking step
(halve until the objective does not decrease), so the recorded objective
trace is non-decreasing. F is even in every coordinate, so weights are
re-folded to |w| after each step; relevance is their magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NormalizedMatrix:
    """Column-normalized values plus the original index of each kept column."""

    values: np.ndarray  # (n, m) float64 in [0, 1]
    kept: np.ndarray    # (m,) int64, map back to source column indices

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or len(self.kept) != self.values.shape[1]:
            raise ValidationError("normalized matrix and column map must align")


def minmax_normalize(values: np.ndarray) -> NormalizedMatrix:
    """Rescale each column to [0, 1]; constant columns become all zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValidationError("expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(values)):
        raise ValidationError("matrix contains non-finite values")
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    span = hi - lo
    dead = span == 0.0
    safe_span = np.where(dead, 1.0, span)
    out = (values - lo) / safe_span
    out[:, dead] = 0.0
    return NormalizedMatrix(values=out, kept=np.arange(values.shape[1], dtype=np.int64))


def eliminate_zero_sum(matrix: NormalizedMatrix) -> NormalizedMatrix:
    """Drop columns whose total over all rows is exactly zero."""
    sums = matrix.values.sum(axis=0)
    keep = sums != 0.0
    if not keep.any():
        raise ValidationError("every column was eliminated; nothing to select from")
    return NormalizedMatrix(
        values=matrix.values[:, keep], kept=matrix.kept[keep]
    )


@dataclass(frozen=True)
class NcaParams:
    """lam: regularization (None -> 1/n_samples); step: initial ascent step;
    iters: gradient steps; block: row-block size bounding pairwise memory
    (None -> sized so one difference tensor stays near 1 GiB). seed is
    accepted for interface stability; the fit itself draws nothing."""

    lam: float | None = None
    step: float = 1.0
    iters: int = 100
    seed: int = 0
    block: int | None = None


_BLOCK_BUDGET = 1 << 27  # float64 elements per (block, n, d) difference tensor


def _block_rows(n: int, d: int, block: int | None) -> int:
    if block is not None:
        return max(1, block)
    return max(1, min(n, _BLOCK_BUDGET // max(1, n * d)))


@dataclass
class WeightVector:
    """Learned relevance per surviving column plus the objective trace."""

    weights: np.ndarray          # (m,) float64, all >= 0
    objective_trace: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if np.any(self.weights < 0):
            raise ValidationError("relevance weights must be non-negative")


def _pair_terms(
    x: np.ndarray,
    same: np.ndarray,
    w_sq: np.ndarray,
    block: int,
    want_grad: bool,
) -> tuple[float, np.ndarray | None]:
    """Soft-neighbor objective sum_i p_i and, optionally, its gradient
    factor sum_ij p_ij (p_i - same_ij) |x_ir - x_jr| per feature.

    Row blocks keep the (block, n, d) difference tensor bounded; block
    order is fixed, so results are bitwise reproducible at a given size.
    """
    n, d = x.shape
    objective = 0.0
    grad_factor = np.zeros(d) if want_grad else None
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = np.abs(x[start:stop, None, :] - x[None, :, :])  # (b, n, d)
        dist = diff @ w_sq                                     # (b, n)
        rows = np.arange(start, stop)
        dist[rows - start, rows] = np.inf                      # exclude self
        shift = dist.min(axis=1, keepdims=True)
        kernel = np.exp(shift - dist)                          # stable softmax
        denom = kernel.sum(axis=1, keepdims=True)
        p = kernel / denom                                     # (b, n)
        p_in_class = (p * same[start:stop]).sum(axis=1)        # (b,)
        objective += float(p_in_class.sum())
        if want_grad:
            q = p * (p_in_class[:, None] - same[start:stop])   # (b, n)
            grad_factor += np.einsum("bn,bnd->d", q, diff)
    return objective, grad_factor


def nca_fit(
    values: np.ndarray, labels: np.ndarray, params: NcaParams | None = None
) -> WeightVector:
    """Learn per-feature relevance weights by maximizing soft within-class
    neighbor probability. Deterministic: fixed start (all ones), fixed
    block order, no sampling."""
    params = params or NcaParams()
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ValidationError("values and labels must align")
    n, d = x.shape
    if n < 2:
        raise ValidationError("need at least 2 samples")
    if len(np.unique(y)) < 2:
        raise ValidationError("need at least 2 classes")
    lam = params.lam if params.lam is not None else 1.0 / n
    same = (y[:, None] == y[None, :]).astype(np.float64)
    np.fill_diagonal(same, 0.0)
    block = _block_rows(n, d, params.block)

    w = np.ones(d)
    objective, grad_factor = _pair_terms(x, same, w * w, block, True)
    objective -= lam * float(w @ w)
    trace = [objective]
    step = params.step
    for _ in range(params.iters):
        grad = 2.0 * w * grad_factor - 2.0 * lam * w
        improved = False
        for _ in range(30):
            cand = np.abs(w + step * grad)
            cand_obj, cand_factor = _pair_terms(x, same, cand * cand, block, True)
            cand_obj -= lam * float(cand @ cand)
            if cand_obj >= objective:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        w, objective, grad_factor = cand, cand_obj, cand_factor
        trace.append(objective)
        step *= 1.2
    return WeightVector(weights=w, objective_trace=trace)


def nca_objective(
    values: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    lam: float,
    block: int | None = None,
) -> float:
    """The objective at a fixed weight vector (used by gradient checks)."""
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    same = (y[:, None] == y[None, :]).astype(np.float64)
    np.fill_diagonal(same, 0.0)
    w = np.asarray(weights, dtype=np.float64)
    obj, _ = _pair_terms(x, same, w * w, _block_rows(*x.shape, block), False)
    return obj - lam * float(w @ w)


def nca_gradient(
    values: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    lam: float,
    block: int | None = None,
) -> np.ndarray:
    """Analytic objective gradient at a fixed weight vector."""
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    same = (y[:, None] == y[None, :]).astype(np.float64)
    np.fill_diagonal(same, 0.0)
    w = np.asarray(weights, dtype=np.float64)
    _, factor = _pair_terms(x, same, w * w, _block_rows(*x.shape, block), True)
    return 2.0 * w * factor - 2.0 * lam * w


def select_top_k(weights: WeightVector | np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest weights, ties broken by ascending index."""
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights)
    if not 1 <= k <= len(w):
        raise ValidationError(f"k must be in 1..{len(w)}, got {k}")
    order = np.lexsort((np.arange(len(w)), -w))
    return np.sort(order[:k])
