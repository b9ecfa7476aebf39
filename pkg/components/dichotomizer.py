# components/dichotomizer.py
"""
Writer-independent dichotomizer: soft-margin SVM with an RBF kernel.

The dual is solved with SMO using second-order working-set selection (the LIBSVM rule).
Trained models score dissimilarity vectors by their signed distance to the separating
hyperplane, normalized by the kernel-space weight norm.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from core.errors import ConvergenceError, DatasetError, DimensionError, TrainingError
from core.rng import STREAM_SOLVER, derive_rng
from core.storage import read_json, write_json
from data.models import FeatureMask, FeatureVector, KernelParams, PrototypeSet, TrainedModel, apply_mask

logger = logging.getLogger(__name__)

TAU = 1e-12
MIN_ITERATIONS = 10_000
ITERATIONS_PER_SAMPLE = 100


def rbf_kernel(a, b, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2)"""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"Kernel arguments differ in shape: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.exp(-gamma * np.dot(diff, diff)))


def _kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]) - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lexicographic order of the vectors, then the label; identical inputs in any order sort the same."""
    keys = np.vstack([y[None, :], X[:, ::-1].T])
    return np.lexsort(keys)


def _solve(K: np.ndarray, y: np.ndarray, c: float, tol: float, max_iter: int) -> Tuple[np.ndarray, float, int, float]:
    """
    SMO over min 1/2 a'Qa - e'a, 0 <= a <= c, y'a = 0 with Q = yy' * K.
    Returns (alpha, rho, iterations, final gap).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    positive = y > 0

    iterations = 0
    gap = math.inf
    while iterations < max_iter:
        below_c = alpha < c
        above_0 = alpha > 0
        up = (below_c & positive) | (above_0 & ~positive)
        low = (below_c & ~positive) | (above_0 & positive)
        if not up.any() or not low.any():
            gap = 0.0
            break

        minus_yG = -y * G
        up_scores = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        M = float(np.min(np.where(low, minus_yG, np.inf)))
        gap = m - M
        if gap < tol:
            break

        # Second-order choice of j among violating low candidates
        b = m - minus_yG
        candidates = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        gains = np.where(candidates, -(b * b) / a, np.inf)
        j = int(np.argmin(gains))

        # Step along alpha_i += y_i t, alpha_j -= y_j t
        t_i = (c - alpha[i]) if y[i] > 0 else alpha[i]
        t_j = alpha[j] if y[j] > 0 else (c - alpha[j])
        t = min(b[j] / a[j], t_i, t_j)

        if t == t_i:
            alpha[i] = c if y[i] > 0 else 0.0
        else:
            alpha[i] += y[i] * t
        if t == t_j:
            alpha[j] = 0.0 if y[j] > 0 else c
        else:
            alpha[j] -= y[j] * t

        G += t * y * (K[:, i] - K[:, j])
        iterations += 1
    else:
        raise ConvergenceError(
            f"SMO stopped after {iterations} iterations with KKT gap {gap:.3g} (tolerance {tol:g})",
            worst_violation=float(gap),
        )

    # Threshold: average over free vectors, else midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        at_upper = alpha >= c
        ub_mask = (at_upper & ~positive) | (~at_upper & positive)
        lb_mask = (at_upper & positive) | (~at_upper & ~positive)
        ub = float(np.min(yG[ub_mask])) if ub_mask.any() else math.inf
        lb = float(np.max(yG[lb_mask])) if lb_mask.any() else -math.inf
        rho = (ub + lb) / 2.0 if math.isfinite(ub) and math.isfinite(lb) else (ub if math.isfinite(ub) else lb)

    return alpha, rho, iterations, float(gap)


def train(samples: PrototypeSet, params: KernelParams, mask: FeatureMask, seed: int,
          tol: float = 1e-3, max_iter: Optional[int] = None) -> TrainedModel:
    """
    Train the dichotomizer on the masked prototypes.

    Raises TrainingError when a class is missing and ConvergenceError when SMO runs out of
    iterations or the solution has no margin (kernel matrix numerically constant).
    """
    if len(samples) == 0:
        raise TrainingError("Cannot train on an empty prototype set")
    X = apply_mask(samples.vectors, mask)
    y = samples.labels
    if np.all(y > 0) or np.all(y < 0):
        raise TrainingError("Training needs both within and between samples")

    n = y.shape[0]
    order = _canonical_order(X, y)
    order = order[derive_rng(seed, STREAM_SOLVER).permutation(n)]
    X, y = X[order], y[order]

    K = _kernel_matrix(X, X, params.gamma)
    if max_iter is None:
        max_iter = max(ITERATIONS_PER_SAMPLE * n, MIN_ITERATIONS)
    alpha, rho, iterations, gap = _solve(K, y, params.c, tol, max_iter)

    sv = alpha > 0
    coef = alpha[sv] * y[sv]
    w_sq = float(coef @ K[np.ix_(sv, sv)] @ coef)
    if w_sq <= 1e-12:
        raise ConvergenceError(f"Solution has no margin (||w||^2 = {w_sq:.3g}); kernel is degenerate", gap)

    logger.debug(f"[SVM] n={n} d={mask.count} sv={int(sv.sum())} iterations={iterations} gap={gap:.2e}")
    return TrainedModel(
        support_vectors=X[sv],
        dual_coefficients=coef,
        bias=-rho,
        params=params,
        mask=mask,
        weight_norm=math.sqrt(w_sq),
        support_indices=order[sv],
        seed=seed,
        iterations=iterations,
        max_violation=gap,
    )


def _masked_rows(model: TrainedModel, U) -> Tuple[np.ndarray, Tuple[int, ...]]:
    values = np.asarray(U, dtype=float)
    if values.ndim == 0 or values.shape[-1] != model.mask.dimension:
        raise DimensionError(
            f"Model was trained in dimension {model.mask.dimension}, got input of shape {values.shape}"
        )
    masked = apply_mask(values, model.mask)
    return masked.reshape(-1, model.mask.count), values.shape[:-1]


def decision_function(model: TrainedModel, U) -> np.ndarray:
    """Un-normalized SVM output sum(coef * K) + bias for full-length vectors (any leading shape)."""
    rows, lead = _masked_rows(model, U)
    K = _kernel_matrix(rows, model.support_vectors, model.params.gamma)
    return (K @ model.dual_coefficients + model.bias).reshape(lead)


def signed_distances(model: TrainedModel, U) -> np.ndarray:
    """Signed distances to the hyperplane; positive means the within-writer side."""
    return decision_function(model, U) / model.weight_norm


def signed_distance(model: TrainedModel, u) -> float:
    values = u.values if isinstance(u, FeatureVector) else np.asarray(u, dtype=float)
    if values.ndim != 1:
        raise DimensionError("signed_distance scores a single vector")
    return float(signed_distances(model, values))


def kkt_violations(model: TrainedModel, samples: PrototypeSet) -> np.ndarray:
    """Per-sample KKT residual of the trained model on its own training prototypes."""
    alpha = np.zeros(len(samples))
    alpha[model.support_indices] = np.abs(model.dual_coefficients)
    y = samples.labels
    margin = y * decision_function(model, samples.vectors)
    c = model.params.c

    at_zero = alpha <= 0
    at_c = alpha >= c
    free = ~at_zero & ~at_c
    violations = np.zeros_like(margin)
    violations[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    violations[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    violations[free] = np.abs(margin[free] - 1.0)
    return violations


# ===== SERIALIZATION =====

def save_model(path: Path, model: TrainedModel) -> Path:
    return write_json(path, {
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefficients": model.dual_coefficients.tolist(),
        "bias": model.bias,
        "gamma": model.params.gamma,
        "c": model.params.c,
        "dimension": model.mask.dimension,
        "mask": model.mask.to_hex(),
        "weight_norm": model.weight_norm,
        "support_indices": model.support_indices.tolist(),
        "seed": model.seed,
        "iterations": model.iterations,
        "max_violation": model.max_violation,
    })


def load_model(path: Path) -> TrainedModel:
    raw = read_json(path)
    try:
        mask = FeatureMask.from_hex(raw["mask"], raw["dimension"])
        return TrainedModel(
            support_vectors=np.asarray(raw["support_vectors"], dtype=float).reshape(-1, mask.count),
            dual_coefficients=np.asarray(raw["dual_coefficients"], dtype=float),
            bias=raw["bias"],
            params=KernelParams(gamma=raw["gamma"], c=raw["c"]),
            mask=mask,
            weight_norm=raw["weight_norm"],
            support_indices=np.asarray(raw["support_indices"], dtype=np.int64),
            seed=raw.get("seed", 0),
            iterations=raw.get("iterations", 0),
            max_violation=raw.get("max_violation", 0.0),
        )
    except (KeyError, ValueError) as e:
        raise DatasetError(f"{path} is not a saved model: {e}")
