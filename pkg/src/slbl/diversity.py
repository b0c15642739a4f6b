"""Diversity diagnostics for feature sets: within-class cosine similarity and
maximum mean discrepancy (MMD) between two samples.

Lower within-class cosine means more varied members per class; lower MMD
against a reference set means the compared set covers the reference
distribution more faithfully.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["DiversityReport", "within_class_cosine", "mmd_squared"]


@dataclass(frozen=True, eq=False)
class DiversityReport:
    """Per-class cosine statistics plus an optional MMD value.

    per_class_cosine_mean/std are aligned with class_ids; overall_mean is the
    mean of per-class means and overall_std the spread across classes.
    """

    class_ids: np.ndarray
    per_class_cosine_mean: np.ndarray
    per_class_cosine_std: np.ndarray
    overall_mean: float
    overall_std: float
    mmd_squared: float | None = None


def within_class_cosine(features, labels) -> DiversityReport:
    """Mean and spread of pairwise cosine similarity inside each class.

    All unordered pairs within a class contribute; per-class std is the
    population std over pair values. Classes with fewer than two samples are
    skipped with a warning. Rows must have nonzero norm.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be (N, d) with one label per row")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm feature rows cannot be used for cosine similarity")
    unit = X / norms[:, None]

    class_ids, means, stds = [], [], []
    for c in np.unique(y):
        rows = unit[y == c]
        if rows.shape[0] < 2:
            warnings.warn(f"class {c} has fewer than 2 samples; skipped", stacklevel=2)
            continue
        gram = rows @ rows.T
        iu = np.triu_indices(rows.shape[0], k=1)
        pair_cos = gram[iu]
        class_ids.append(c)
        means.append(pair_cos.mean())
        stds.append(pair_cos.std())
    if not class_ids:
        raise ValueError("no class has at least 2 samples")
    means = np.asarray(means)
    stds = np.asarray(stds)
    return DiversityReport(
        class_ids=np.asarray(class_ids),
        per_class_cosine_mean=means,
        per_class_cosine_std=stds,
        overall_mean=float(means.mean()),
        overall_std=float(means.std()),
    )


def _sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # squared Euclidean distances between rows, clipped against tiny negatives
    d2 = (X**2).sum(1)[:, None] + (Y**2).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(d2, 0.0)


def median_bandwidth(X: np.ndarray, Y: np.ndarray) -> float:
    """Median pairwise distance over the pooled rows (distinct pairs only)."""
    Z = np.concatenate([X, Y], axis=0)
    d2 = _sq_dists(Z, Z)
    iu = np.triu_indices(Z.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu]))) if iu[0].size else 0.0
    return med if med > 0 else 1.0


def mmd_squared(X, Y, bandwidth: float | str = "auto") -> float:
    """Squared MMD between two samples under a Gaussian kernel.

    Uses the biased all-pairs estimator K_XX + K_YY - 2 K_XY with 1/(|X||Y|)
    normalization (self-pairs included) and kernel
    exp(-||u - v||^2 / (2 sigma^2)). bandwidth="auto" picks sigma by the
    median pairwise distance over the pooled rows. Tiny negative results from
    rounding are clipped to 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"feature dims differ: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[0] < 1 or Y.shape[0] < 1:
        raise ValueError("both samples must be non-empty")
    sigma = median_bandwidth(X, Y) if isinstance(bandwidth, str) else float(bandwidth)
    if sigma <= 0:
        raise ValueError("bandwidth must be positive")
    two_s2 = 2.0 * sigma * sigma
    k_xx = np.exp(-_sq_dists(X, X) / two_s2).mean()
    k_yy = np.exp(-_sq_dists(Y, Y) / two_s2).mean()
    k_xy = np.exp(-_sq_dists(X, Y) / two_s2).mean()
    return max(float(k_xx + k_yy - 2.0 * k_xy), 0.0)
