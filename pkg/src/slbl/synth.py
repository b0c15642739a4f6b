"""Synthetic feature generation by class-wise statistic matching.

A batch of feature vectors for one class is optimized jointly: a
cross-entropy term keeps the batch classifiable under globally normalized
inputs, while a statistic-matching term pulls the batch mean and variance
toward that class's own targets. Optimizing the batch as a group (instead of
each sample alone against global statistics) is what spreads the members and
raises within-class diversity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassStats",
    "SynthConfig",
    "LinearTeacher",
    "OptimizationError",
    "compute_class_stats",
    "synthesize_class_batch",
    "synthesize_independent",
    "class_batch_loss_grad",
    "write_feature_file",
    "read_feature_file",
]

FEATURE_MAGIC = b"SFMX"


class OptimizationError(RuntimeError):
    """Raised when synthesis diverges; carries the failing iteration."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class ClassStats:
    """Per-class and global feature statistics (population variance)."""

    mean: np.ndarray  # (C, d)
    var: np.ndarray  # (C, d)
    global_mean: np.ndarray  # (d,)
    global_var: np.ndarray  # (d,)
    epsilon: float = 1e-5

    def __post_init__(self):
        if np.any(self.var < 0) or np.any(self.global_var < 0):
            raise ValueError("variances must be non-negative")
        if self.mean.shape != self.var.shape or self.mean.shape[1] != self.global_mean.shape[0]:
            raise ValueError("inconsistent feature dimensions in statistics")

    @property
    def num_classes(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SynthConfig:
    alpha: float = 0.01  # statistic-matching weight
    iterations: int = 300
    step_size: float = 0.1
    batch_size: int = 10  # members per class batch
    seed: int = 0
    optimizer: str = "gd"  # "gd" (plain fixed-step) or "adam"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch variance needs 2 samples)")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True, eq=False)
class LinearTeacher:
    """Linear softmax classifier: logits = X @ weights.T + bias."""

    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float64))
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (C, d) with a matching (C,) bias")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("teacher parameters must be finite")

    def logits(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights.T + self.bias


def compute_class_stats(features, labels, num_classes: int | None = None) -> ClassStats:
    """Per-class and global mean/population-variance over feature dimensions.

    Every class id in [0, num_classes) must be present with at least one
    sample; a single sample yields variance zero.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be (N, d) with one label per row")
    C = int(y.max()) + 1 if num_classes is None else num_classes
    mean = np.empty((C, X.shape[1]))
    var = np.empty((C, X.shape[1]))
    for c in range(C):
        rows = X[y == c]
        if rows.shape[0] == 0:
            raise ValueError(f"class {c} has no samples")
        mean[c] = rows.mean(axis=0)
        var[c] = rows.var(axis=0)
    return ClassStats(mean=mean, var=var, global_mean=X.mean(axis=0), global_var=X.var(axis=0))


def _loss_grad(
    teacher: LinearTeacher,
    stats: ClassStats,
    class_id: int,
    X: np.ndarray,
    alpha: float,
    target_mean: np.ndarray,
    target_var: np.ndarray,
) -> tuple[float, np.ndarray]:
    n = X.shape[0]
    scale = np.sqrt(stats.global_var + stats.epsilon)
    Z = (X - stats.global_mean) / scale
    logits = teacher.logits(Z)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    ce = float(-np.mean(shifted[:, class_id] - np.log(e.sum(axis=1))))
    d_logits = probs.copy()
    d_logits[:, class_id] -= 1.0
    grad = (d_logits / n) @ teacher.weights / scale

    m = X.mean(axis=0)
    v = X.var(axis=0)
    r_mean = m - target_mean
    r_var = v - target_var
    n_mean = float(np.linalg.norm(r_mean))
    n_var = float(np.linalg.norm(r_var))
    # Unsquared L2 norms: the gradient direction is the unit residual; at an
    # exactly matched statistic the subgradient 0 is used.
    if n_mean > 0:
        grad += alpha * (r_mean / n_mean) / n
    if n_var > 0:
        grad += alpha * (r_var / n_var) * 2.0 * (X - m) / n
    return ce + alpha * (n_mean + n_var), grad


def class_batch_loss_grad(
    teacher: LinearTeacher, stats: ClassStats, class_id: int, X, alpha: float
) -> tuple[float, np.ndarray]:
    """Joint loss and its analytic gradient for a class batch.

    Loss = CE(teacher on globally normalized X, class_id)
         + alpha * (||mean(X) - class_mean||_2 + ||var(X) - class_var||_2).
    """
    X = np.asarray(X, dtype=np.float64)
    if not 0 <= class_id < stats.num_classes:
        raise ValueError(f"class_id {class_id} out of range")
    return _loss_grad(
        teacher, stats, class_id, X, alpha, stats.mean[class_id], stats.var[class_id]
    )


def _descend(loss_grad, X0: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    X = X0.copy()
    if cfg.optimizer == "adam":
        m = np.zeros_like(X)
        v = np.zeros_like(X)
    for it in range(cfg.iterations):
        loss, grad = loss_grad(X)
        if not np.isfinite(loss):
            raise OptimizationError(it, f"non-finite loss {loss!r}")
        if cfg.optimizer == "adam":
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad**2
            m_hat = m / (1 - 0.9 ** (it + 1))
            v_hat = v / (1 - 0.999 ** (it + 1))
            X -= cfg.step_size * m_hat / (np.sqrt(v_hat) + 1e-8)
        else:
            X -= cfg.step_size * grad
    return X


def _seeded_init(stats: ClassStats, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    spread = np.sqrt(stats.global_var + stats.epsilon)
    return stats.global_mean + spread * rng.standard_normal((n, stats.global_mean.size))


def synthesize_class_batch(
    teacher: LinearTeacher, stats: ClassStats, class_id: int, cfg: SynthConfig
) -> np.ndarray:
    """Optimize one batch of feature vectors jointly against class targets.

    All members share the class id and the class statistic target; gradient
    descent runs from a seeded random initialization and the final batch is
    returned. Deterministic for a fixed config.
    """
    X0 = _seeded_init(stats, cfg.batch_size, cfg.seed)
    return _descend(
        lambda X: class_batch_loss_grad(teacher, stats, class_id, X, cfg.alpha), X0, cfg
    )


def write_feature_file(path, features, labels, num_classes: int) -> None:
    """Write a labeled feature matrix to the simple binary tensor format.

    Layout: magic "SFMX", then dim, row count and class count as u32,
    followed by the float32 rows and the uint32 labels (little-endian).
    """
    X = np.ascontiguousarray(features, dtype="<f4")
    y = np.ascontiguousarray(labels, dtype="<u4")
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("features must be (N, d) with one label per row")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", X.shape[1], X.shape[0], num_classes))
        fh.write(X.tobytes())
        fh.write(y.tobytes())


def read_feature_file(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read a feature matrix written by write_feature_file.

    Returns (features, labels, num_classes); raises ValueError on bad magic
    or a truncated file.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file (bad magic)")
    if len(data) < 16:
        raise ValueError(f"{path}: truncated header")
    d, n, num_classes = struct.unpack("<III", data[4:16])
    need = 16 + n * d * 4 + n * 4
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    X = np.frombuffer(data, dtype="<f4", count=n * d, offset=16).reshape(n, d)
    y = np.frombuffer(data, dtype="<u4", count=n, offset=16 + n * d * 4)
    return X.astype(np.float64), y.astype(np.int64), num_classes


def synthesize_independent(
    teacher: LinearTeacher, stats: ClassStats, class_id: int, cfg: SynthConfig
) -> np.ndarray:
    """Baseline: optimize each member alone against the global statistics.

    Each sample is a batch of one, so the variance of its "batch" is zero and
    only the pull toward the global mean (plus cross-entropy) shapes it. Used
    as the contrast case for the class-wise procedure.
    """
    if not 0 <= class_id < stats.num_classes:
        raise ValueError(f"class_id {class_id} out of range")
    X0 = _seeded_init(stats, cfg.batch_size, cfg.seed)
    rows = []
    for j in range(cfg.batch_size):
        row = _descend(
            lambda X: _loss_grad(
                teacher, stats, class_id, X, cfg.alpha, stats.global_mean, stats.global_var
            ),
            X0[j : j + 1],
            cfg,
        )
        rows.append(row[0])
    return np.asarray(rows)
