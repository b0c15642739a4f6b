"""Numeric kernels for temperature softmax, top-k logit quantization, and
KL-divergence alignment between sparse teacher and dense student distributions.

All kernels compute in float64 regardless of the 32-bit widths used on disk,
and all are pure functions safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizedLogits",
    "SparseProbs",
    "softmax_t",
    "topk_quantize",
    "dequantize",
    "quantized_probs",
    "kl_div",
    "optimal_logit_gap",
    "temperature_upper_bound",
]


def _as_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError(f"logit vector must be 1-D with at least 2 classes, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logit vector contains non-finite entries")
    return z


@dataclass(frozen=True, eq=False)
class QuantizedLogits:
    """Top-k compressed logits: k class indices plus their pre-softmax values.

    Entries are ordered by (value descending, index ascending); indices are
    unique and within [0, num_classes).
    """

    num_classes: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if idx.ndim != 1 or val.shape != idx.shape:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if not 1 <= idx.size <= self.num_classes:
            raise ValueError(f"k={idx.size} out of range for num_classes={self.num_classes}")
        if np.unique(idx).size != idx.size:
            raise ValueError("indices must be unique")
        if idx.min() < 0 or idx.max() >= self.num_classes:
            raise ValueError("indices out of range")
        if not np.all(np.isfinite(val)):
            raise ValueError("values contain non-finite entries")
        if np.any(np.diff(val) > 0):
            raise ValueError("values must be sorted non-increasing")
        # Equal-value runs must keep ascending class indices.
        ties = np.diff(val) == 0
        if np.any(ties & (np.diff(idx) < 0)):
            raise ValueError("tied values must be ordered by ascending index")

    @property
    def k(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True, eq=False)
class SparseProbs:
    """A probability distribution carried on an explicit support set.

    Probabilities are strictly positive on the support and sum to one; every
    class off the support has probability exactly zero.
    """

    num_classes: int
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64)
        pr = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", pr)
        if sup.ndim != 1 or pr.shape != sup.shape or sup.size < 1:
            raise ValueError("support and probs must be 1-D arrays of equal nonzero length")
        if np.unique(sup).size != sup.size or sup.min() < 0 or sup.max() >= self.num_classes:
            raise ValueError("support must be unique class ids within range")
        if not np.all(pr > 0):
            raise ValueError("probabilities must be strictly positive on the support")
        if abs(pr.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {pr.sum()!r}, expected 1 within 1e-9")

    @classmethod
    def from_dense(cls, probs) -> "SparseProbs":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(num_classes=probs.size, support=np.arange(probs.size), probs=probs)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.num_classes)
        dense[self.support] = self.probs
        return dense


def softmax_t(z, tau: float) -> np.ndarray:
    """Temperature softmax: probs_i = exp(z_i / tau) / sum_j exp(z_j / tau).

    Stabilized by max-subtraction so that |z| up to ~1e3 cannot overflow.
    """
    z = _as_logits(z)
    if not (np.isfinite(tau) and tau > 0):
        raise ValueError(f"temperature must be a positive finite real, got {tau!r}")
    scaled = z / tau
    scaled -= scaled.max()
    e = np.exp(scaled)
    return e / e.sum()


def topk_quantize(z, k: int) -> QuantizedLogits:
    """Keep the k largest logits with their class indices.

    Ties break toward the lower class index so the result is platform
    independent. Output ordering is (value descending, index ascending).
    """
    z = _as_logits(z)
    if not 1 <= k <= z.size:
        raise ValueError(f"k={k} out of range for {z.size} classes")
    # Stable sort on (-value, index): equal values keep ascending index order.
    order = np.argsort(-z, kind="stable")[:k]
    return QuantizedLogits(num_classes=z.size, indices=order, values=z[order])


def dequantize(q: QuantizedLogits) -> np.ndarray:
    """Expand compressed logits to full length, with exact 0.0 off the support.

    This reconstructs the storage layout only. The zero fill is meaningless as
    a logit (it would grant e^0 mass to dropped classes), so the result must
    not be passed through softmax_t to recover the teacher distribution; use
    quantized_probs for that.
    """
    full = np.zeros(q.num_classes)
    full[q.indices] = q.values
    return full


def quantized_probs(q: QuantizedLogits, tau: float) -> SparseProbs:
    """Masked temperature softmax over the stored values only.

    Probability is re-normalized within the retained classes; every dropped
    class gets probability exactly zero. The result is never softer than the
    softmax of the original unquantized vector.
    """
    if not (np.isfinite(tau) and tau > 0):
        raise ValueError(f"temperature must be a positive finite real, got {tau!r}")
    scaled = q.values / tau
    scaled = scaled - scaled.max()
    e = np.exp(scaled)
    return SparseProbs(num_classes=q.num_classes, support=q.indices, probs=e / e.sum())


def kl_div(p: SparseProbs, q) -> float:
    """KL(p || q) summed over p's support, with the 0 log 0 = 0 convention.

    q is a dense, strictly positive distribution over the same classes.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size != p.num_classes:
        raise ValueError(f"q has {q.size} classes, p has {p.num_classes}")
    if not np.all(q > 0):
        raise ValueError("q must be strictly positive")
    qs = q[p.support]
    # identical distributions can round to a tiny negative; clamp to the
    # mathematical floor
    return max(float(np.sum(p.probs * (np.log(p.probs) - np.log(qs)))), 0.0)


def optimal_logit_gap(p_i: float, p_j: float, tau_hat: float) -> float:
    """Student logit gap that reproduces a teacher probability ratio.

    A student at temperature tau_hat matches the ratio p_i / p_j exactly when
    its logits differ by tau_hat * log(p_i / p_j).
    """
    if not (p_i > 0 and p_j > 0 and tau_hat > 0):
        raise ValueError("p_i, p_j and tau_hat must all be positive")
    return float(tau_hat * np.log(p_i / p_j))


def temperature_upper_bound(delta_z_max: float, r: float) -> float:
    """Largest student temperature able to match probability ratio r.

    With student logit gaps capped at delta_z_max, ratios up to r are
    reachable only for temperatures at or below delta_z_max / log(r).
    """
    if not delta_z_max > 0:
        raise ValueError("delta_z_max must be positive")
    if not r > 1:
        raise ValueError("ratio r must exceed 1 for the bound to be finite")
    return float(delta_z_max / np.log(r))
