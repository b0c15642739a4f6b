"""Teacher temperature annealing and student temperature calibration.

The teacher side anneals a softmax temperature on a step schedule so that the
same stored logits yield different supervision as training progresses. The
student side grid-searches a temperature in (0, 1] that minimizes the batch
KL divergence against the (possibly quantized, hence sharper) teacher.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .logit_core import SparseProbs, kl_div, softmax_t

__all__ = [
    "TemperatureSchedule",
    "CalibrationResult",
    "default_grid",
    "teacher_temperature",
    "calibrate_student_temperature",
    "kd_loss",
]


@dataclass(frozen=True)
class TemperatureSchedule:
    """Step-decay teacher temperature: multiply by decay_factor every
    step_epochs epochs, clipped below at floor_tau."""

    initial_tau: float = 20.0
    decay_factor: float = 0.7
    step_epochs: int = 30
    floor_tau: float = 2.0

    def __post_init__(self):
        if not self.initial_tau >= self.floor_tau > 0:
            raise ValueError("need initial_tau >= floor_tau > 0")
        if not 0 < self.decay_factor < 1:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.step_epochs < 1:
            raise ValueError("step_epochs must be >= 1")


def teacher_temperature(sched: TemperatureSchedule, epoch: int) -> float:
    """Teacher temperature at a given epoch (non-increasing, floor-clipped)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(sched.floor_tau, sched.initial_tau * sched.decay_factor ** (epoch // sched.step_epochs))


def default_grid() -> np.ndarray:
    """The student temperature search grid {0.01, 0.02, ..., 1.00}."""
    return np.linspace(0.01, 1.0, 100)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid values must be strictly increasing")
    if grid[0] <= 0 or grid[-1] > 1:
        raise ValueError("grid values must lie in (0, 1]")
    return grid


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Outcome of the student temperature grid search.

    tau_star is the smallest grid value attaining the minimum mean KL.
    """

    tau_star: float
    min_kl: float
    per_tau_kl: np.ndarray


def calibrate_student_temperature(
    teacher: Sequence[SparseProbs],
    student_logits: np.ndarray,
    grid=None,
) -> CalibrationResult:
    """Grid-search the student temperature against a batch of teacher targets.

    For every candidate temperature the batch-mean KL(teacher || student) is
    evaluated with the student distribution recomputed at that temperature;
    the smallest temperature attaining the minimum wins. Deterministic.
    """
    grid = default_grid() if grid is None else _check_grid(grid)
    student_logits = np.asarray(student_logits, dtype=np.float64)
    if len(teacher) == 0:
        raise ValueError("calibration batch must contain at least one record")
    if student_logits.ndim != 2 or student_logits.shape[0] != len(teacher):
        raise ValueError("student_logits must be (batch, classes) matching the teacher batch")

    # KL evaluated through log-softmax: at grid temperatures as small as 0.01
    # the student probabilities can underflow to exact zeros, which would turn
    # the divergence into inf/nan; the log-space form stays finite and simply
    # scores such temperatures as very bad.
    C = student_logits.shape[1]
    P = np.zeros((len(teacher), C))
    for i, p in enumerate(teacher):
        if p.num_classes != C:
            raise ValueError(f"teacher record {i} has {p.num_classes} classes, student has {C}")
        P[i, p.support] = p.probs
    plogp = np.sum(np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0), axis=1)
    per_tau = np.empty(grid.size)
    for t, tau in enumerate(grid):
        scaled = student_logits / tau
        scaled = scaled - scaled.max(axis=1, keepdims=True)
        log_q = scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))
        per_tau[t] = np.mean(plogp - np.sum(P * log_q, axis=1))
    best = int(np.argmin(per_tau))  # first occurrence = smallest tau on ties
    return CalibrationResult(tau_star=float(grid[best]), min_kl=float(per_tau[best]), per_tau_kl=per_tau)


def kd_loss(
    teacher: SparseProbs,
    student_logits: np.ndarray,
    tau_hat: float,
    rescale_tau_sq: bool = False,
) -> tuple[float, np.ndarray]:
    """Distillation loss and its exact gradient w.r.t. the student logits.

    loss = KL(teacher || softmax_t(student_logits, tau_hat)); the gradient is
    (student_prob_i - teacher_prob_i) / tau_hat with teacher probability zero
    off the support. rescale_tau_sq multiplies both by tau_hat**2 (the
    classical magnitude correction); it is off by default.
    """
    if not tau_hat > 0:
        raise ValueError("tau_hat must be positive")
    q_hat = softmax_t(student_logits, tau_hat)
    loss = kl_div(teacher, q_hat)
    grad = (q_hat - teacher.to_dense()) / tau_hat
    if rescale_tau_sq:
        loss *= tau_hat**2
        grad *= tau_hat**2
    return loss, grad
