"""Desk-scale distillation harness over compressed soft-label stores.

Generates a Gaussian-blob classification task, relabels a small distilled set
with a fitted linear teacher under stored augmentation parameters, then
trains a linear student purely from the (pruned, optionally quantized) store.
Teacher-side temperature annealing and student-side temperature calibration
plug in exactly as they would in a full-scale pipeline, so their directional
effects and all storage accounting can be exercised end to end in seconds.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .calibration import (
    TemperatureSchedule,
    calibrate_student_temperature,
    teacher_temperature,
)
from .label_store import (
    BatchRecord,
    CompressionReport,
    LabelStore,
    PrunePlan,
    compression_report,
    encode_store,
    prune_plan,
    storage_breakdown,
)
from .logit_core import SparseProbs
from .synth import LinearTeacher, SynthConfig, compute_class_stats, synthesize_class_batch

__all__ = [
    "TaskSpec",
    "Task",
    "TrainConfig",
    "TrainResult",
    "ParetoEntry",
    "batches_per_epoch_for",
    "generate_task",
    "fit_multinomial_logistic",
    "apply_augmentation",
    "relabel",
    "train_student",
    "pareto_sweep",
]


@dataclass(frozen=True)
class TaskSpec:
    """Synthetic classification task: Gaussian blobs with unit noise around
    class centers placed at ``separation`` from the origin."""

    num_classes: int = 20
    dim: int = 32
    train_size: int = 2000
    test_size: int = 2000
    separation: float = 4.0
    ipc: int = 5  # distilled points per class
    distill: str = "noise"  # "noise" = class mean + unit noise, "synth" = statistic matching
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.distill not in ("noise", "synth"):
            raise ValueError(f"unknown distill mode {self.distill!r}")


@dataclass(eq=False)
class Task:
    spec: TaskSpec
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    distilled_X: np.ndarray
    distilled_y: np.ndarray
    teacher: LinearTeacher
    degenerate: bool  # separation 0 with multiple classes: labels carry no signal


@dataclass(frozen=True)
class TrainConfig:
    """Student training configuration over a label store."""

    epochs: int = 300
    batch_size: int = 16
    learning_rate: float = 0.02
    pruning_rate: float = 0.0
    top_k: int = 0  # 0 = full labels
    dkr: bool = False  # annealed teacher temperature on reuse
    ca: bool = False  # per-epoch student temperature calibration
    fixed_tau: float = 2.0  # teacher temperature when dkr is off (naive reuse)
    schedule: TemperatureSchedule = TemperatureSchedule()
    grid: tuple[float, ...] | None = None  # student temperature grid, None = default
    label_smoothing: float = 0.0
    rescale_tau_sq: bool = False
    shuffle_reuse: bool = False  # reshuffle stored-epoch order per pass instead of cyclic
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.pruning_rate < 1:
            raise ValueError("pruning_rate must lie in [0, 1)")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if self.fixed_tau <= 0:
            raise ValueError("fixed_tau must be positive")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")


@dataclass(eq=False)
class TrainResult:
    losses: np.ndarray  # per-epoch mean KD loss
    teacher_taus: np.ndarray  # tau_t applied per epoch
    student_taus: np.ndarray  # tau_hat applied per epoch (1.0 at epoch 0)
    final_accuracy: float
    storage_bytes: int
    compression: CompressionReport
    degenerate: bool = False


def batches_per_epoch_for(num_samples: int, batch_size: int) -> int:
    """Batches per epoch after excluding the trailing batch of each epoch.

    The final batch (usually incomplete) never enters the label pool, and
    training correspondingly runs one batch fewer per epoch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = -(-num_samples // batch_size) - 1  # ceil division, then drop the trailing batch
    if n < 1:
        raise ValueError(
            f"{num_samples} samples at batch size {batch_size} leave no complete batch "
            "after excluding the trailing one"
        )
    return n


def fit_multinomial_logistic(
    X, y, num_classes: int, ridge: float = 1e-4, iters: int = 2000, lr: float = 0.1
) -> LinearTeacher:
    """Fit a multinomial logistic model by Adam on the ridge-regularized
    cross-entropy (deterministic: zero initialization, fixed iteration count)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    W = np.zeros((num_classes, d))
    b = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    for it in range(1, iters + 1):
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        gW = (probs - onehot).T @ X / n + ridge * W
        gb = (probs - onehot).mean(axis=0)
        mW = 0.9 * mW + 0.1 * gW
        vW = 0.999 * vW + 0.001 * gW**2
        mb = 0.9 * mb + 0.1 * gb
        vb = 0.999 * vb + 0.001 * gb**2
        W -= lr * (mW / (1 - 0.9**it)) / (np.sqrt(vW / (1 - 0.999**it)) + 1e-8)
        b -= lr * (mb / (1 - 0.9**it)) / (np.sqrt(vb / (1 - 0.999**it)) + 1e-8)
    return LinearTeacher(weights=W, bias=b)


def _class_centers(rng: np.random.Generator, C: int, d: int, separation: float) -> np.ndarray:
    # Mutually orthogonal class directions (pairwise distance separation*sqrt(2))
    # whenever C <= d; otherwise random unit directions.
    raw = rng.standard_normal((max(C, 2), d))
    if C <= d:
        q, r = np.linalg.qr(raw.T[:, :C])
        dirs = (q * np.sign(np.diag(r))).T
    else:
        dirs = raw[:C] / np.linalg.norm(raw[:C], axis=1, keepdims=True)
    return separation * dirs


def generate_task(spec: TaskSpec) -> Task:
    """Build train/test blobs, fit the teacher, and draw the distilled set."""
    rng = np.random.default_rng(spec.seed)
    C, d = spec.num_classes, spec.dim
    centers = _class_centers(rng, C, d, spec.separation)

    def draw(n):
        labels = rng.permutation(np.arange(n) % C)
        return centers[labels] + rng.standard_normal((n, d)), labels

    train_X, train_y = draw(spec.train_size)
    test_X, test_y = draw(spec.test_size)
    teacher = fit_multinomial_logistic(train_X, train_y, C)

    distilled_y = np.repeat(np.arange(C), spec.ipc)
    if spec.distill == "synth":
        stats = compute_class_stats(train_X, train_y, C)
        cfg = SynthConfig(batch_size=spec.ipc, seed=spec.seed)
        distilled_X = np.concatenate(
            [synthesize_class_batch(teacher, stats, c, replace(cfg, seed=spec.seed + c)) for c in range(C)]
        )
    else:
        distilled_X = centers[distilled_y] + rng.standard_normal((C * spec.ipc, d))
    return Task(
        spec=spec,
        train_X=train_X,
        train_y=train_y,
        test_X=test_X,
        test_y=test_y,
        distilled_X=distilled_X,
        distilled_y=distilled_y,
        teacher=teacher,
        degenerate=spec.separation == 0.0 and C > 1,
    )


def apply_augmentation(
    data: np.ndarray,
    image_indices: np.ndarray,
    crop_coords: np.ndarray,
    flips: np.ndarray,
    partners: np.ndarray,
    strength: float,
) -> np.ndarray:
    """Replay one batch's stored augmentation exactly.

    The four crop parameters act as two (scale, shift) pairs on the two
    halves of the feature vector; flip negates the whole vector; the mix step
    blends the augmented sample with its raw partner at the per-batch
    strength. Reconstruction is bit-deterministic given the stored (32-bit)
    parameters, which is what makes the stored labels valid supervision.
    """
    X = np.asarray(data, dtype=np.float64)[np.asarray(image_indices, dtype=np.int64)].copy()
    cc = np.asarray(crop_coords, dtype=np.float64)
    half = X.shape[1] // 2
    X[:, :half] = X[:, :half] * cc[:, 0:1] + cc[:, 1:2]
    X[:, half:] = X[:, half:] * cc[:, 2:3] + cc[:, 3:4]
    X[np.asarray(flips) == 1] *= -1.0
    lam = float(strength)
    partners_X = np.asarray(data, dtype=np.float64)[np.asarray(partners, dtype=np.int64)]
    return lam * X + (1.0 - lam) * partners_X


def _topk_rows(Z: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # Row-wise top-k with the (value desc, index asc) tie rule.
    order = np.argsort(-Z, axis=1, kind="stable")[:, :k]
    values = np.take_along_axis(Z, order, axis=1)
    return order, values


def relabel(
    distilled_X: np.ndarray,
    teacher: LinearTeacher,
    plan: PrunePlan,
    batch_size: int,
    k: int,
    seed: int,
) -> LabelStore:
    """Generate the label store: sample augmentations for every retained
    batch, label the augmented inputs with the teacher, and (optionally)
    top-k quantize the logits before storing."""
    X = np.asarray(distilled_X, dtype=np.float64)
    n = X.shape[0]
    C = teacher.weights.shape[0]
    expected_bpe = batches_per_epoch_for(n, batch_size)
    if plan.batches_per_epoch != expected_bpe:
        raise ValueError(
            f"plan expects {plan.batches_per_epoch} batches/epoch but "
            f"{n} samples at batch size {batch_size} give {expected_bpe}"
        )
    if not 0 <= k <= C:
        raise ValueError(f"k={k} out of range for {C} classes")
    rng = np.random.default_rng(seed)
    batches = []
    for e in range(plan.retained_epochs):
        order = rng.permutation(n)
        for b in range(plan.batches_per_epoch):
            idx = order[b * batch_size : (b + 1) * batch_size]
            # Parameters are drawn then rounded to their 32-bit wire width so
            # that replay from the store reproduces the math bit-for-bit.
            crop = np.empty((batch_size, 4), dtype=np.float32)
            crop[:, 0::2] = rng.uniform(0.7, 1.3, (batch_size, 2))
            crop[:, 1::2] = rng.uniform(-0.5, 0.5, (batch_size, 2))
            flips = rng.integers(0, 2, batch_size).astype(np.uint8)
            partners = rng.integers(0, n, batch_size).astype(np.uint32)
            strength = np.float32(rng.beta(1.0, 1.0))
            X_aug = apply_augmentation(X, idx, crop, flips, partners, strength)
            Z = teacher.logits(X_aug)
            if k > 0:
                q_idx, q_val = _topk_rows(Z, k)
                rec = BatchRecord(
                    epoch_id=e,
                    batch_id=b,
                    image_indices=idx,
                    crop_coords=crop,
                    flips=flips,
                    partners=partners,
                    strength=strength,
                    q_indices=q_idx,
                    q_values=q_val,
                )
            else:
                rec = BatchRecord(
                    epoch_id=e,
                    batch_id=b,
                    image_indices=idx,
                    crop_coords=crop,
                    flips=flips,
                    partners=partners,
                    strength=strength,
                    logits=Z,
                )
            batches.append(rec)
    return LabelStore(
        num_classes=C,
        batch_size=batch_size,
        total_epochs=plan.total_epochs,
        retained_epochs=plan.retained_epochs,
        batches_per_epoch=plan.batches_per_epoch,
        k=k,
        batches=batches,
    )


def _softmax_rows(Z: np.ndarray, tau: float) -> np.ndarray:
    S = Z / tau
    S -= S.max(axis=1, keepdims=True)
    e = np.exp(S)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(Z: np.ndarray, tau: float) -> np.ndarray:
    # log-space form: finite even where the plain softmax underflows to 0
    S = Z / tau
    S = S - S.max(axis=1, keepdims=True)
    return S - np.log(np.exp(S).sum(axis=1, keepdims=True))


def _teacher_probs(rec: BatchRecord, num_classes: int, tau: float) -> np.ndarray:
    """Dense (B, C) teacher probabilities for one record at temperature tau.

    Quantized labels get the masked softmax over stored values with exact
    zeros off the support; full labels get the ordinary temperature softmax.
    """
    if rec.logits is not None:
        return _softmax_rows(rec.logits.astype(np.float64), tau)
    vals = rec.q_values.astype(np.float64)
    probs = _softmax_rows(vals, tau)
    B = vals.shape[0]
    dense = np.zeros((B, num_classes))
    np.put_along_axis(dense, rec.q_indices.astype(np.int64), probs, axis=1)
    return dense


def _row_kl(P: np.ndarray, log_Q: np.ndarray) -> np.ndarray:
    terms = np.where(P > 0, P * (np.log(np.where(P > 0, P, 1.0)) - log_Q), 0.0)
    return terms.sum(axis=1)


def train_student(store: LabelStore, task: Task, cfg: TrainConfig) -> TrainResult:
    """Train a linear softmax student for cfg.epochs using only the store.

    Epoch e consumes stored epoch (e mod retained); teacher probabilities are
    recomputed from the stored logits at the epoch's teacher temperature, and
    the student runs at the temperature calibrated on the last batch of the
    previous epoch (1.0 before any calibration exists). Updates are
    moment-normalized (Adam-style) with a cosine-decayed step, so the
    1/tau_hat gradient scale of cold calibrated temperatures cannot
    destabilize training the way a raw fixed-step update would.
    """
    if store.num_classes != task.spec.num_classes:
        raise ValueError(
            f"store has {store.num_classes} classes, task has {task.spec.num_classes}"
        )
    X = np.asarray(task.distilled_X, dtype=np.float64)
    C, d = store.num_classes, X.shape[1]
    B = store.batch_size
    by_epoch: dict[int, list[BatchRecord]] = {}
    for rec in store.batches:
        by_epoch.setdefault(rec.epoch_id, []).append(rec)
    for recs in by_epoch.values():
        recs.sort(key=lambda r: r.batch_id)

    grid = None if cfg.grid is None else np.asarray(cfg.grid, dtype=np.float64)
    reuse_rng = np.random.default_rng(cfg.seed) if cfg.shuffle_reuse else None
    reuse_order = np.arange(store.retained_epochs)

    W = np.zeros((C, d))
    bias = np.zeros(C)
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(bias)
    vb = np.zeros_like(bias)
    step = 0
    losses = np.empty(cfg.epochs)
    teacher_taus = np.empty(cfg.epochs)
    student_taus = np.empty(cfg.epochs)
    tau_hat = 1.0

    for e in range(cfg.epochs):
        tau_t = teacher_temperature(cfg.schedule, e) if cfg.dkr else cfg.fixed_tau
        lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * e / cfg.epochs))
        slot = e % store.retained_epochs
        if reuse_rng is not None and slot == 0:
            reuse_order = reuse_rng.permutation(store.retained_epochs)
        recs = by_epoch[int(reuse_order[slot])]

        epoch_loss = 0.0
        last = None
        for rec in recs:
            X_aug = apply_augmentation(
                X, rec.image_indices, rec.crop_coords, rec.flips, rec.partners, rec.strength
            )
            P = _teacher_probs(rec, C, tau_t)
            if cfg.label_smoothing > 0:
                P = (1.0 - cfg.label_smoothing) * P + cfg.label_smoothing / C
            logits_s = X_aug @ W.T + bias
            Q = _softmax_rows(logits_s, tau_hat)
            epoch_loss += float(_row_kl(P, _log_softmax_rows(logits_s, tau_hat)).mean())
            G = (Q - P) / tau_hat
            if cfg.rescale_tau_sq:
                G = G * tau_hat**2
            gW = (G.T @ X_aug) / B
            gb = G.mean(axis=0)
            step += 1
            mW = 0.9 * mW + 0.1 * gW
            vW = 0.999 * vW + 0.001 * gW**2
            mb = 0.9 * mb + 0.1 * gb
            vb = 0.999 * vb + 0.001 * gb**2
            W -= lr * (mW / (1 - 0.9**step)) / (np.sqrt(vW / (1 - 0.999**step)) + 1e-8)
            bias -= lr * (mb / (1 - 0.9**step)) / (np.sqrt(vb / (1 - 0.999**step)) + 1e-8)
            last = (X_aug, P)

        losses[e] = epoch_loss / len(recs)
        teacher_taus[e] = tau_t
        student_taus[e] = tau_hat
        if cfg.ca:
            X_last, P_last = last
            sparse = [_dense_to_sparse(row, C) for row in P_last]
            cal = calibrate_student_temperature(sparse, X_last @ W.T + bias, grid)
            tau_hat = cal.tau_star
        else:
            tau_hat = 1.0

    preds = np.argmax(task.test_X @ W.T + bias, axis=1)
    accuracy = float(np.mean(preds == task.test_y))
    bd = storage_breakdown(store)
    report = compression_report(
        bd,
        total_epochs=store.total_epochs,
        batches_per_epoch=store.batches_per_epoch,
        batch_size=store.batch_size,
        num_classes=store.num_classes,
    )
    return TrainResult(
        losses=losses,
        teacher_taus=teacher_taus,
        student_taus=student_taus,
        final_accuracy=accuracy,
        storage_bytes=len(encode_store(store)),
        compression=report,
        degenerate=task.degenerate,
    )


def _dense_to_sparse(row: np.ndarray, num_classes: int) -> SparseProbs:
    support = np.flatnonzero(row > 0)
    probs = row[support]
    return SparseProbs(num_classes=num_classes, support=support, probs=probs / probs.sum())


@dataclass(frozen=True)
class ParetoEntry:
    pruning_rate: float
    top_k: int
    storage_bytes: int
    mean_accuracy: float
    accuracies: tuple[float, ...]
    non_dominated: bool


def _run_config(args) -> tuple[float, int, int, tuple[float, ...]]:
    task, cfg, p, k, seeds = args
    n = task.distilled_X.shape[0]
    bpe = batches_per_epoch_for(n, cfg.batch_size)
    accs = []
    storage = None
    for seed in seeds:
        plan = prune_plan(cfg.epochs, p, bpe)
        store = relabel(task.distilled_X, task.teacher, plan, cfg.batch_size, k, seed)
        run_cfg = replace(cfg, pruning_rate=p, top_k=k, seed=seed)
        result = train_student(store, task, run_cfg)
        accs.append(result.final_accuracy)
        if storage is None:
            storage = result.storage_bytes
    return p, k, storage, tuple(accs)


def pareto_sweep(
    task: Task,
    pk_grid: Sequence[tuple[float, int]],
    cfg: TrainConfig,
    seeds: Sequence[int] = (0, 1, 2),
    jobs: int = 1,
) -> list[ParetoEntry]:
    """Run every (pruning_rate, top_k) configuration, seed-averaged, and flag
    the non-dominated (storage, accuracy) points. Sorted by storage ascending."""
    if not pk_grid:
        raise ValueError("configuration grid is empty")
    work = [(task, cfg, p, k, tuple(seeds)) for p, k in pk_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_config, work))
    else:
        rows = [_run_config(w) for w in work]

    entries = []
    means = [float(np.mean(accs)) for _, _, _, accs in rows]
    for i, (p, k, storage, accs) in enumerate(rows):
        dominated = any(
            j != i
            and rows[j][2] <= storage
            and means[j] >= means[i]
            and (rows[j][2] < storage or means[j] > means[i])
            for j in range(len(rows))
        )
        entries.append(
            ParetoEntry(
                pruning_rate=p,
                top_k=k,
                storage_bytes=storage,
                mean_accuracy=means[i],
                accuracies=accs,
                non_dominated=not dominated,
            )
        )
    entries.sort(key=lambda en: (en.storage_bytes, en.pruning_rate, en.top_k))
    return entries
