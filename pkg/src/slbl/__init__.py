"""Soft-label compression toolkit.

Batch-level label pruning, top-k pre-softmax logit quantization,
temperature-annealed label reuse, KL-calibrated student temperatures, exact
byte accounting for the on-disk label store, feature-diversity metrics, and a
desk-scale end-to-end distillation harness.
"""

from .calibration import (
    CalibrationResult,
    TemperatureSchedule,
    calibrate_student_temperature,
    default_grid,
    kd_loss,
    teacher_temperature,
)
from .diversity import DiversityReport, mmd_squared, within_class_cosine
from .label_store import (
    BatchRecord,
    CompressionReport,
    CorruptStoreError,
    LabelStore,
    PrunePlan,
    StorageBreakdown,
    StoreFormatError,
    compression_report,
    decode_store,
    encode_store,
    prune_plan,
    storage_breakdown,
)
from .logit_core import (
    QuantizedLogits,
    SparseProbs,
    dequantize,
    kl_div,
    optimal_logit_gap,
    quantized_probs,
    softmax_t,
    temperature_upper_bound,
    topk_quantize,
)
from .synth import (
    ClassStats,
    LinearTeacher,
    OptimizationError,
    SynthConfig,
    compute_class_stats,
    synthesize_class_batch,
    synthesize_independent,
)
from .trainer_sim import (
    ParetoEntry,
    Task,
    TaskSpec,
    TrainConfig,
    TrainResult,
    batches_per_epoch_for,
    generate_task,
    pareto_sweep,
    relabel,
    train_student,
)

__version__ = "0.1.0"
