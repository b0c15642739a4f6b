"""On-disk soft-label store: binary codec, pruning plan, and byte accounting.

A store holds one record per retained batch: the augmentation parameters
needed to replay the batch exactly, plus the teacher's pre-softmax logits
(full length or top-k compressed). The wire format is fixed little-endian
with no serialization-framework overhead, so every byte is accountable.

Wire layout::

    magic "SLBL" | version u16 | flags u16 (bit0 = quantized)
    | num_classes u32 | batch_size u32 | total_epochs u32
    | retained_epochs u32 | batches_per_epoch u32 | k u32 (0 = full)
    then per batch:
    epoch u32 | batch u32 | image_indices B*u32 | crops B*4*f32
    | flips B*u8 | partners B*u32 | strength f32 | bbox 4*u32
    | labels (full: B*C*f32; quantized: B*k*u32 then B*k*f32)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "StoreFormatError",
    "CorruptStoreError",
    "PrunePlan",
    "prune_plan",
    "BatchRecord",
    "LabelStore",
    "encode_store",
    "decode_store",
    "StorageBreakdown",
    "storage_breakdown",
    "CompressionReport",
    "compression_report",
]

MAGIC = b"SLBL"
VERSION = 1
_HEADER = struct.Struct("<HHIIIIII")  # after magic
HEADER_BYTES = len(MAGIC) + _HEADER.size
RECORD_ID_BYTES = 8  # epoch u32 + batch u32


class StoreFormatError(Exception):
    """Byte stream is not a store: bad magic, bad version, or truncation."""


class CorruptStoreError(Exception):
    """Stream parsed but violates a store invariant (e.g. k > num_classes)."""


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class PrunePlan:
    """Batch-level pruning plan: keep the first retained_epochs of labels and
    reuse them cyclically for the remaining training epochs.

    batches_per_epoch is counted after the trailing (possibly incomplete)
    batch of each epoch has been excluded from the label pool.
    """

    total_epochs: int
    pruning_rate: float
    batches_per_epoch: int
    retained_epochs: int

    def stored_epoch(self, training_epoch: int) -> int:
        """Map a training epoch to the stored epoch that supplies its labels."""
        return training_epoch % self.retained_epochs


def prune_plan(total_epochs: int, pruning_rate: float, batches_per_epoch: int) -> PrunePlan:
    """Build the pruning plan: retained_epochs = round((1 - p) * T), at least 1."""
    if total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if not 0 <= pruning_rate < 1:
        raise ValueError(f"pruning_rate must lie in [0, 1), got {pruning_rate!r}")
    if batches_per_epoch < 1:
        raise ValueError("batches_per_epoch must be >= 1")
    retained = max(1, _round_half_up((1.0 - pruning_rate) * total_epochs))
    return PrunePlan(
        total_epochs=total_epochs,
        pruning_rate=pruning_rate,
        batches_per_epoch=batches_per_epoch,
        retained_epochs=retained,
    )


@dataclass(eq=False)
class BatchRecord:
    """Stored supervision for one batch: augmentation parameters plus labels.

    Arrays are canonicalized to their wire dtypes on construction so that an
    encode/decode roundtrip is the identity. Exactly one of ``logits`` or the
    (``q_indices``, ``q_values``) pair is set.
    """

    epoch_id: int
    batch_id: int
    image_indices: np.ndarray  # (B,) u32
    crop_coords: np.ndarray  # (B, 4) f32 affine jitter parameters
    flips: np.ndarray  # (B,) u8 in {0, 1}
    partners: np.ndarray  # (B,) u32 mix partner index
    strength: float  # per-batch mix coefficient in [0, 1]
    bbox: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.uint32))  # (4,) u32
    logits: np.ndarray | None = None  # (B, C) f32
    q_indices: np.ndarray | None = None  # (B, k) u32
    q_values: np.ndarray | None = None  # (B, k) f32

    def __post_init__(self):
        self.image_indices = np.ascontiguousarray(self.image_indices, dtype="<u4")
        self.crop_coords = np.ascontiguousarray(self.crop_coords, dtype="<f4")
        self.flips = np.ascontiguousarray(self.flips, dtype="<u1")
        self.partners = np.ascontiguousarray(self.partners, dtype="<u4")
        self.strength = float(np.float32(self.strength))
        self.bbox = np.ascontiguousarray(self.bbox, dtype="<u4")
        if self.logits is not None:
            self.logits = np.ascontiguousarray(self.logits, dtype="<f4")
        if self.q_indices is not None:
            self.q_indices = np.ascontiguousarray(self.q_indices, dtype="<u4")
        if self.q_values is not None:
            self.q_values = np.ascontiguousarray(self.q_values, dtype="<f4")

    def __eq__(self, other):
        if not isinstance(other, BatchRecord):
            return NotImplemented
        same_ids = self.epoch_id == other.epoch_id and self.batch_id == other.batch_id
        return (
            same_ids
            and np.array_equal(self.image_indices, other.image_indices)
            and np.array_equal(self.crop_coords, other.crop_coords)
            and np.array_equal(self.flips, other.flips)
            and np.array_equal(self.partners, other.partners)
            and np.float32(self.strength) == np.float32(other.strength)
            and np.array_equal(self.bbox, other.bbox)
            and _opt_equal(self.logits, other.logits)
            and _opt_equal(self.q_indices, other.q_indices)
            and _opt_equal(self.q_values, other.q_values)
        )


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(eq=False)
class LabelStore:
    """A complete soft-label artifact: header metadata plus all batch records."""

    num_classes: int
    batch_size: int
    total_epochs: int
    retained_epochs: int
    batches_per_epoch: int
    k: int  # 0 = full-length labels
    batches: list[BatchRecord]

    @property
    def quantized(self) -> bool:
        return self.k > 0

    def __eq__(self, other):
        if not isinstance(other, LabelStore):
            return NotImplemented
        header_same = (
            self.num_classes == other.num_classes
            and self.batch_size == other.batch_size
            and self.total_epochs == other.total_epochs
            and self.retained_epochs == other.retained_epochs
            and self.batches_per_epoch == other.batches_per_epoch
            and self.k == other.k
        )
        return header_same and len(self.batches) == len(other.batches) and all(
            a == b for a, b in zip(self.batches, other.batches)
        )


def _validate_store(store: LabelStore) -> None:
    if store.num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if store.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if store.total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if not 1 <= store.retained_epochs <= store.total_epochs:
        raise ValueError("retained_epochs must lie in [1, total_epochs]")
    if store.batches_per_epoch < 1:
        raise ValueError("batches_per_epoch must be >= 1")
    if not 0 <= store.k <= store.num_classes:
        raise ValueError(f"k={store.k} out of range for num_classes={store.num_classes}")
    if not store.batches:
        raise ValueError("store contains no batches")
    expected = store.retained_epochs * store.batches_per_epoch
    if len(store.batches) != expected:
        raise ValueError(f"expected {expected} batch records, found {len(store.batches)}")
    B, C, k = store.batch_size, store.num_classes, store.k
    for rec in store.batches:
        if not 0 <= rec.epoch_id < store.retained_epochs:
            raise ValueError(f"epoch_id {rec.epoch_id} outside retained range")
        if not 0 <= rec.batch_id < store.batches_per_epoch:
            raise ValueError(f"batch_id {rec.batch_id} outside range")
        if rec.image_indices.shape != (B,):
            raise ValueError("image_indices shape mismatch")
        if rec.crop_coords.shape != (B, 4):
            raise ValueError("crop_coords shape mismatch")
        if not np.all(np.isfinite(rec.crop_coords)):
            raise ValueError("crop_coords contain non-finite entries")
        if rec.flips.shape != (B,) or np.any(rec.flips > 1):
            raise ValueError("flips must be (B,) of 0/1")
        if rec.partners.shape != (B,):
            raise ValueError("partners shape mismatch")
        if not 0.0 <= rec.strength <= 1.0:
            raise ValueError(f"mix strength {rec.strength} outside [0, 1]")
        if rec.bbox.shape != (4,):
            raise ValueError("bbox shape mismatch")
        if k == 0:
            if rec.logits is None or rec.q_indices is not None or rec.q_values is not None:
                raise ValueError("full-label store requires logits and no quantized arrays")
            if rec.logits.shape != (B, C):
                raise ValueError("logits shape mismatch")
        else:
            if rec.logits is not None or rec.q_indices is None or rec.q_values is None:
                raise ValueError("quantized store requires q_indices/q_values and no full logits")
            if rec.q_indices.shape != (B, k) or rec.q_values.shape != (B, k):
                raise ValueError("quantized label shape mismatch")
            if np.any(rec.q_indices >= C):
                raise ValueError("quantized class index out of range")
            srt = np.sort(rec.q_indices, axis=1)
            if k > 1 and np.any(np.diff(srt.astype(np.int64), axis=1) == 0):
                raise ValueError("quantized indices must be unique within a row")
            vals = rec.q_values.astype(np.float64)
            if k > 1 and np.any(np.diff(vals, axis=1) > 0):
                raise ValueError("quantized values must be non-increasing within a row")
            if k > 1:
                ties = np.diff(vals, axis=1) == 0
                idx_desc = np.diff(rec.q_indices.astype(np.int64), axis=1) < 0
                if np.any(ties & idx_desc):
                    raise ValueError("tied quantized values must keep ascending indices")


def encode_store(store: LabelStore) -> bytes:
    """Serialize a store to its canonical byte stream (deterministic)."""
    _validate_store(store)
    flags = 1 if store.quantized else 0
    out = bytearray(MAGIC)
    out += _HEADER.pack(
        VERSION,
        flags,
        store.num_classes,
        store.batch_size,
        store.total_epochs,
        store.retained_epochs,
        store.batches_per_epoch,
        store.k,
    )
    for rec in store.batches:
        out += struct.pack("<II", rec.epoch_id, rec.batch_id)
        out += rec.image_indices.tobytes()
        out += rec.crop_coords.tobytes()
        out += rec.flips.tobytes()
        out += rec.partners.tobytes()
        out += struct.pack("<f", rec.strength)
        out += rec.bbox.tobytes()
        if store.quantized:
            out += rec.q_indices.tobytes()
            out += rec.q_values.tobytes()
        else:
            out += rec.logits.tobytes()
    return bytes(out)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise StoreFormatError(
                f"truncated stream: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def array(self, dtype: str, shape: tuple) -> np.ndarray:
        n = int(np.prod(shape)) * np.dtype(dtype).itemsize
        return np.frombuffer(self.take(n), dtype=dtype).reshape(shape).copy()


def decode_store(data: bytes) -> LabelStore:
    """Parse a store byte stream, validating every invariant on load."""
    cur = _Cursor(data)
    if cur.take(4) != MAGIC:
        raise StoreFormatError("bad magic: not a label store")
    version, flags, C, B, T, retained, bpe, k = _HEADER.unpack(cur.take(_HEADER.size))
    if version != VERSION:
        raise StoreFormatError(f"unsupported version {version}")
    if k > C:
        raise CorruptStoreError(f"header declares k={k} > num_classes={C}")
    if bool(flags & 1) != (k > 0):
        raise CorruptStoreError("quantized flag inconsistent with k")
    if retained == 0 or bpe == 0 or B == 0 or C < 2 or T == 0:
        raise CorruptStoreError("header contains zero-sized dimensions")
    batches = []
    for _ in range(retained * bpe):
        epoch_id, batch_id = struct.unpack("<II", cur.take(8))
        image_indices = cur.array("<u4", (B,))
        crop_coords = cur.array("<f4", (B, 4))
        flips = cur.array("<u1", (B,))
        partners = cur.array("<u4", (B,))
        (strength,) = struct.unpack("<f", cur.take(4))
        bbox = cur.array("<u4", (4,))
        if k > 0:
            q_indices = cur.array("<u4", (B, k))
            q_values = cur.array("<f4", (B, k))
            logits = None
        else:
            logits = cur.array("<f4", (B, C))
            q_indices = q_values = None
        batches.append(
            BatchRecord(
                epoch_id=epoch_id,
                batch_id=batch_id,
                image_indices=image_indices,
                crop_coords=crop_coords,
                flips=flips,
                partners=partners,
                strength=strength,
                bbox=bbox,
                logits=logits,
                q_indices=q_indices,
                q_values=q_values,
            )
        )
    if cur.pos != len(data):
        raise StoreFormatError(f"{len(data) - cur.pos} trailing bytes after last record")
    store = LabelStore(
        num_classes=C,
        batch_size=B,
        total_epochs=T,
        retained_epochs=retained,
        batches_per_epoch=bpe,
        k=k,
        batches=batches,
    )
    try:
        _validate_store(store)
    except ValueError as exc:
        raise CorruptStoreError(str(exc)) from exc
    return store


# The six supervision-payload components of a batch record, in wire order.
PAYLOAD_COMPONENTS = ("crops", "flips", "partners", "strength", "bbox", "logits")


@dataclass(frozen=True)
class StorageBreakdown:
    """Per-component byte accounting for a store.

    ``fractions`` covers the six supervision-payload components (augmentation
    parameters plus labels) and sums to 1 over ``payload_bytes``; the image
    index table and the header are bookkeeping overhead reported alongside,
    and all components together make up ``total_bytes``.
    """

    component_bytes: dict[str, int]
    fractions: dict[str, float]
    payload_bytes: int
    total_bytes: int


def per_batch_payload_bytes(batch_size: int, num_classes: int, k: int = 0) -> dict[str, int]:
    """Byte cost of the six payload components for a single batch record."""
    label_bytes = batch_size * k * 8 if k > 0 else batch_size * num_classes * 4
    return {
        "crops": batch_size * 16,
        "flips": batch_size * 1,
        "partners": batch_size * 4,
        "strength": 4,
        "bbox": 16,
        "logits": label_bytes,
    }


def storage_breakdown(store: LabelStore) -> StorageBreakdown:
    """Exact per-component byte counts and payload fractions for a store."""
    if not store.batches:
        raise ValueError("store contains no batches")
    n = len(store.batches)
    per_batch = per_batch_payload_bytes(store.batch_size, store.num_classes, store.k)
    component_bytes = {name: n * b for name, b in per_batch.items()}
    component_bytes["image_indices"] = n * store.batch_size * 4
    component_bytes["header"] = HEADER_BYTES + n * RECORD_ID_BYTES
    payload = sum(component_bytes[name] for name in PAYLOAD_COMPONENTS)
    fractions = {name: component_bytes[name] / payload for name in PAYLOAD_COMPONENTS}
    total = sum(component_bytes.values())
    return StorageBreakdown(
        component_bytes=component_bytes,
        fractions=fractions,
        payload_bytes=payload,
        total_bytes=total,
    )


@dataclass(frozen=True)
class CompressionReport:
    """Compression ratios of a store against its uncompressed counterpart.

    theoretical_z_ratio counts only the label payload; actual_ratio counts
    every stored byte, so it is the smaller of the two whenever the store
    actually compresses (auxiliary bytes present and, if quantized, 2k <= C;
    a top-k with 2k > C stores more label bytes than the full vector would).
    """

    theoretical_z_ratio: float
    actual_ratio: float
    baseline_bytes: int


def baseline_store_bytes(
    total_epochs: int, batches_per_epoch: int, batch_size: int, num_classes: int
) -> int:
    """Size of the unpruned, unquantized store.

    The baseline writes batches sequentially, so it carries no per-batch image
    index table and no record ids; only the fixed header plus the six payload
    components for every batch of every epoch.
    """
    per_batch = sum(per_batch_payload_bytes(batch_size, num_classes).values())
    return HEADER_BYTES + total_epochs * batches_per_epoch * per_batch


def compression_report(
    breakdown: StorageBreakdown,
    *,
    total_epochs: int,
    batches_per_epoch: int,
    batch_size: int,
    num_classes: int,
) -> CompressionReport:
    """Theoretical (label-payload-only) and actual (all bytes) compression."""
    if breakdown.total_bytes <= 0:
        raise ValueError("store size must be positive")
    baseline_label_bytes = total_epochs * batches_per_epoch * batch_size * num_classes * 4
    theoretical = baseline_label_bytes / breakdown.component_bytes["logits"]
    baseline = baseline_store_bytes(total_epochs, batches_per_epoch, batch_size, num_classes)
    return CompressionReport(
        theoretical_z_ratio=theoretical,
        actual_ratio=baseline / breakdown.total_bytes,
        baseline_bytes=baseline,
    )
