"""Store codec, pruning plan, and byte-accounting tests. Byte counts are
checked against the wire layout arithmetic done by hand in each test."""

import numpy as np
import pytest

from slbl.label_store import (
    BatchRecord,
    CorruptStoreError,
    HEADER_BYTES,
    LabelStore,
    StoreFormatError,
    compression_report,
    decode_store,
    encode_store,
    prune_plan,
    storage_breakdown,
)
from tests.conftest import random_store


class TestPrunePlan:
    def test_ninety_percent_of_300_keeps_30(self):
        plan = prune_plan(300, 0.9, 6)
        assert plan.retained_epochs == 30

    def test_no_pruning_keeps_everything_with_identity_reuse(self):
        plan = prune_plan(17, 0.0, 3)
        assert plan.retained_epochs == 17
        assert [plan.stored_epoch(e) for e in range(17)] == list(range(17))

    def test_cyclic_reuse(self):
        plan = prune_plan(4, 0.5, 3)
        assert plan.retained_epochs == 2
        assert plan.retained_epochs * plan.batches_per_epoch == 6
        assert plan.stored_epoch(3) == 1

    def test_always_keeps_at_least_one_epoch(self):
        assert prune_plan(10, 0.99, 2).retained_epochs == 1

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            prune_plan(300, 1.0, 6)
        with pytest.raises(ValueError):
            prune_plan(300, -0.1, 6)
        with pytest.raises(ValueError):
            prune_plan(0, 0.5, 6)
        with pytest.raises(ValueError):
            prune_plan(300, 0.5, 0)


def single_batch_store(B=128, C=1000, k=0, rng=None):
    rng = rng or np.random.default_rng(0)
    common = dict(
        epoch_id=0,
        batch_id=0,
        image_indices=rng.integers(0, B, B),
        crop_coords=rng.uniform(-1, 1, (B, 4)).astype(np.float32),
        flips=rng.integers(0, 2, B),
        partners=rng.integers(0, B, B),
        strength=np.float32(0.5),
        bbox=np.zeros(4, dtype=np.uint32),
    )
    if k:
        z = rng.normal(0, 3, (B, C))
        order = np.argsort(-z, axis=1, kind="stable")[:, :k]
        rec = BatchRecord(**common, q_indices=order, q_values=np.take_along_axis(z, order, 1))
    else:
        rec = BatchRecord(**common, logits=rng.normal(0, 3, (B, C)))
    return LabelStore(
        num_classes=C,
        batch_size=B,
        total_epochs=1,
        retained_epochs=1,
        batches_per_epoch=1,
        k=k,
        batches=[rec],
    )


class TestCodec:
    def test_roundtrip_randomized(self, store_rng):
        for _ in range(200):
            store = random_store(store_rng)
            assert decode_store(encode_store(store)) == store

    def test_encoding_is_deterministic(self, store_rng):
        store = random_store(store_rng)
        assert encode_store(store) == encode_store(store)

    def test_empty_store_rejected(self):
        store = LabelStore(
            num_classes=4,
            batch_size=2,
            total_epochs=1,
            retained_epochs=1,
            batches_per_epoch=1,
            k=0,
            batches=[],
        )
        with pytest.raises(ValueError):
            encode_store(store)

    def test_full_label_payload_size(self):
        """One full batch of 128x1000 float32 logits occupies exactly
        512,000 bytes of label payload."""
        store = single_batch_store()
        bd = storage_breakdown(store)
        assert bd.component_bytes["logits"] == 128 * 1000 * 4 == 512000
        assert bd.total_bytes == len(encode_store(store))

    def test_golden_fixture_roundtrip(self):
        """The committed fixture decodes and re-encodes to identical bytes
        (guards against accidental wire-format drift)."""
        from pathlib import Path

        blob = (Path(__file__).parent / "data" / "golden.slbl").read_bytes()
        store = decode_store(blob)
        assert encode_store(store) == blob
        assert store.num_classes == 20 and store.batch_size == 8
        assert store.retained_epochs == 2 and store.total_epochs == 8

    def test_bad_magic_rejected(self, store_rng):
        blob = bytearray(encode_store(random_store(store_rng)))
        blob[:4] = b"XXXX"
        with pytest.raises(StoreFormatError):
            decode_store(bytes(blob))

    def test_truncation_rejected(self, store_rng):
        blob = encode_store(random_store(store_rng))
        with pytest.raises(StoreFormatError):
            decode_store(blob[: len(blob) - 3])

    def test_trailing_garbage_rejected(self, store_rng):
        blob = encode_store(random_store(store_rng))
        with pytest.raises(StoreFormatError):
            decode_store(blob + b"\x00")

    def test_k_exceeding_classes_rejected(self):
        import struct

        store = single_batch_store(B=2, C=4, k=2)
        blob = bytearray(encode_store(store))
        # k lives in the last u32 of the header
        blob[HEADER_BYTES - 4 : HEADER_BYTES] = struct.pack("<I", 9)
        with pytest.raises(CorruptStoreError):
            decode_store(bytes(blob))

    def test_invalid_strength_rejected_on_decode(self):
        import struct

        store = single_batch_store(B=2, C=4)
        blob = bytearray(encode_store(store))
        # strength sits after ids (8) + indices (8) + crops (32) + flips (2) + partners (8)
        off = HEADER_BYTES + 8 + 8 + 32 + 2 + 8
        blob[off : off + 4] = struct.pack("<f", 1.5)
        with pytest.raises(CorruptStoreError):
            decode_store(bytes(blob))

    def test_validation_catches_wrong_record_count(self):
        store = single_batch_store(B=2, C=4)
        store.batches_per_epoch = 2
        with pytest.raises(ValueError):
            encode_store(store)


class TestStorageBreakdown:
    def test_full_label_batch_fractions(self):
        """For a full 128x1000 batch the label payload dominates: the six
        payload components weigh 2048+128+512+4+16+512000 = 514,708 bytes,
        of which logits are 512000/514708."""
        store = single_batch_store()
        bd = storage_breakdown(store)
        assert bd.component_bytes["crops"] == 2048
        assert bd.component_bytes["flips"] == 128
        assert bd.component_bytes["partners"] == 512
        assert bd.component_bytes["strength"] == 4
        assert bd.component_bytes["bbox"] == 16
        assert bd.payload_bytes == 514708
        assert bd.fractions["logits"] == pytest.approx(512000 / 514708)
        assert bd.fractions["logits"] == pytest.approx(0.99474, abs=1e-5)

    def test_quantized_label_payload(self):
        """Top-100 labels store an index and a value per entry: 128 rows of
        100 x (4 + 4) bytes."""
        store = single_batch_store(k=100)
        bd = storage_breakdown(store)
        assert bd.component_bytes["logits"] == 128 * 100 * 8 == 102400

    def test_fractions_sum_to_one(self, store_rng):
        for _ in range(20):
            bd = storage_breakdown(random_store(store_rng))
            assert sum(bd.fractions.values()) == pytest.approx(1.0, abs=1e-9)

    def test_total_matches_encoded_length(self, store_rng):
        for _ in range(20):
            store = random_store(store_rng)
            assert storage_breakdown(store).total_bytes == len(encode_store(store))


def report_for(T, p, bpe, B, C, k):
    retained = max(1, int(np.floor((1 - p) * T + 0.5)))
    label_bytes = B * (k * 8 if k else C * 4)
    n = retained * bpe
    # emulate a store's component accounting without building the batches
    from slbl.label_store import StorageBreakdown

    comp = {
        "crops": n * B * 16,
        "flips": n * B,
        "partners": n * B * 4,
        "strength": n * 4,
        "bbox": n * 16,
        "logits": n * label_bytes,
        "image_indices": n * B * 4,
        "header": HEADER_BYTES + n * 8,
    }
    payload = sum(comp[c] for c in ("crops", "flips", "partners", "strength", "bbox", "logits"))
    bd = StorageBreakdown(
        component_bytes=comp,
        fractions={c: comp[c] / payload for c in ("crops", "flips", "partners", "strength", "bbox", "logits")},
        payload_bytes=payload,
        total_bytes=sum(comp.values()),
    )
    return compression_report(
        bd, total_epochs=T, batches_per_epoch=bpe, batch_size=B, num_classes=C
    )


class TestCompressionReport:
    def test_top5_of_1000_classes_is_exactly_100x(self):
        rep = report_for(T=10, p=0.0, bpe=3, B=16, C=1000, k=5)
        assert rep.theoretical_z_ratio == pytest.approx(100.0)

    def test_ninety_percent_pruning_is_10x(self):
        rep = report_for(T=300, p=0.9, bpe=6, B=16, C=1000, k=0)
        assert rep.theoretical_z_ratio == pytest.approx(10.0)

    def test_combined_pruning_and_quantization(self):
        rep = report_for(T=300, p=0.9, bpe=6, B=128, C=1000, k=100)
        assert rep.theoretical_z_ratio == pytest.approx(50.0)
        assert rep.actual_ratio < 50.0

    def test_actual_never_exceeds_theoretical(self, store_rng):
        """Gap law for genuinely compressing stores: quantization at 2k > C
        would inflate the label payload (2k entries vs C floats), so such
        stores are excluded here."""
        checked = 0
        while checked < 30:
            store = random_store(store_rng)
            if store.k > store.num_classes // 2:
                continue
            checked += 1
            bd = storage_breakdown(store)
            rep = compression_report(
                bd,
                total_epochs=store.total_epochs,
                batches_per_epoch=store.batches_per_epoch,
                batch_size=store.batch_size,
                num_classes=store.num_classes,
            )
            assert rep.actual_ratio <= rep.theoretical_z_ratio

    def test_actual_ratio_monotone_in_compression(self):
        base = dict(T=300, bpe=6, B=64, C=500)
        # shrinking k raises the actual ratio
        ratios_k = [report_for(p=0.9, k=k, **base).actual_ratio for k in (250, 100, 20, 5)]
        assert all(a < b for a, b in zip(ratios_k, ratios_k[1:]))
        # raising p raises the actual ratio
        ratios_p = [report_for(p=p, k=0, **base).actual_ratio for p in (0.0, 0.5, 0.9, 0.99)]
        assert all(a < b for a, b in zip(ratios_p, ratios_p[1:]))
