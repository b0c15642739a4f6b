"""Shared builders for randomized label stores."""

import numpy as np
import pytest

from slbl.label_store import BatchRecord, LabelStore


def random_store(rng: np.random.Generator) -> LabelStore:
    """A structurally valid store with randomized dimensions and contents."""
    C = int(rng.integers(2, 12))
    B = int(rng.integers(1, 7))
    retained = int(rng.integers(1, 4))
    T = int(rng.integers(retained, retained + 5))
    bpe = int(rng.integers(1, 4))
    quantized = bool(rng.integers(0, 2))
    k = int(rng.integers(1, C + 1)) if quantized else 0
    batches = []
    for e in range(retained):
        for b in range(bpe):
            common = dict(
                epoch_id=e,
                batch_id=b,
                image_indices=rng.integers(0, 1000, B),
                crop_coords=rng.uniform(-2, 2, (B, 4)).astype(np.float32),
                flips=rng.integers(0, 2, B),
                partners=rng.integers(0, 1000, B),
                strength=np.float32(rng.uniform(0, 1)),
                bbox=rng.integers(0, 50, 4),
            )
            if quantized:
                z = rng.normal(0, 3, (B, C))
                order = np.argsort(-z, axis=1, kind="stable")[:, :k]
                vals = np.take_along_axis(z, order, axis=1)
                rec = BatchRecord(**common, q_indices=order, q_values=vals)
            else:
                rec = BatchRecord(**common, logits=rng.normal(0, 3, (B, C)))
            batches.append(rec)
    return LabelStore(
        num_classes=C,
        batch_size=B,
        total_epochs=T,
        retained_epochs=retained,
        batches_per_epoch=bpe,
        k=k,
        batches=batches,
    )


@pytest.fixture
def store_rng():
    return np.random.default_rng(2024)
