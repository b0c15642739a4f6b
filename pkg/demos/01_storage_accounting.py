"""Where the bytes go: storage breakdown and compression ratios of a store.

Builds one label store per (pruning rate, top-k) setting over the same
distilled set, then prints the exact per-component byte accounting and the
theoretical (label-payload-only) vs actual (all bytes) compression ratios.
The gap between the two is the cost of keeping augmentation parameters and
image indices so that stored labels remain valid supervision.
"""

from slbl import (
    TaskSpec,
    batches_per_epoch_for,
    compression_report,
    encode_store,
    generate_task,
    prune_plan,
    relabel,
    storage_breakdown,
)

task = generate_task(TaskSpec(seed=0))
n = task.distilled_X.shape[0]
B = 16
bpe = batches_per_epoch_for(n, B)
T = 300

print(f"distilled set: {n} vectors, batch size {B} -> {bpe} stored batches/epoch\n")

header = f"{'p':>5} {'k':>4} {'bytes':>10} {'theoretical':>12} {'actual':>8}   logits share"
print(header)
print("-" * len(header))
for p in (0.0, 0.5, 0.9):
    for k in (0, 5, 2):
        plan = prune_plan(T, p, bpe)
        store = relabel(task.distilled_X, task.teacher, plan, B, k, seed=0)
        bd = storage_breakdown(store)
        rep = compression_report(
            bd, total_epochs=T, batches_per_epoch=bpe, batch_size=B,
            num_classes=store.num_classes,
        )
        print(
            f"{p:>5.1f} {k:>4} {bd.total_bytes:>10} {rep.theoretical_z_ratio:>11.1f}x "
            f"{rep.actual_ratio:>7.1f}x   {bd.fractions['logits']:.4f}"
        )

print("\nFull component map for the last store above:")
bd = storage_breakdown(store)
for name, nbytes in bd.component_bytes.items():
    frac = bd.fractions.get(name)
    share = f"{frac:8.4f} of payload" if frac is not None else "   (bookkeeping)"
    print(f"  {name:>14}: {nbytes:>8} B {share}")
print(f"  encoded size: {len(encode_store(store))} B (= sum of components)")
