"""Accuracy vs storage across pruning x quantization configurations.

Sweeps a small grid, prints the table sorted by storage, and marks the
non-dominated points -- the configurations for which no other setting is
simultaneously smaller and at least as accurate.
"""

from slbl import TaskSpec, TrainConfig, generate_task, pareto_sweep

task = generate_task(TaskSpec(seed=0))
grid = [(p, k) for p in (0.0, 0.5, 0.9, 0.95) for k in (0, 4, 2)]
entries = pareto_sweep(task, grid, TrainConfig(dkr=True, ca=False), seeds=(0, 1, 2))

print(f"{'p':>5}  {'k':>3}  {'bytes':>9}  {'mean acc':>8}  front")
for en in entries:
    mark = "  *" if en.non_dominated else ""
    print(f"{en.pruning_rate:>5.2f}  {en.top_k:>3}  {en.storage_bytes:>9}  "
          f"{en.mean_accuracy:>8.4f}{mark}")

front = [en for en in entries if en.non_dominated]
print(f"\n{len(front)} of {len(entries)} configurations sit on the front.")
print("Reading the table: pruning (p) removes whole batches of labels and")
print("augmentation parameters; quantization (k) shrinks each label. The")
print("knee of the front is where combining both beats either one alone.")
