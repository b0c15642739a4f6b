"""The full loop at desk scale: generate a task, relabel a distilled set
under stored augmentations, compress the store, and train students from it.

Shows the two supervision-diversity mechanisms head to head:
  * annealed-temperature reuse vs fixed-temperature reuse of pruned labels,
  * calibrated vs unit student temperature against a quantized teacher.
Both effects are small per run and consistent across seeds, which is why
the test suite averages them; this script prints the per-seed numbers.
"""

import numpy as np

from slbl import (
    TaskSpec,
    TrainConfig,
    batches_per_epoch_for,
    generate_task,
    prune_plan,
    relabel,
    train_student,
)

task = generate_task(TaskSpec(seed=0))
n = task.distilled_X.shape[0]
bpe = batches_per_epoch_for(n, 16)
print(f"task: {task.spec.num_classes} classes, dim {task.spec.dim}, "
      f"{n} distilled vectors, {bpe} stored batches/epoch\n")

print("=== annealed vs fixed-temperature reuse (p=0.9, full labels) ===")
rows = []
for seed in range(5):
    plan = prune_plan(300, 0.9, bpe)
    store = relabel(task.distilled_X, task.teacher, plan, 16, 0, seed)
    annealed = train_student(store, task, TrainConfig(dkr=True, seed=seed))
    fixed = train_student(store, task, TrainConfig(dkr=False, fixed_tau=2.0, seed=seed))
    rows.append((annealed.final_accuracy, fixed.final_accuracy))
    print(f"  seed {seed}: annealed {annealed.final_accuracy:.4f}  "
          f"fixed {fixed.final_accuracy:.4f}")
a, f = np.array(rows).T
print(f"  mean: annealed {a.mean():.4f} vs fixed {f.mean():.4f} "
      f"({np.sum(a > f)}/5 seeds better)\n")

print("=== calibrated vs unit student temperature (p=0.9, top-4 labels) ===")
rows, taus = [], []
for seed in range(5):
    plan = prune_plan(300, 0.9, bpe)
    store = relabel(task.distilled_X, task.teacher, plan, 16, 4, seed)
    cal = train_student(store, task,
                        TrainConfig(dkr=False, fixed_tau=1.0, ca=True, seed=seed))
    unit = train_student(store, task,
                         TrainConfig(dkr=False, fixed_tau=1.0, ca=False, seed=seed))
    rows.append((cal.final_accuracy, unit.final_accuracy))
    taus.append(cal.student_taus[1:].mean())
    print(f"  seed {seed}: calibrated {cal.final_accuracy:.4f}  "
          f"unit {unit.final_accuracy:.4f}  (mean tau* {taus[-1]:.3f})")
c, u = np.array(rows).T
print(f"  mean: calibrated {c.mean():.4f} vs unit {u.mean():.4f} "
      f"({np.sum(c > u)}/5 seeds better); mean tau* {np.mean(taus):.3f} < 1")

last = train_student(store, task, TrainConfig(dkr=True, ca=True, seed=0))
print(f"\nstore bytes {last.storage_bytes}, actual compression "
      f"{last.compression.actual_ratio:.1f}x "
      f"(theoretical {last.compression.theoretical_z_ratio:.1f}x)")
