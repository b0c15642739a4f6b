"""Why a quantized teacher wants a cold student, and how the grid search
finds the temperature.

A top-k re-normalized teacher concentrates all probability on k classes. A
student softmax over all C classes can only match that concentration by
amplifying its logit gaps, i.e. by running at a temperature below 1. The
optimal gap between two student logits is tau_hat * log(p_i / p_j); with
gaps capped at some budget, feasible temperatures are bounded by
budget / log(max ratio).
"""

import numpy as np

from slbl import (
    calibrate_student_temperature,
    default_grid,
    kl_div,
    optimal_logit_gap,
    quantized_probs,
    softmax_t,
    temperature_upper_bound,
    topk_quantize,
)

rng = np.random.default_rng(11)
C = 20

# A teacher batch: top-5 quantized, re-normalized.
teacher = []
student_logits = []
for _ in range(8):
    z_t = rng.normal(0, 4, C)
    teacher.append(quantized_probs(topk_quantize(z_t, 5), 1.0))
    student_logits.append(0.25 * z_t + rng.normal(0, 0.3, C))  # mildly aligned student
student_logits = np.asarray(student_logits)

result = calibrate_student_temperature(teacher, student_logits)
print(f"calibrated student temperature: {result.tau_star:.2f} (min KL {result.min_kl:.4f})")
print("KL over the grid (every 10th point):")
for tau, kl in list(zip(default_grid(), result.per_tau_kl))[::10]:
    bar = "#" * int(min(kl, 8.0) * 6)
    print(f"  tau={tau:4.2f}  kl={kl:8.4f}  {bar}")

# The closed-form check: build student logits from the teacher's ratios.
p = teacher[0]
tau_hat = 0.4
z = np.full(C, -50.0 * tau_hat)
for idx, cls in enumerate(p.support):
    z[cls] = optimal_logit_gap(float(p.probs[idx]), float(p.probs[0]), tau_hat)
print(f"\ngap construction at tau_hat={tau_hat}: KL(teacher || student) = "
      f"{kl_div(p, softmax_t(z, tau_hat)):.2e}")

r = float(p.probs.max() / p.probs.min())
budget = float(z[p.support].max() - z[p.support].min())
print(f"max in-support gap used: {budget:.3f} = tau_hat * log(max ratio {r:.1f})")
print(f"temperature bound for this gap budget: {temperature_upper_bound(budget, r):.3f}")
