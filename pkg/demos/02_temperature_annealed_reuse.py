"""One stored logit vector, many supervision signals.

Stored pre-softmax logits can be re-softmaxed at any temperature, so a
pruned label store still provides varied supervision across training epochs:
the annealing schedule starts soft (broad class relationships) and sharpens
toward the floor. Quantization makes every distribution sharper still, since
the dropped classes hold probability exactly zero.
"""

import numpy as np

from slbl import (
    TemperatureSchedule,
    quantized_probs,
    softmax_t,
    teacher_temperature,
    topk_quantize,
)

rng = np.random.default_rng(7)
z = np.sort(rng.normal(0, 3, 10))[::-1].copy()
print("teacher logits:", np.round(z, 2))

sched = TemperatureSchedule()  # 20 -> x0.7 every 30 epochs -> floor 2
print("\nannealed full-label supervision (top-3 probabilities shown):")
for epoch in (0, 30, 90, 150, 210, 299):
    tau = teacher_temperature(sched, epoch)
    probs = softmax_t(z, tau)
    top3 = ", ".join(f"{p:.3f}" for p in np.sort(probs)[::-1][:3])
    ent = -np.sum(probs * np.log(probs))
    print(f"  epoch {epoch:>3}: tau={tau:>5.2f}  top3=[{top3}]  entropy={ent:.3f}")

print("\nsame logits, top-5 quantized (off-support mass is exactly zero):")
q = topk_quantize(z, 5)
for tau in (20.0, 2.0):
    sp = quantized_probs(q, tau)
    full = softmax_t(z, tau)
    h_q = -np.sum(sp.probs * np.log(sp.probs))
    h_f = -np.sum(full * np.log(full))
    print(f"  tau={tau:>5.1f}: quantized entropy {h_q:.3f} <= full entropy {h_f:.3f}")

print("\nstorage cost: full label = C floats; top-5 = 5 indices + 5 values.")
print("Both reproduce every temperature above from the same stored bytes.")
