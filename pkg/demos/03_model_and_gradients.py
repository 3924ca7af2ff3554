"""The tiny encoder + prototype classifier, and its certified backprop.

Run:  python3 demos/03_model_and_gradients.py
"""

import numpy as np

from gcdlab.losses import init_ema
from gcdlab.model import forward, init_params, params_to_vector, vector_to_params
from gcdlab.numerics import finite_difference_gradient, norm_relative_error
from gcdlab.synthdata import Batch
from gcdlab.trainer import TrainConfig, compute_step, teacher_temperature

rng = np.random.default_rng(1)
b, d, k = 6, 8, 5
params = init_params(dim=d, hidden=10, feat=6, proj=4, k=k, seed=1)
base = rng.normal(size=(b, d))
batch = Batch(
    view1=base + rng.normal(size=(b, d)) * 0.05,
    view2=base + rng.normal(size=(b, d)) * 0.05,
    labels=np.array([0, 0, 1, 2, 3, 4]),
    mask=np.array([True, True, True, False, False, False]),
    sample_ids=np.arange(b),
)

print("== forward pass ==")
cache = forward(params, batch)
print(f"  class scores are cosine similarities: range "
      f"[{cache.view1.logits.min():.3f}, {cache.view1.logits.max():.3f}] within [-1, 1]")
print(f"  projections are unit rows: ||z|| = {np.linalg.norm(cache.view1.z, axis=1).round(9)}")
print("  no softmax here; each loss applies its own temperature")

print("\n== the full objective's gradient, checked against finite differences ==")
cfg = TrainConfig(delta=0.25, batch_size=b, hidden_dim=10, feature_dim=6, proj_dim=4, seed=1)
ema = init_ema(k, cfg.ema_momentum)
result = compute_step(params, batch, cfg, teacher_temperature(0, cfg), ema, frozenset({0, 1, 2}))
print(f"  loss breakdown: total={result.breakdown.total:.4f} "
      f"(rep_u={result.breakdown.rep_unsup:.3f}, cls_u={result.breakdown.cls_unsup:.3f}, "
      f"mean_entropy={result.breakdown.mean_entropy:.3f}, ler={result.breakdown.ler:.3f})")

# certify one slice here: the scalar sum of logits, differentiated through
# encoder, normalizations, and prototypes (the test suite covers the rest)
from gcdlab.model import backward  # noqa: E402

g_l = np.ones_like(cache.view1.logits)
zeros_l = np.zeros_like(g_l)
zeros_z = np.zeros_like(cache.view1.z)
grads = backward(params, cache, g_l, zeros_l, zeros_z, zeros_z)

def logit_sum(theta):
    c = forward(vector_to_params(theta, params), batch)
    return float(c.view1.logits.sum())

numeric = finite_difference_gradient(logit_sum, params_to_vector(params))
err = norm_relative_error(params_to_vector(grads), numeric)
print(f"  d(sum of logits)/d(all {params_to_vector(params).size} parameters): rel err {err:.2e}")

print("\n== what gets selected for the local entropy term ==")
sel = result.selection
print(f"  confident view-samples: {int(sel.high_conf.sum())}/{2 * b}")
print(f"  selected (unlabeled & confident & predicted-known): {int(sel.known_mask.sum())}")
print(f"  per-class margins from the running mean prediction: {result.margins.round(3)}")
