"""Each loss term in isolation, with the identities that pin its convention.

Run:  python3 demos/04_losses_walkthrough.py
"""

import math

import numpy as np

from gcdlab.losses import (
    dkl_loss,
    init_ema,
    ler_loss,
    mean_entropy_reg,
    select_known,
    sup_contrastive,
    unsup_contrastive,
    update_ema_and_margins,
)
from gcdlab.numerics import l2_normalize, softmax_temp

rng = np.random.default_rng(0)

print("== instance alignment (cross-view InfoNCE) ==")
b = 5
z_same = np.tile(l2_normalize(np.ones(4)), (b, 1))
loss, _, _ = unsup_contrastive(z_same, z_same.copy(), tau_u=0.07)
print(f"  every row identical -> loss = ln b: {loss:.6f} vs {math.log(b):.6f}")

print("\n== label-aware alignment ==")
labels = np.array([0, 0, 0, 1, 2])
mask = np.array([True, True, True, True, False])
loss, _, _ = sup_contrastive(z_same, z_same.copy(), labels, mask, tau_c=1.0)
print("  identical embeddings, anchors = labeled with a same-label partner")
print(f"  loss = {loss:.6f}; the lone class-1 anchor and the unlabeled row are skipped")

print("\n== batch-mean entropy (kept HIGH to stop pseudo-label collapse) ==")
one_hots = np.eye(4)
value, _, _ = mean_entropy_reg(one_hots, one_hots.copy())
print(f"  four sharp predictions, one per class -> H(mean) = ln 4 = {value:.6f}")
collapsed = np.tile(np.array([1.0, 0, 0, 0]), (4, 1))
value, _, _ = mean_entropy_reg(collapsed, collapsed.copy())
print(f"  all mass on one class -> H(mean) = {value:.6f} (the degenerate optimum it penalizes)")

print("\n== dual-view consistency (KL, second view frozen) ==")
p1 = np.array([[1.0, 0.0]])
p2 = np.array([[0.5, 0.5]])
loss, _ = dkl_loss(p1, p2)
print(f"  KL([1,0] || [.5,.5]) = {loss:.6f} (= ln 2); identical views give 0")

print("\n== selecting confident known-class predictions in unlabeled data ==")
dists = np.array([
    [0.92, 0.05, 0.03],   # unlabeled, confident, predicted class 0 (known)
    [0.92, 0.05, 0.03],   # same prediction but labeled -> excluded
    [0.60, 0.30, 0.10],   # below the 0.85 threshold
    [0.05, 0.03, 0.92],   # confident but predicted class 2 (novel)
])
batch_mask = np.array([False, True, False, False])
sel = select_known(dists, batch_mask, known_set={0, 1}, delta=0.85)
print(f"  known_mask = {sel.known_mask.tolist()}  (only row 0 qualifies)")

print("\n== running-mean margins ==")
state = init_ema(k=4, momentum=0.9)
skewed = np.tile(np.array([0.55, 0.25, 0.15, 0.05]), (8, 1))
for _ in range(20):
    state, margins = update_ema_and_margins(state, skewed, lambda_ler=0.4)
print(f"  running mean -> {state.p_tilde.round(3)}")
print(f"  margins      -> {margins.round(3)}  (rare classes get larger offsets)")

print("\n== the local entropy term with margins ==")
logits = rng.uniform(-1, 1, size=(4, 4))
sel_all = select_known(softmax_temp(logits, 0.1), np.zeros(4, dtype=bool), {0, 1, 2, 3}, 0.0 + 1e-9)
loss_map, _ = ler_loss(logits, sel_all, margins, tau_o=0.05, use_map=True)
loss_plain, _ = ler_loss(logits, sel_all, np.zeros(4), tau_o=0.05, use_map=True)
print(f"  with margins: {loss_map:.4f}; zero margins reduce to target entropy: {loss_plain:.4f}")
