"""Synthetic category-discovery datasets and dual-view batching.

Run:  python3 demos/02_synthetic_data.py
"""

import numpy as np

from gcdlab.synthdata import augment_view, generate_dataset, make_batches

ds = generate_dataset(n_known=5, n_novel=5, per_class=40, dim=20,
                      separation=2.2, noise=0.5, labeled_ratio=0.5, seed=0)

print("== the labeled/unlabeled split ==")
print(f"  samples: {ds.n_samples}, classes: {ds.n_classes} "
      f"({sorted(ds.known_classes)} known, {sorted(ds.novel_classes)} novel)")
print(f"  labeled: {int(ds.labeled_flags.sum())} (half of each known class)")
print(f"  unlabeled: {int((~ds.labeled_flags).sum())} "
      "(the other half of known + every novel sample)")

print("\n== geometry: novel classes are fine-grained twins of known ones ==")
means = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(ds.n_classes)])
for c in sorted(ds.novel_classes):
    partner = (c - len(ds.known_classes)) % len(ds.known_classes)
    d_twin = np.linalg.norm(means[c] - means[partner])
    others = [np.linalg.norm(means[c] - means[o]) for o in range(ds.n_classes)
              if o not in (c, partner)]
    print(f"  novel {c}: {d_twin:.2f} from its known twin {partner}, "
          f"{min(others):.2f} from anything else")

print("\n== augmentation: the stochastic 'views' of one sample ==")
x = ds.features[0]
rng = np.random.default_rng(1)
v1 = augment_view(x, strength=0.15, rng=rng, dropout=0.0)
v2 = augment_view(x, strength=0.15, rng=rng, dropout=0.0)
print(f"  ||view1 - x|| = {np.linalg.norm(v1 - x):.3f}, "
      f"||view2 - x|| = {np.linalg.norm(v2 - x):.3f} (independent draws)")
print(f"  strength 0, dropout 0 is the identity: "
      f"{np.array_equal(augment_view(x, 0.0, rng, dropout=0.0), x)}")

print("\n== one epoch of batches ==")
batches = make_batches(ds, batch_size=128, strength=0.15, seed=0, dropout=0.0)
print(f"  batch sizes: {[b.size for b in batches]} (short tail kept)")
ids = np.concatenate([b.sample_ids for b in batches])
print(f"  epoch covers each sample exactly once: {sorted(ids.tolist()) == list(range(ds.n_samples))}")
b0 = batches[0]
print(f"  labeled fraction in batch 0: {b0.mask.mean():.2f} "
      "(mask gates every use of batch labels)")
