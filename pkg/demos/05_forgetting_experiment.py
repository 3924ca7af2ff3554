"""The headline experiment: known-class accuracy erodes under the plain
objective and the local-entropy machinery recovers it.

Trains two arms on the default twin-cluster dataset and prints the
trajectories side by side.  About a minute of CPU time.

Run:  python3 demos/05_forgetting_experiment.py
"""

import numpy as np

from gcdlab.synthdata import generate_dataset
from gcdlab.trainer import Toggles, TrainConfig, train

EPOCHS = 100

ds = generate_dataset(n_known=10, n_novel=10, per_class=60, dim=20,
                      separation=2.2, noise=0.5, labeled_ratio=0.5, seed=0)
print(f"dataset: {ds.n_samples} samples, {ds.n_classes} classes, "
      f"{int((~ds.labeled_flags).sum())} unlabeled")

common = dict(epochs=EPOCHS, batch_size=32, epsilon=1.5,
              aug_strength=0.15, aug_dropout=0.0, seed=0)
arms = {
    "baseline": TrainConfig(toggles=Toggles(ler=False, map=False, dkl=False), **common),
    "full":     TrainConfig(beta=2.0, delta=0.85,
                            toggles=Toggles(ler=True, map=True, dkl=True), **common),
}

histories = {}
for name, cfg in arms.items():
    print(f"\ntraining {name} arm ({EPOCHS} epochs)...")
    histories[name] = train(ds, cfg).history

print(f"\n{'epoch':>5} | {'base old':>8} {'base new':>8} {'base #conf':>10} | "
      f"{'full old':>8} {'full new':>8} {'full #conf':>10}")
for e in list(range(0, EPOCHS, 10)) + [EPOCHS - 1]:
    b = histories["baseline"][e]
    f = histories["full"][e]
    print(f"{e:>5} | {b.acc_old:>8.3f} {b.acc_new:>8.3f} {b.known_count:>10} | "
          f"{f.acc_old:>8.3f} {f.acc_new:>8.3f} {f.known_count:>10}")

base_old = [m.acc_old for m in histories["baseline"]]
peak = max(base_old)
print(f"\nbaseline old-class accuracy: peak {peak:.3f} at epoch {int(np.argmax(base_old))}, "
      f"final {base_old[-1]:.3f}  (decline {100 * (peak - base_old[-1]):.1f} points)")
final_b = histories["baseline"][-1]
final_f = histories["full"][-1]
print(f"final old-class margin of the full method: "
      f"{100 * (final_f.acc_old - final_b.acc_old):+.1f} points")
print(f"final new-class margin:                    "
      f"{100 * (final_f.acc_new - final_b.acc_new):+.1f} points")
print(f"confident known-class samples at the end:  "
      f"{final_f.known_count} vs {final_b.known_count}")
print("\n(for the 5-seed median version of this comparison, see "
      "tests/test_acceptance.py or run the CLI with an ablation config)")
