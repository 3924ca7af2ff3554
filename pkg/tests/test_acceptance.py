"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one `[criterion N] PASS/FAIL` line (visible with -s or in
captured output) and then asserts.  Criterion 7's dataset tuning is part of
the fixture here: the experiment config below is the certified setting in
which the no-extras baseline peaks and then loses >= 5 points of old-class
accuracy.
"""

import math
import statistics
import time

import numpy as np
import pytest

from gcdlab.cli import main as cli_main
from gcdlab.config import config_from_dict, parse_config_text
from gcdlab.evaluation import hungarian_accuracy, kmeans
from gcdlab.harness import run_experiment
from gcdlab.losses import (
    dkl_loss,
    init_ema,
    mean_entropy_reg,
    select_known,
    sup_contrastive,
    total_loss,
    unsup_contrastive,
)
from gcdlab.model import (
    forward,
    init_params,
    params_to_vector,
    vector_to_params,
)
from gcdlab.numerics import (
    cross_entropy,
    entropy,
    finite_difference_gradient,
    kl_div,
    norm_relative_error,
    softmax_temp,
)
from gcdlab.report import read_metrics_csv
from gcdlab.synthdata import Batch, generate_dataset
from gcdlab.trainer import (
    Toggles,
    TrainConfig,
    compute_step,
    cosine_lr,
    teacher_temperature,
)
from oracles import baseline_objective, brute_force_assignment_value, brute_force_selection


def report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num}] {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


def toy_problem(seed: int, b=6, k=5, d=8, delta=0.25):
    rng = np.random.default_rng(seed)
    params = init_params(d, 10, 6, 4, k, seed=seed)
    base = rng.normal(size=(b, d))
    batch = Batch(
        view1=base + rng.normal(size=(b, d)) * 0.05,
        view2=base + rng.normal(size=(b, d)) * 0.05,
        labels=rng.integers(0, 3, size=b),
        mask=np.arange(b) % 2 == 0,
        sample_ids=np.arange(b),
    )
    cfg = TrainConfig(delta=delta, batch_size=b, hidden_dim=10, feature_dim=6,
                      proj_dim=4, seed=seed)
    return params, batch, cfg, frozenset({0, 1, 2})


def test_criterion_1_gradient_correctness():
    # analytic gradient of the full objective (all extras on) vs central
    # finite differences; rel err < 1e-4, runtime < 10 s
    start = time.time()
    params, batch, cfg, known = toy_problem(seed=1)
    ema = init_ema(params.n_classes, cfg.ema_momentum)
    tau_t = teacher_temperature(0, cfg)
    result = compute_step(params, batch, cfg, tau_t, ema, known)
    sel = result.selection
    assert sel is not None and sel.known_mask.sum() >= 1

    b = batch.size
    base_cache = forward(params, batch)
    q1 = softmax_temp(base_cache.view2.logits, tau_t)
    q2 = softmax_temp(base_cache.view1.logits, tau_t)
    base_p2 = softmax_temp(base_cache.view2.logits, cfg.tau_s)
    logits_all = np.vstack([base_cache.view1.logits, base_cache.view2.logits])
    frozen_targets = softmax_temp(logits_all[sel.known_mask] / cfg.tau_o, 1.0)
    margins = result.margins
    labeled = np.flatnonzero(batch.mask)
    one_hot = np.zeros((labeled.size, params.n_classes))
    one_hot[np.arange(labeled.size), batch.labels[labeled]] = 1.0

    def frozen_total(theta):
        p = vector_to_params(theta, params)
        cache = forward(p, batch)
        ru = unsup_contrastive(cache.view1.z, cache.view2.z, cfg.tau_u)[0]
        rs = sup_contrastive(cache.view1.z, cache.view2.z, batch.labels,
                             batch.mask, cfg.tau_c)[0]
        p1 = softmax_temp(cache.view1.logits, cfg.tau_s)
        p2 = softmax_temp(cache.view2.logits, cfg.tau_s)
        cu = float((np.sum(cross_entropy(q1, p1)) + np.sum(cross_entropy(q2, p2))) / (2 * b))
        cs = float((np.sum(cross_entropy(one_hot, p1[labeled]))
                    + np.sum(cross_entropy(one_hot, p2[labeled]))) / (2 * labeled.size))
        me = mean_entropy_reg(p1, p2)[0]
        dk = dkl_loss(p1, base_p2)[0]
        live = np.vstack([cache.view1.logits, cache.view2.logits])
        shifted = softmax_temp(live[sel.known_mask] / cfg.tau_o + margins, 1.0)
        ler = float(np.sum(cross_entropy(frozen_targets, shifted)) / sel.known_mask.sum())
        return total_loss(ru, rs, cu, cs, me, dk, ler,
                          cfg.lam, cfg.epsilon, cfg.alpha, cfg.beta).total

    numeric = finite_difference_gradient(frozen_total, params_to_vector(params))
    err = norm_relative_error(params_to_vector(result.grads), numeric)
    elapsed = time.time() - start
    report(1, err < 1e-4 and elapsed < 10.0,
           f"max rel err {err:.2e} (< 1e-4), runtime {elapsed:.2f}s (< 10s)")


def test_criterion_2_baseline_reduction():
    # beta=0 and the dual-view KL off: per-batch total equals an
    # independently coded baseline objective within 1e-12, 100 random batches
    worst = 0.0
    for trial in range(100):
        params, batch, cfg, known = toy_problem(seed=trial)
        cfg.beta = 0.0
        cfg.toggles = Toggles(ler=False, map=False, dkl=False)
        ema = init_ema(params.n_classes, cfg.ema_momentum)
        tau_t = teacher_temperature(0, cfg)
        result = compute_step(params, batch, cfg, tau_t, ema, known)
        cache = forward(params, batch)
        expected = baseline_objective(
            cache.view1.z, cache.view2.z, cache.view1.logits, cache.view2.logits,
            batch.labels, batch.mask, cfg.lam, cfg.epsilon,
            cfg.tau_u, cfg.tau_c, cfg.tau_s, tau_t,
        )
        worst = max(worst, abs(result.breakdown.total - expected))
    report(2, worst < 1e-12, f"max |total - reference| {worst:.2e} (< 1e-12) over 100 batches")


def test_criterion_3_hungarian_oracle():
    # 500 random contingency matrices with K <= 6: assignment value equals
    # the exhaustive permutation maximum, exactly
    rng = np.random.default_rng(3)
    all_equal = True
    for _ in range(500):
        k = int(rng.integers(2, 7))
        w = rng.integers(0, 20, size=(k, k))
        pred, truth = [], []
        for i in range(k):
            for j in range(k):
                pred += [i] * int(w[i, j])
                truth += [j] * int(w[i, j])
        if not pred:
            continue
        pred, truth = np.array(pred), np.array(truth)
        acc_all, _, _, _ = hungarian_accuracy(pred, truth, set(), n_classes=k)
        if round(acc_all * pred.size) != brute_force_assignment_value(w):
            all_equal = False
            break
    report(3, all_equal, "assignment equals exhaustive permutation max on 500 matrices")


def test_criterion_4_analytic_identities():
    checks = [
        abs(entropy(np.array([0.0, 1.0, 0.0]))),
        abs(entropy(np.full(4, 0.25)) - math.log(4)),
        abs(cross_entropy(np.array([0.0, 1.0]), np.array([0.0, 1.0]))),
        abs(cross_entropy(np.array([1.0, 0, 0, 0]), np.full(4, 0.25)) - math.log(4)),
        abs(kl_div(np.array([1.0, 0.0]), np.array([0.5, 0.5])) - math.log(2)),
    ]
    rng = np.random.default_rng(4)
    for _ in range(200):
        k = int(rng.integers(2, 9))
        p = rng.random(k) + 1e-6
        p /= p.sum()
        q = rng.random(k) + 1e-6
        q /= q.sum()
        checks.append(abs(kl_div(p, p)))
        gibbs_gap = cross_entropy(p, q) - entropy(p)
        checks.append(max(0.0, -gibbs_gap))  # must be >= 0
        checks.append(abs(gibbs_gap - kl_div(p, q)))
    worst = max(checks)
    report(4, worst < 1e-9, f"worst identity error {worst:.2e} (< 1e-9)")


def test_criterion_5_schedule_pins():
    cfg = TrainConfig()
    pins = [
        abs(cosine_lr(0, 200, 0.1) - 0.1),
        abs(cosine_lr(200, 200, 0.1) - 0.0),
        abs(cosine_lr(100, 200, 0.1) - 0.05),
        abs(teacher_temperature(0, cfg) - 0.07),
        abs(teacher_temperature(15, cfg) - 0.055),
        abs(teacher_temperature(30, cfg) - 0.04),
        abs(teacher_temperature(200, cfg) - 0.04),
    ]
    worst = max(pins)
    report(5, worst < 1e-12, f"worst schedule pin error {worst:.2e} (< 1e-12)")


def test_criterion_6_selection_oracle():
    rng = np.random.default_rng(6)
    all_equal = True
    for _ in range(1000):
        n = int(rng.integers(1, 16))
        k = int(rng.integers(2, 8))
        dists = rng.random((n, k)) + 1e-6
        dists /= dists.sum(axis=1, keepdims=True)
        mask = rng.random(n) < 0.4
        known = set(rng.choice(k, size=int(rng.integers(1, k)), replace=False).tolist())
        delta = float(rng.uniform(0.05, 1.0))
        sel = select_known(dists, mask, known, delta)
        bh, bp, bk = brute_force_selection(dists, mask, known, delta)
        if not (np.array_equal(sel.high_conf, bh) and np.array_equal(sel.pred_labels, bp)
                and np.array_equal(sel.known_mask, bk)):
            all_equal = False
            break
    report(6, all_equal, "selection equals brute-force re-scan on 1000 batches")


# The certified forgetting fixture: the no-extras baseline peaks early and
# bleeds old-class accuracy; the full method recovers it.  Dataset and
# trainer settings were tuned for that behaviour and are frozen here.
FORGETTING_EXPERIMENT = {
    "dataset": {
        "n_known": 10, "n_novel": 10, "per_class": 60, "dim": 20,
        "separation": 2.2, "noise": 0.5, "labeled_ratio": 0.5, "seed": 0,
    },
    "train": {
        "epochs": 100, "batch_size": 32, "epsilon": 1.5,
        "aug_strength": 0.15, "aug_dropout": 0.0,
        "beta": 2.0, "delta": 0.85,
    },
    "ablation": ["simgcd", "legogcd"],
    "sweep": {"seed": [0, 1, 2, 3, 4]},
}


@pytest.fixture(scope="module")
def forgetting_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("forgetting")
    cfg = config_from_dict({**FORGETTING_EXPERIMENT, "output_dir": str(out)})
    start = time.time()
    status = run_experiment(cfg)
    elapsed = time.time() - start
    assert status == 0
    histories = {}
    for variant in ("simgcd", "legogcd"):
        for seed in range(5):
            tag = f"{variant}_seed{seed}"
            histories[tag] = read_metrics_csv(str(out / tag / f"metrics_{tag}.csv"))
    return histories, elapsed


def test_criterion_7_forgetting_mitigation(forgetting_runs):
    histories, elapsed = forgetting_runs
    per_run = elapsed / 10.0
    drops, d_old, d_new = [], [], []
    for seed in range(5):
        base = histories[f"simgcd_seed{seed}"]
        lego = histories[f"legogcd_seed{seed}"]
        base_old = [r["acc_old"] for r in base]
        drops.append((max(base_old) - base_old[-1]) * 100)
        d_old.append((lego[-1]["acc_old"] - base[-1]["acc_old"]) * 100)
        d_new.append((base[-1]["acc_new"] - lego[-1]["acc_new"]) * 100)
    med_drop = statistics.median(drops)
    med_d_old = statistics.median(d_old)
    med_new_cost = statistics.median(d_new)
    ok = (med_drop >= 5.0 and med_d_old >= 2.0 and med_new_cost <= 2.0
          and per_run < 120.0)
    report(7, ok,
           f"baseline decline median {med_drop:.1f}pts (>= 5), old-class gain "
           f"median {med_d_old:+.1f}pts (>= +2), new-class cost median "
           f"{med_new_cost:+.1f}pts (<= 2), {per_run:.1f}s/run (< 120s)")


def test_criterion_8_known_count_direction(forgetting_runs):
    histories, _ = forgetting_runs
    diffs = []
    for seed in range(5):
        base = histories[f"simgcd_seed{seed}"][-1]["known_count"]
        lego = histories[f"legogcd_seed{seed}"][-1]["known_count"]
        diffs.append(lego - base)
    med = statistics.median(diffs)
    report(8, med >= 0, f"median final known-count margin {med:+.0f} (>= 0)")


DETERMINISM_CONFIG = """
dataset:
  n_known: 3
  n_novel: 2
  per_class: 8
  dim: 6
  separation: 3.0
  noise: 1.0
train:
  epochs: 3
  batch_size: 8
  lr0: 0.05
  hidden_dim: 8
  feature_dim: 6
  proj_dim: 4
sweep:
  beta: [0.0, 2.0]
checkpoint_every: 2
output_dir: {out}
"""


def test_criterion_9_run_determinism(tmp_path):
    def snapshot(out_dir):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(DETERMINISM_CONFIG.format(out=out_dir), encoding="utf-8")
        assert cli_main(["run", str(cfg_path)]) == 0
        files = {}
        for tag in ("beta0.0_seed0", "beta2.0_seed0"):
            for name in (f"metrics_{tag}.csv", "checkpoint_final.json",
                         "checkpoint_epoch2.json"):
                p = out_dir / tag / name
                files[f"{tag}/{name}"] = p.read_bytes()
        files["summary.csv"] = (out_dir / "summary.csv").read_bytes()
        return files

    first = snapshot(tmp_path / "run1")
    second = snapshot(tmp_path / "run2")
    identical = first.keys() == second.keys() and all(
        first[k] == second[k] for k in first
    )
    report(9, identical, f"{len(first)} output files byte-identical across executions")


def test_criterion_10_kmeans_sanity():
    accs = {}
    for k in (2, 5, 10):
        # separation 10x the noise scale
        ds = generate_dataset(k, 0, 30, dim=8, separation=10.0, noise=1.0,
                              labeled_ratio=0.5, seed=k)
        assign = kmeans(ds.features, k, seed=0)
        accs[k], _, _, _ = hungarian_accuracy(assign, ds.labels, set())
    ok = all(a == 1.0 for a in accs.values())
    report(10, ok, f"blob recovery ACC {accs} (== 1.0 for K in 2,5,10)")
