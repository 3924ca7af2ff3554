"""Clustering-accuracy evaluation with optimal cluster-to-class matching.

A single assignment is computed over all unlabeled samples and reused for
the old/new splits, which is the standard protocol when reporting separate
accuracies for previously known and newly discovered classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import linear_sum_assignment

from .losses import LossBreakdown
from .model import ModelParams, forward_features
from .numerics import softmax_temp
from .synthdata import GcdDataset

if TYPE_CHECKING:  # avoid an import cycle; trainer imports this module
    from .trainer import TrainConfig


@dataclass(frozen=True)
class EpochMetrics:
    acc_all: float
    acc_old: float
    acc_new: float
    loss: LossBreakdown = field(default_factory=LossBreakdown)
    known_count: int = 0
    epoch: int = 0
    lr: float = 0.0
    tau_t: float = 0.0


def hungarian_accuracy(
    pred: np.ndarray,
    truth: np.ndarray,
    old_set: frozenset[int] | set[int],
    n_classes: int | None = None,
) -> tuple[float, float, float, dict[int, int]]:
    """Accuracy after the optimal one-to-one cluster-to-class matching.

    Builds the K x K contingency matrix, solves the maximum assignment, and
    scores the old (true class in old_set) and new subsets with that same
    single assignment.  Returns (acc_all, acc_old, acc_new, cluster->class).
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be equal-length 1-d arrays")
    if pred.size == 0:
        raise ValueError("cannot score an empty prediction set")
    k = int(max(pred.max(), truth.max())) + 1
    if n_classes is not None:
        if k > n_classes:
            raise ValueError(f"ids up to {k - 1} exceed the declared {n_classes} classes")
        k = n_classes

    w = np.zeros((k, k), dtype=np.int64)
    np.add.at(w, (pred, truth), 1)
    rows, cols = linear_sum_assignment(w, maximize=True)
    mapping = {int(r): int(c) for r, c in zip(rows, cols)}

    mapped = np.array([mapping[int(c)] for c in pred])
    correct = mapped == truth
    old = np.isin(truth, np.asarray(sorted(old_set), dtype=np.int64))

    acc_all = float(correct.mean())
    acc_old = float(correct[old].mean()) if old.any() else 0.0
    acc_new = float(correct[~old].mean()) if (~old).any() else 0.0
    return acc_all, acc_old, acc_new, mapping


def _kmeans_pp_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy plus-plus seeding: several distance-weighted candidates per
    step, keeping the one that shrinks the potential the most."""
    n = x.shape[0]
    n_trials = 2 + int(np.log(k)) if k > 1 else 1
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest_sq = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest_sq.sum()
        if total <= 0:
            candidates = rng.integers(n, size=n_trials)
        else:
            candidates = rng.choice(n, size=n_trials, p=closest_sq / total)
        best_idx, best_closest, best_pot = None, None, np.inf
        for c in candidates:
            cand_closest = np.minimum(closest_sq, np.sum((x - x[c]) ** 2, axis=1))
            pot = cand_closest.sum()
            if pot < best_pot:
                best_idx, best_closest, best_pot = c, cand_closest, pot
        centroids[j] = x[best_idx]
        closest_sq = best_closest
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iters: int) -> np.ndarray:
    n, k = x.shape[0], centroids.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iters):
        d2 = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                # re-seed an emptied cluster to the point farthest from its
                # assigned centroid
                worst = int(np.argmax(d2[np.arange(n), assign]))
                centroids[j] = x[worst]
                assign[worst] = j
    return assign


def kmeans(
    features: np.ndarray, k: int, seed: int, max_iters: int = 100, n_init: int = 10
) -> np.ndarray:
    """Greedy plus-plus seeding, Lloyd iterations to an assignment fixpoint,
    best of n_init restarts by inertia.  Deterministic per seed."""
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    best_assign, best_inertia = None, np.inf
    for _ in range(max(1, n_init)):
        assign = _lloyd(x, _kmeans_pp_seeds(x, k, rng), max_iters)
        inertia = kmeans_inertia(x, assign)
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return best_assign


def kmeans_inertia(features: np.ndarray, assign: np.ndarray) -> float:
    x = np.asarray(features, dtype=np.float64)
    total = 0.0
    for j in np.unique(assign):
        members = x[assign == j]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def count_known_high_conf(
    dists: np.ndarray, known_set: frozenset[int] | set[int], delta: float
) -> int:
    """Unlabeled samples whose top probability clears delta on a known class."""
    if dists.size == 0:
        return 0
    known_arr = np.asarray(sorted(known_set), dtype=np.int64)
    confident = dists.max(axis=1) >= delta
    predicted_known = np.isin(dists.argmax(axis=1), known_arr)
    return int(np.sum(confident & predicted_known))


def predict_unlabeled(params: ModelParams, dataset: GcdDataset, tau_s: float):
    """Clean (un-augmented) forward over the unlabeled subset.

    Returns (pred class ids, student distributions, true labels).
    """
    unlabeled = ~dataset.labeled_flags
    view = forward_features(params, dataset.features[unlabeled])
    dists = softmax_temp(view.logits, tau_s)
    return dists.argmax(axis=1), dists, dataset.labels[unlabeled]


def evaluate(params: ModelParams, dataset: GcdDataset, cfg: "TrainConfig") -> EpochMetrics:
    """Accuracy and the confident-known-sample count over the unlabeled data."""
    pred, dists, truth = predict_unlabeled(params, dataset, cfg.tau_s)
    acc_all, acc_old, acc_new, _ = hungarian_accuracy(
        pred, truth, dataset.known_classes, n_classes=dataset.n_classes
    )
    known_count = count_known_high_conf(dists, dataset.known_classes, cfg.delta)
    return EpochMetrics(acc_all=acc_all, acc_old=acc_old, acc_new=acc_new,
                        known_count=known_count)
