"""Synthetic feature datasets with a labeled/unlabeled split and dual-view batches.

Gaussian class clusters stand in for backbone embeddings: class means are
rejection-sampled on a hypersphere of radius `separation`, samples get
isotropic noise of std `noise`.  Known classes have a fixed fraction of
labeled samples; novel classes are entirely unlabeled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

MEAN_REJECTION_ATTEMPTS = 10_000


class GenerationError(RuntimeError):
    """Raised when rejection sampling cannot satisfy the separation constraint."""


@dataclass(frozen=True)
class GcdDataset:
    features: np.ndarray          # N x d, float64
    labels: np.ndarray            # N, int class ids in [0, K)
    known_classes: frozenset[int]
    novel_classes: frozenset[int]
    labeled_flags: np.ndarray     # N, bool; True = labeled

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.known_classes) + len(self.novel_classes)

    def validate(self) -> None:
        n = self.n_samples
        if self.labels.shape != (n,) or self.labeled_flags.shape != (n,):
            raise ValueError("labels/labeled_flags length mismatch with features")
        if self.known_classes & self.novel_classes:
            raise ValueError("known and novel class sets overlap")
        all_classes = self.known_classes | self.novel_classes
        if set(np.unique(self.labels).tolist()) - all_classes:
            raise ValueError("labels outside known ∪ novel")
        labeled_labels = set(self.labels[self.labeled_flags].tolist())
        if labeled_labels - self.known_classes:
            raise ValueError("labeled sample with a non-known class")
        for c in sorted(all_classes):
            unlabeled = np.sum((self.labels == c) & ~self.labeled_flags)
            if unlabeled == 0:
                raise ValueError(f"class {c} has no unlabeled samples")


@dataclass(frozen=True)
class Batch:
    view1: np.ndarray       # b x d
    view2: np.ndarray       # b x d
    labels: np.ndarray      # b, only meaningful where mask is True
    mask: np.ndarray        # b, bool; True = labeled
    sample_ids: np.ndarray  # b, indices into the source dataset

    @property
    def size(self) -> int:
        return self.view1.shape[0]


def _sample_class_means(
    n_known: int, n_novel: int, dim: int, separation: float, noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Class means with every pairwise distance >= separation*noise.

    Known means are rejection-sampled on the sphere of radius `separation`.
    Each novel mean sits at exactly the floor distance from a paired known
    mean (novel i pairs with known i mod n_known): novel categories are
    fine-grained neighbours of known ones, which is what makes the
    known/novel confusion at low separation possible at all.
    """
    min_dist = separation * noise
    means = np.zeros((n_known + n_novel, dim))
    count = 0
    for _ in range(MEAN_REJECTION_ATTEMPTS):
        if count < n_known:
            v = rng.normal(size=dim)
            v = v / max(np.linalg.norm(v), 1e-12) * separation
        else:
            partner = means[(count - n_known) % n_known]
            u = rng.normal(size=dim)
            v = partner + u / max(np.linalg.norm(u), 1e-12) * min_dist
        if count == 0 or np.min(np.linalg.norm(means[:count] - v, axis=1)) >= min_dist * (1 - 1e-12):
            means[count] = v
            count += 1
            if count == n_known + n_novel:
                return means
    raise GenerationError(
        f"could not place {n_known + n_novel} class means with pairwise distance "
        f">= {min_dist:.3g} after {MEAN_REJECTION_ATTEMPTS} attempts"
    )


def generate_dataset(
    n_known: int,
    n_novel: int,
    per_class: int,
    dim: int,
    separation: float,
    noise: float,
    labeled_ratio: float,
    seed: int,
) -> GcdDataset:
    """Gaussian-cluster dataset with the standard half-labeled split.

    Classes 0..n_known-1 are known; exactly floor(labeled_ratio*per_class)
    samples of each known class are labeled.  Novel classes are unlabeled.
    Deterministic per seed.
    """
    if n_known < 1:
        raise ValueError("need at least one known class")
    if n_novel < 0:
        raise ValueError("n_novel must be >= 0")
    if per_class < 4:
        raise ValueError("per_class must be >= 4")
    if not 0.0 < labeled_ratio < 1.0:
        raise ValueError("labeled_ratio must be in (0, 1)")
    if separation <= 0 or noise <= 0:
        raise ValueError("separation and noise must be positive")

    k = n_known + n_novel
    rng = np.random.default_rng(seed)
    means = _sample_class_means(n_known, n_novel, dim, separation, noise, rng)

    n = k * per_class
    features = np.zeros((n, dim))
    labels = np.zeros(n, dtype=np.int64)
    labeled = np.zeros(n, dtype=bool)
    n_labeled_per_class = int(labeled_ratio * per_class)
    for c in range(k):
        rows = slice(c * per_class, (c + 1) * per_class)
        features[rows] = means[c] + rng.normal(size=(per_class, dim)) * noise
        labels[rows] = c
        if c < n_known:
            labeled[c * per_class : c * per_class + n_labeled_per_class] = True

    ds = GcdDataset(
        features=features,
        labels=labels,
        known_classes=frozenset(range(n_known)),
        novel_classes=frozenset(range(n_known, k)),
        labeled_flags=labeled,
    )
    ds.validate()
    return ds


def augment_view(
    x: np.ndarray,
    strength: float,
    rng: np.random.Generator,
    dropout: float = 0.1,
) -> np.ndarray:
    """Additive Gaussian noise of std `strength`, then coordinate dropout.

    strength=0 with dropout=0 is the identity.  Feature-space stand-in for a
    stochastic view of the same sample.
    """
    if strength < 0:
        raise ValueError("strength must be >= 0")
    out = np.array(x, dtype=np.float64)
    if strength > 0:
        out += rng.normal(size=out.shape) * strength
    if dropout > 0:
        out *= rng.random(out.shape) >= dropout
    return out


def make_batches(
    dataset: GcdDataset,
    batch_size: int,
    strength: float,
    seed: int,
    dropout: float = 0.1,
) -> list[Batch]:
    """One epoch: seeded shuffle split into batches, last short batch kept.

    Each sample gets two independent augmentations; mask carries the
    dataset's labeled flags.
    """
    n = dataset.n_samples
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        ids = order[start : start + batch_size]
        base = dataset.features[ids]
        view1 = augment_view(base, strength, rng, dropout)
        view2 = augment_view(base, strength, rng, dropout)
        batches.append(
            Batch(
                view1=view1,
                view2=view2,
                labels=dataset.labels[ids].copy(),
                mask=dataset.labeled_flags[ids].copy(),
                sample_ids=ids.copy(),
            )
        )
    return batches


CSV_HEADER_PREFIX = ("label", "labeled")


def save_csv_dataset(dataset: GcdDataset, path: str) -> None:
    """Write the embedding CSV: header label,labeled,f0..f{d-1}."""
    d = dataset.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(CSV_HEADER_PREFIX) + [f"f{i}" for i in range(d)])
        for i in range(dataset.n_samples):
            row = [int(dataset.labels[i]), int(dataset.labeled_flags[i])]
            row += [repr(float(v)) for v in dataset.features[i]]
            writer.writerow(row)


def load_csv_dataset(path: str) -> GcdDataset:
    """Read the embedding CSV back into a dataset.

    Known classes are the ones that appear with labeled=1; everything else
    is novel.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:2]) != CSV_HEADER_PREFIX:
            raise ValueError(f"{path}: expected header starting with label,labeled")
        d = len(header) - 2
        if d < 1 or header[2:] != [f"f{i}" for i in range(d)]:
            raise ValueError(f"{path}: malformed feature columns in header")
        features, labels, flags = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != d + 2:
                raise ValueError(f"{path}:{line_no}: expected {d + 2} fields, got {len(row)}")
            labels.append(int(row[0]))
            if row[1] not in ("0", "1"):
                raise ValueError(f"{path}:{line_no}: labeled must be 0 or 1")
            flags.append(row[1] == "1")
            features.append([float(v) for v in row[2:]])
    if not features:
        raise ValueError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    flags_arr = np.asarray(flags, dtype=bool)
    known = frozenset(labels_arr[flags_arr].tolist())
    novel = frozenset(labels_arr.tolist()) - known
    ds = GcdDataset(
        features=np.asarray(features, dtype=np.float64),
        labels=labels_arr,
        known_classes=known,
        novel_classes=frozenset(novel),
        labeled_flags=flags_arr,
    )
    ds.validate()
    return ds
