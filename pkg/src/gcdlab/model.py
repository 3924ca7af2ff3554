"""Small encoder + projection head + prototype classifier with exact backprop.

Forward per view: x -> tanh(x W1 + b1) W2 + b2 = h; class scores are cosine
similarities between h/||h|| and normalized prototype rows; the projection
z = normalize(h Wp + bp) feeds the contrastive losses.  Softmax is never
applied here; each loss picks its own temperature.

Gradients are hand-derived, including the L2-normalization Jacobians of h,
z and the prototype rows.  The finite-difference oracle in numerics is the
safety net for all of it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .numerics import l2_normalize, l2_normalize_backward
from .synthdata import Batch

CHECKPOINT_FORMAT = "gcdlab-checkpoint-v1"

PARAM_FIELDS = ("w1", "b1", "w2", "b2", "wp", "bp", "prototypes")


@dataclass
class ModelParams:
    w1: np.ndarray          # d x hidden
    b1: np.ndarray          # hidden
    w2: np.ndarray          # hidden x feat
    b2: np.ndarray          # feat
    wp: np.ndarray          # feat x proj
    bp: np.ndarray          # proj
    prototypes: np.ndarray  # K x feat

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(**{f: getattr(self, f).copy() for f in PARAM_FIELDS})


@dataclass
class ParamGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wp: np.ndarray
    bp: np.ndarray
    prototypes: np.ndarray


@dataclass
class ViewCache:
    x: np.ndarray         # b x d input view
    t: np.ndarray         # b x hidden, tanh activations
    h: np.ndarray         # b x feat
    h_hat: np.ndarray     # b x feat, unit rows
    z_pre: np.ndarray     # b x proj, before normalization
    z: np.ndarray         # b x proj, unit rows
    logits: np.ndarray    # b x K cosine similarities


@dataclass
class ForwardCache:
    view1: ViewCache
    view2: ViewCache
    proto_hat: np.ndarray  # K x feat, unit rows


def zero_grads(params: ModelParams) -> ParamGrads:
    return ParamGrads(**{f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS})


def init_params(dim: int, hidden: int, feat: int, proj: int, k: int, seed: int) -> ModelParams:
    """Fan-in scaled uniform init for the affine maps; unit-norm Gaussian
    prototypes.  Deterministic per seed."""
    for name, v in (("dim", dim), ("hidden", hidden), ("feat", feat), ("proj", proj), ("k", k)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    rng = np.random.default_rng(seed)

    def affine(n_in, n_out):
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out))
        b = rng.uniform(-bound, bound, size=n_out)
        return w, b

    w1, b1 = affine(dim, hidden)
    w2, b2 = affine(hidden, feat)
    wp, bp = affine(feat, proj)
    prototypes = l2_normalize(rng.normal(size=(k, feat)))
    return ModelParams(w1=w1, b1=b1, w2=w2, b2=b2, wp=wp, bp=bp, prototypes=prototypes)


def _forward_view(params: ModelParams, x: np.ndarray, proto_hat: np.ndarray) -> ViewCache:
    t = np.tanh(x @ params.w1 + params.b1)
    h = t @ params.w2 + params.b2
    h_hat = l2_normalize(h)
    z_pre = h @ params.wp + params.bp
    z = l2_normalize(z_pre)
    logits = h_hat @ proto_hat.T
    return ViewCache(x=x, t=t, h=h, h_hat=h_hat, z_pre=z_pre, z=z, logits=logits)


def forward_features(params: ModelParams, x: np.ndarray) -> ViewCache:
    """Single clean pass over raw feature rows (no augmentation, no pairing)."""
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input dim {x.shape[1]} does not match model dim {params.input_dim}")
    return _forward_view(params, x, l2_normalize(params.prototypes))


def forward(params: ModelParams, batch: Batch) -> ForwardCache:
    """Run both views; keeps every intermediate needed for exact backprop."""
    if batch.view1.shape[1] != params.input_dim:
        raise ValueError(
            f"batch dim {batch.view1.shape[1]} does not match model input dim {params.input_dim}"
        )
    proto_hat = l2_normalize(params.prototypes)
    return ForwardCache(
        view1=_forward_view(params, batch.view1, proto_hat),
        view2=_forward_view(params, batch.view2, proto_hat),
        proto_hat=proto_hat,
    )


def _backward_view(
    params: ModelParams,
    view: ViewCache,
    proto_hat: np.ndarray,
    g_logits: np.ndarray,
    g_z: np.ndarray,
    grads: ParamGrads,
) -> np.ndarray:
    """Accumulate one view's parameter grads; returns dL/d(proto_hat)."""
    # classifier branch: logits = h_hat . proto_hat^T
    g_h_hat = g_logits @ proto_hat
    g_proto_hat = g_logits.T @ view.h_hat
    g_h = l2_normalize_backward(view.h, g_h_hat)

    # projection branch: z = normalize(h Wp + bp)
    g_z_pre = l2_normalize_backward(view.z_pre, g_z)
    grads.wp += view.h.T @ g_z_pre
    grads.bp += g_z_pre.sum(axis=0)
    g_h += g_z_pre @ params.wp.T

    # encoder: h = tanh(x W1 + b1) W2 + b2
    grads.w2 += view.t.T @ g_h
    grads.b2 += g_h.sum(axis=0)
    g_t = g_h @ params.w2.T
    g_a1 = g_t * (1.0 - view.t**2)
    grads.w1 += view.x.T @ g_a1
    grads.b1 += g_a1.sum(axis=0)
    return g_proto_hat


def backward(
    params: ModelParams,
    cache: ForwardCache,
    g_logits1: np.ndarray,
    g_logits2: np.ndarray,
    g_z1: np.ndarray,
    g_z2: np.ndarray,
) -> ParamGrads:
    """Exact gradients for every parameter given loss grads at the cache
    outputs.  Prototypes receive gradient only through the logits."""
    grads = zero_grads(params)
    g_proto_hat = _backward_view(params, cache.view1, cache.proto_hat, g_logits1, g_z1, grads)
    g_proto_hat += _backward_view(params, cache.view2, cache.proto_hat, g_logits2, g_z2, grads)
    grads.prototypes += l2_normalize_backward(params.prototypes, g_proto_hat)
    return grads


# -- flat-vector helpers for gradient checks and the optimizer ---------------

def params_to_vector(params: ModelParams | ParamGrads) -> np.ndarray:
    return np.concatenate([np.asarray(getattr(params, f)).reshape(-1) for f in PARAM_FIELDS])


def vector_to_params(vec: np.ndarray, template: ModelParams) -> ModelParams:
    out = {}
    offset = 0
    for f in PARAM_FIELDS:
        shape = getattr(template, f).shape
        size = int(np.prod(shape))
        out[f] = vec[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != vec.size:
        raise ValueError(f"vector of size {vec.size} does not fit template ({offset})")
    return ModelParams(**out)


# -- checkpoint format --------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str, config_hash: str = "") -> None:
    """JSON dump of every parameter matrix.  Python float repr round-trips
    bit-exactly, so load(save(p)) == p to the last bit."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": config_hash,
        "arrays": {
            f: {
                "shape": list(getattr(params, f).shape),
                "data": getattr(params, f).reshape(-1).tolist(),
            }
            for f in PARAM_FIELDS
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ModelParams, str]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    arrays = {}
    for f in PARAM_FIELDS:
        entry = payload["arrays"][f]
        arrays[f] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return ModelParams(**arrays), payload.get("config_hash", "")


def config_fingerprint(config_dict: dict) -> str:
    """Stable hash used to stamp checkpoints with their training config."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
