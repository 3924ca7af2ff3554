"""Scalar/vector probability primitives shared by every other module.

All entropies and divergences are in nats.  Everything here is a pure
function of its inputs and safe to call from any thread.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# Floor applied to probabilities before taking logs.  Keeps sharpened
# distributions from producing -inf; tests account for it.
LOG_FLOOR = 1e-12

# Denominators smaller than this get the additive guard in l2_normalize.
NORM_GUARD = 1e-8


def softmax_temp(logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature softmax along the last axis, with max-subtraction.

    Invariant under adding a constant to all logits.  tau must be > 0.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    scaled = logits / tau
    scaled = scaled - np.max(scaled, axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> np.ndarray | float:
    """Shannon entropy -sum p log p along the last axis, 0*log(0) := 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(np.maximum(p, LOG_FLOOR)), 0.0)
    out = -np.sum(terms, axis=-1)
    return float(out) if out.ndim == 0 else out


def cross_entropy(target: np.ndarray, pred: np.ndarray) -> np.ndarray | float:
    """-sum target log pred along the last axis; pred floored at LOG_FLOOR."""
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    out = -np.sum(target * np.log(np.maximum(pred, LOG_FLOOR)), axis=-1)
    return float(out) if out.ndim == 0 else out


def kl_div(p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """KL(p || q) along the last axis; q floored at LOG_FLOOR, 0*log(0/q) := 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    log_q = np.log(np.maximum(q, LOG_FLOOR))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * (np.log(np.maximum(p, LOG_FLOOR)) - log_q), 0.0)
    out = np.sum(terms, axis=-1)
    return float(out) if out.ndim == 0 else out


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization with an additive guard for tiny norms."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    denom = np.where(norms < NORM_GUARD, norms + NORM_GUARD, norms)
    return v / denom


def l2_normalize_backward(v: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of l2_normalize: pull grad_out back through y = v / s.

    s is the guarded norm; ds/dv = v/||v|| in both branches, so
    dL/dv = (grad_out - (grad_out . y) * u) / s  with u = v/||v||.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    denom = np.where(norms < NORM_GUARD, norms + NORM_GUARD, norms)
    y = v / denom
    u = v / np.maximum(norms, LOG_FLOOR)
    dot = np.sum(grad_out * y, axis=-1, keepdims=True)
    return (grad_out - dot * u) / denom


def softmax_temp_backward(p: np.ndarray, grad_p: np.ndarray, tau: float) -> np.ndarray:
    """Chain dL/dp back to dL/dlogits for p = softmax_temp(logits, tau)."""
    dot = np.sum(grad_p * p, axis=-1, keepdims=True)
    return p * (grad_p - dot) / tau


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient oracle for a scalar function of a vector.

    Used by model and loss tests to certify hand-derived gradients; must stay
    independent of any analytic path it checks.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(x)
        flat[i] = orig - step
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-n| / max(|a|, |n|, floor), per entry."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


def norm_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """||a-n|| / max(||a||, ||n||, floor) over a whole gradient block.

    Central differences with step ~1e-5 resolve gradients down to roughly
    1e-11 absolute; entries below that are pure rounding noise, so block
    checks compare norms instead of single entries.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), floor)
    return float(np.linalg.norm(a - n)) / scale


def is_distribution(p: np.ndarray, tol: float = 1e-9) -> bool:
    """True if p is non-negative and sums to 1 within tol along the last axis."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        return False
    return bool(np.all(np.abs(np.sum(p, axis=-1) - 1.0) <= tol))
