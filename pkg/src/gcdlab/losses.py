"""All terms of the training objective, with exact gradients.

Layout convention: whenever the two views are stacked, rows [0, b) are view 1
and rows [b, 2b) are view 2.  Gradients are returned with respect to each
loss's immediate inputs (projections, logits, or distributions); the trainer
applies the objective weights and chains distribution-level gradients back
through the student softmax.

Stop-gradient branches (self-distillation targets, the second view of the
dual-view KL term, the sharpening target of the local entropy loss) never
produce gradient arrays at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import LOG_FLOOR, cross_entropy, entropy, softmax_temp


@dataclass
class SelectionState:
    """Per view-sample selection of confident, unlabeled, known-class predictions."""

    high_conf: np.ndarray    # 2b bool: max prob >= delta
    pred_labels: np.ndarray  # 2b int: argmax class (lowest index on ties)
    known_mask: np.ndarray   # 2b bool: unlabeled & high_conf & predicted known


@dataclass
class EmaState:
    """Running average of the model's mean prediction."""

    p_tilde: np.ndarray  # K, a valid distribution
    momentum: float


@dataclass
class LossBreakdown:
    rep_unsup: float = 0.0
    rep_sup: float = 0.0
    cls_unsup: float = 0.0
    cls_sup: float = 0.0
    mean_entropy: float = 0.0
    dkl: float = 0.0
    ler: float = 0.0
    total: float = 0.0


@dataclass
class ClassificationResult:
    cls_unsup: float
    cls_sup: float
    # unweighted gradients of each term w.r.t. the raw logits
    g_unsup_logits1: np.ndarray
    g_unsup_logits2: np.ndarray
    g_sup_logits1: np.ndarray
    g_sup_logits2: np.ndarray
    student1: np.ndarray  # b x K at the student temperature
    student2: np.ndarray
    teacher1: np.ndarray  # targets for view 1 (from view 2 logits), detached
    teacher2: np.ndarray


def init_ema(k: int, momentum: float) -> EmaState:
    if not 0.0 < momentum < 1.0:
        raise ValueError(f"ema momentum must be in (0, 1), got {momentum}")
    return EmaState(p_tilde=np.full(k, 1.0 / k), momentum=momentum)


def unsup_contrastive(
    z1: np.ndarray, z2: np.ndarray, tau_u: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-view InfoNCE: anchor z1_i, positive z2_i, denominator over every
    second-view row (positive included).  Mean over anchors."""
    b = z1.shape[0]
    if b < 2:
        raise ValueError(f"contrastive loss needs a batch of >= 2, got {b}")
    if tau_u <= 0:
        raise ValueError("tau_u must be positive")
    sims = z1 @ z2.T / tau_u
    shifted = sims - sims.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    log_p_pos = shifted.diagonal() - np.log(np.exp(shifted).sum(axis=1))
    loss = float(-log_p_pos.mean())
    g_sims = (p - np.eye(b)) / b
    g_z1 = g_sims @ z2 / tau_u
    g_z2 = g_sims.T @ z1 / tau_u
    return loss, g_z1, g_z2


def sup_contrastive(
    z1: np.ndarray,
    z2: np.ndarray,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    tau_c: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Label-aware contrastive term over the labeled subset.

    Anchor i (labeled, view 1) pulls toward the second views of the other
    labeled samples with its label; the denominator runs over all labeled
    second views.  Anchors without a positive partner are skipped; no valid
    anchor at all gives 0 with zero gradients.
    """
    if tau_c <= 0:
        raise ValueError("tau_c must be positive")
    g_z1 = np.zeros_like(z1)
    g_z2 = np.zeros_like(z2)
    labeled_idx = np.flatnonzero(labeled_mask)
    if labeled_idx.size < 2:
        return 0.0, g_z1, g_z2

    zl1 = z1[labeled_idx]
    zl2 = z2[labeled_idx]
    lab = labels[labeled_idx]
    sims = zl1 @ zl2.T / tau_c  # rows: anchors, cols: labeled second views
    shifted = sims - sims.max(axis=1, keepdims=True)
    exp_s = np.exp(shifted)
    p = exp_s / exp_s.sum(axis=1, keepdims=True)
    log_p = shifted - np.log(exp_s.sum(axis=1, keepdims=True))

    same = lab[:, None] == lab[None, :]
    positives = same & ~np.eye(labeled_idx.size, dtype=bool)
    n_pos = positives.sum(axis=1)
    anchors = np.flatnonzero(n_pos > 0)
    if anchors.size == 0:
        return 0.0, g_z1, g_z2

    loss = 0.0
    g_sims = np.zeros_like(sims)
    for a in anchors:
        pos = positives[a]
        loss += -log_p[a, pos].mean()
        g_sims[a] = p[a] - pos / n_pos[a]
    loss /= anchors.size
    g_sims[anchors] /= anchors.size

    g_z1[labeled_idx] = g_sims @ zl2 / tau_c
    g_z2[labeled_idx] = g_sims.T @ zl1 / tau_c
    return float(loss), g_z1, g_z2


def rep_loss(unsup: float, sup: float, lam: float) -> float:
    """Representation loss blend: (1-lam) * unsup + lam * sup."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    return (1.0 - lam) * unsup + lam * sup


def classification_losses(
    logits1: np.ndarray,
    logits2: np.ndarray,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    tau_s: float,
    tau_t: float,
) -> ClassificationResult:
    """Self-distillation and supervised cross-entropy over both views.

    Student distributions use tau_s; the cross-view teacher uses tau_t and is
    detached, so only the student branch yields gradients.
    """
    if tau_s <= 0 or tau_t <= 0:
        raise ValueError("temperatures must be positive")
    b, k = logits1.shape
    p1 = softmax_temp(logits1, tau_s)
    p2 = softmax_temp(logits2, tau_s)
    q_for_1 = softmax_temp(logits2, tau_t)  # teacher of view 1, stop-gradient
    q_for_2 = softmax_temp(logits1, tau_t)

    n_view_samples = 2 * b
    cls_unsup = float(
        (np.sum(cross_entropy(q_for_1, p1)) + np.sum(cross_entropy(q_for_2, p2)))
        / n_view_samples
    )
    g_unsup1 = (p1 - q_for_1) / (tau_s * n_view_samples)
    g_unsup2 = (p2 - q_for_2) / (tau_s * n_view_samples)

    g_sup1 = np.zeros_like(logits1)
    g_sup2 = np.zeros_like(logits2)
    labeled_idx = np.flatnonzero(labeled_mask)
    if labeled_idx.size:
        one_hot = np.zeros((labeled_idx.size, k))
        one_hot[np.arange(labeled_idx.size), labels[labeled_idx]] = 1.0
        n_lab = 2 * labeled_idx.size
        cls_sup = float(
            (
                np.sum(cross_entropy(one_hot, p1[labeled_idx]))
                + np.sum(cross_entropy(one_hot, p2[labeled_idx]))
            )
            / n_lab
        )
        g_sup1[labeled_idx] = (p1[labeled_idx] - one_hot) / (tau_s * n_lab)
        g_sup2[labeled_idx] = (p2[labeled_idx] - one_hot) / (tau_s * n_lab)
    else:
        cls_sup = 0.0

    return ClassificationResult(
        cls_unsup=cls_unsup,
        cls_sup=cls_sup,
        g_unsup_logits1=g_unsup1,
        g_unsup_logits2=g_unsup2,
        g_sup_logits1=g_sup1,
        g_sup_logits2=g_sup2,
        student1=p1,
        student2=p2,
        teacher1=q_for_1,
        teacher2=q_for_2,
    )


def mean_entropy_reg(
    dists1: np.ndarray, dists2: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Entropy of the batch-mean prediction over both views.

    The caller maximizes this (minus sign in the objective); gradients flow
    through the mean into every sample distribution.
    """
    n = dists1.shape[0] + dists2.shape[0]
    p_bar = (dists1.sum(axis=0) + dists2.sum(axis=0)) / n
    value = float(entropy(p_bar))
    d_dp_bar = -(np.log(np.maximum(p_bar, LOG_FLOOR)) + 1.0)
    g_row = d_dp_bar / n
    return value, np.tile(g_row, (dists1.shape[0], 1)), np.tile(g_row, (dists2.shape[0], 1))


def select_known(
    dists: np.ndarray,
    batch_mask: np.ndarray,
    known_set: frozenset[int] | set[int],
    delta: float,
) -> SelectionState:
    """Pick unlabeled view-samples confidently predicted as known classes.

    dists are the 2b student distributions; batch_mask is the labeled flag
    duplicated per view.  Ties in argmax resolve to the lowest class index.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    high_conf = dists.max(axis=1) >= delta
    pred_labels = dists.argmax(axis=1)
    known_arr = np.asarray(sorted(known_set), dtype=np.int64)
    predicted_known = np.isin(pred_labels, known_arr)
    known_mask = ~batch_mask & high_conf & predicted_known
    return SelectionState(high_conf=high_conf, pred_labels=pred_labels, known_mask=known_mask)


def update_ema_and_margins(
    state: EmaState, dists: np.ndarray, lambda_ler: float
) -> tuple[EmaState, np.ndarray]:
    """Advance the running mean prediction and derive per-class margins.

    margins[j] = lambda_ler * log(1 / p_tilde[j]); rarely predicted classes
    get larger margins.  p_tilde is floored before the log so margins stay
    finite.
    """
    if lambda_ler < 0:
        raise ValueError("lambda_ler must be >= 0")
    m = state.momentum
    p_new = m * state.p_tilde + (1.0 - m) * dists.mean(axis=0)
    p_new = p_new / p_new.sum()
    margins = lambda_ler * np.log(1.0 / np.maximum(p_new, LOG_FLOOR))
    return EmaState(p_tilde=p_new, momentum=m), margins


def ler_loss(
    logits: np.ndarray,
    selection: SelectionState,
    margins: np.ndarray,
    tau_o: float,
    use_map: bool,
) -> tuple[float, np.ndarray]:
    """Local entropy term over the selected view-samples.

    With use_map: cross-entropy between the sharpened prediction (detached)
    and the margin-shifted prediction, mean over selected samples; gradient
    flows only through the shifted branch.  Without use_map: the negated
    entropy of the sharpened prediction.  Empty selection contributes 0.
    """
    if tau_o <= 0:
        raise ValueError("tau_o must be positive")
    g_logits = np.zeros_like(logits)
    sel = selection.known_mask
    n_sel = int(sel.sum())
    if n_sel == 0:
        return 0.0, g_logits

    u = logits[sel] / tau_o
    target = softmax_temp(u, 1.0)  # stop-gradient branch
    if use_map:
        shifted = softmax_temp(u + margins, 1.0)
        loss = float(np.sum(cross_entropy(target, shifted)) / n_sel)
        g_logits[sel] = (shifted - target) / (tau_o * n_sel)
    else:
        h = entropy(target)
        loss = float(-np.sum(h) / n_sel)
        log_t = np.log(np.maximum(target, LOG_FLOOR))
        g_logits[sel] = target * (log_t + h[:, None]) / (tau_o * n_sel)
    return loss, g_logits


def dkl_loss(dists1: np.ndarray, dists2: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean KL between the two views' predictions per sample pair.

    The second view is the detached reference; gradient flows through the
    first view only.
    """
    b = dists1.shape[0]
    log_ratio = np.log(np.maximum(dists1, LOG_FLOOR)) - np.log(np.maximum(dists2, LOG_FLOOR))
    with np.errstate(invalid="ignore"):
        terms = np.where(dists1 > 0.0, dists1 * log_ratio, 0.0)
    loss = float(terms.sum() / b)
    g_dists1 = (log_ratio + 1.0) / b
    return loss, g_dists1


def total_loss(
    rep_unsup: float,
    rep_sup: float,
    cls_unsup: float,
    cls_sup: float,
    mean_entropy: float,
    dkl: float,
    ler: float,
    lam: float,
    epsilon: float,
    alpha: float,
    beta: float,
) -> LossBreakdown:
    """Assemble the full objective from its parts.

    classification = (1-lam)(cls_unsup - epsilon*mean_entropy + dkl) + lam*cls_sup
    total = alpha * (representation + classification) + beta * ler
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    rep = rep_loss(rep_unsup, rep_sup, lam)
    cls = (1.0 - lam) * (cls_unsup - epsilon * mean_entropy + dkl) + lam * cls_sup
    return LossBreakdown(
        rep_unsup=rep_unsup,
        rep_sup=rep_sup,
        cls_unsup=cls_unsup,
        cls_sup=cls_sup,
        mean_entropy=mean_entropy,
        dkl=dkl,
        ler=ler,
        total=alpha * (rep + cls) + beta * ler,
    )
