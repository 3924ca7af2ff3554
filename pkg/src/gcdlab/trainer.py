"""Training loop: per-step loss assembly, exact backward, SGD, schedules.

A step runs, in order: forward on both views, the representation losses, the
self-distillation classification losses, the batch-mean-entropy bonus, the
dual-view KL term (if enabled), the confident-known selection plus margin
update plus local entropy term (if enabled), the total, the backward pass,
and one SGD update.  The running-mean prediction advances exactly once per
step.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import EpochMetrics, evaluate
from .losses import (
    EmaState,
    LossBreakdown,
    SelectionState,
    classification_losses,
    dkl_loss,
    init_ema,
    ler_loss,
    mean_entropy_reg,
    select_known,
    sup_contrastive,
    total_loss,
    unsup_contrastive,
    update_ema_and_margins,
)
from .model import (
    ModelParams,
    PARAM_FIELDS,
    ParamGrads,
    backward,
    forward,
    init_params,
    params_to_vector,
    zero_grads,
)
from .numerics import softmax_temp_backward
from .synthdata import Batch, GcdDataset, make_batches

logger = logging.getLogger(__name__)

# If the init-time gradient norm exceeds this, the run's base learning rate
# is capped at 0.05 (the published 0.1 was tuned for a very different
# backbone).
GRAD_NORM_SAFETY_BOUND = 25.0
SAFE_LR = 0.05


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term turns NaN/Inf; names the first bad term."""


@dataclass
class Toggles:
    ler: bool = True
    map: bool = True
    dkl: bool = True


@dataclass
class TrainConfig:
    lam: float = 0.35            # blend between unsupervised and supervised terms
    epsilon: float = 1.0         # weight of the mean-entropy bonus
    alpha: float = 1.0           # weight of the base objective
    beta: float = 2.0            # weight of the local entropy term
    delta: float = 0.85          # confidence threshold for known-sample selection
    lambda_ler: float = 0.4      # margin coefficient
    tau_u: float = 0.07
    tau_c: float = 1.0
    tau_s: float = 0.1
    tau_t_start: float = 0.07
    tau_t_end: float = 0.04
    tau_t_warmup_epochs: int = 30
    tau_o: float = 0.05
    ema_momentum: float = 0.99
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-5
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    aug_strength: float = 0.1
    aug_dropout: float = 0.1
    hidden_dim: int = 32
    feature_dim: int = 16
    proj_dim: int = 8
    toggles: Toggles = field(default_factory=Toggles)

    def validate(self) -> None:
        for name in ("tau_u", "tau_c", "tau_s", "tau_t_start", "tau_t_end", "tau_o"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0, 1]")
        if self.alpha < 0 or self.beta < 0 or self.epsilon < 0 or self.lambda_ler < 0:
            raise ValueError("alpha, beta, epsilon, lambda_ler must be >= 0")
        if not 0.0 < self.ema_momentum < 1.0:
            raise ValueError("ema_momentum must be in (0, 1)")
        if self.toggles.map and not self.toggles.ler:
            raise ValueError("the margin pattern requires the local entropy term (map => ler)")
        if self.epochs < 0 or self.batch_size < 2:
            raise ValueError("epochs must be >= 0 and batch_size >= 2")
        if self.tau_t_warmup_epochs < 0:
            raise ValueError("tau_t_warmup_epochs must be >= 0")
        if self.aug_strength < 0 or not 0.0 <= self.aug_dropout < 1.0:
            raise ValueError("aug_strength >= 0 and 0 <= aug_dropout < 1 required")
        for name in ("hidden_dim", "feature_dim", "proj_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr0 <= 0 or not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0:
            raise ValueError("lr0 > 0, 0 <= momentum < 1, weight_decay >= 0 required")


@dataclass
class TrainState:
    params: ModelParams
    ema: EmaState
    velocity: ParamGrads
    epoch: int
    history: list[EpochMetrics]


@dataclass
class StepResult:
    breakdown: LossBreakdown
    grads: ParamGrads
    new_ema: EmaState
    selection: SelectionState | None
    margins: np.ndarray


def cosine_lr(epoch: int, total: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at epoch 0 to 0 at epoch == total."""
    if lr0 <= 0:
        raise ValueError("lr0 must be positive")
    if not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside [0, {total}]")
    if total == 0:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total))


def teacher_temperature(epoch: int, cfg: TrainConfig) -> float:
    """Cosine ramp from tau_t_start to tau_t_end over the warmup epochs,
    constant afterwards."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    warm = cfg.tau_t_warmup_epochs
    if warm == 0 or epoch >= warm:
        return cfg.tau_t_end
    ramp = 0.5 * (1.0 + math.cos(math.pi * epoch / warm))
    return cfg.tau_t_end + (cfg.tau_t_start - cfg.tau_t_end) * ramp


def _check_finite(breakdown: LossBreakdown) -> None:
    for name in ("rep_unsup", "rep_sup", "cls_unsup", "cls_sup",
                 "mean_entropy", "dkl", "ler", "total"):
        if not math.isfinite(getattr(breakdown, name)):
            raise NonFiniteLossError(f"loss term '{name}' is not finite")


def compute_step(
    params: ModelParams,
    batch: Batch,
    cfg: TrainConfig,
    tau_t: float,
    ema: EmaState,
    known_set: frozenset[int],
) -> StepResult:
    """Losses, exact parameter gradients, and the advanced running mean for
    one batch.  Pure: mutates nothing it is given."""
    cache = forward(params, batch)
    v1, v2 = cache.view1, cache.view2
    b = batch.size

    rep_u, gu_z1, gu_z2 = unsup_contrastive(v1.z, v2.z, cfg.tau_u)
    rep_s, gs_z1, gs_z2 = sup_contrastive(v1.z, v2.z, batch.labels, batch.mask, cfg.tau_c)
    cls = classification_losses(v1.logits, v2.logits, batch.labels, batch.mask,
                                cfg.tau_s, tau_t)
    me, gme_d1, gme_d2 = mean_entropy_reg(cls.student1, cls.student2)

    dists_all = np.vstack([cls.student1, cls.student2])
    mask_all = np.concatenate([batch.mask, batch.mask])
    new_ema, margins = update_ema_and_margins(ema, dists_all, cfg.lambda_ler)

    if cfg.toggles.dkl:
        dkl_val, gdkl_d1 = dkl_loss(cls.student1, cls.student2)
    else:
        dkl_val, gdkl_d1 = 0.0, np.zeros_like(cls.student1)

    selection = None
    ler_val = 0.0
    g_ler = np.zeros((2 * b, params.n_classes))
    if cfg.toggles.ler:
        selection = select_known(dists_all, mask_all, known_set, cfg.delta)
        logits_all = np.vstack([v1.logits, v2.logits])
        ler_val, g_ler = ler_loss(logits_all, selection, margins, cfg.tau_o,
                                  use_map=cfg.toggles.map)

    breakdown = total_loss(rep_u, rep_s, cls.cls_unsup, cls.cls_sup, me,
                           dkl_val, ler_val, cfg.lam, cfg.epsilon, cfg.alpha, cfg.beta)
    _check_finite(breakdown)

    # objective weights
    a, lam, eps = cfg.alpha, cfg.lam, cfg.epsilon
    w_u = a * (1.0 - lam)
    w_s = a * lam

    g_z1 = w_u * gu_z1 + w_s * gs_z1
    g_z2 = w_u * gu_z2 + w_s * gs_z2

    g_logits1 = w_u * cls.g_unsup_logits1 + w_s * cls.g_sup_logits1
    g_logits2 = w_u * cls.g_unsup_logits2 + w_s * cls.g_sup_logits2

    # distribution-level grads (mean entropy maximized, so minus sign; the
    # dual-view KL only reaches the first view) chained through the student
    # softmax
    g_d1 = -w_u * eps * gme_d1 + w_u * gdkl_d1
    g_d2 = -w_u * eps * gme_d2
    g_logits1 += softmax_temp_backward(cls.student1, g_d1, cfg.tau_s)
    g_logits2 += softmax_temp_backward(cls.student2, g_d2, cfg.tau_s)

    g_logits1 += cfg.beta * g_ler[:b]
    g_logits2 += cfg.beta * g_ler[b:]

    grads = backward(params, cache, g_logits1, g_logits2, g_z1, g_z2)
    return StepResult(breakdown=breakdown, grads=grads, new_ema=new_ema,
                      selection=selection, margins=margins)


def training_step(
    state: TrainState,
    batch: Batch,
    cfg: TrainConfig,
    lr: float,
    known_set: frozenset[int],
    tau_t: float,
) -> tuple[TrainState, LossBreakdown]:
    """One SGD transaction over the train state (params updated in place)."""
    result = compute_step(state.params, batch, cfg, tau_t, state.ema, known_set)
    for f in PARAM_FIELDS:
        g = getattr(result.grads, f)
        v = getattr(state.velocity, f)
        theta = getattr(state.params, f)
        v *= cfg.momentum
        v += g + cfg.weight_decay * theta
        theta -= lr * v
    state.ema = result.new_ema
    return state, result.breakdown


def grad_norm(grads: ParamGrads) -> float:
    return float(np.linalg.norm(params_to_vector(grads)))


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    if not parts:
        return LossBreakdown()
    out = LossBreakdown()
    for name in ("rep_unsup", "rep_sup", "cls_unsup", "cls_sup",
                 "mean_entropy", "dkl", "ler", "total"):
        setattr(out, name, float(np.mean([getattr(p, name) for p in parts])))
    return out


def init_state(dataset: GcdDataset, cfg: TrainConfig) -> TrainState:
    params = init_params(dataset.dim, cfg.hidden_dim, cfg.feature_dim,
                         cfg.proj_dim, dataset.n_classes, seed=cfg.seed)
    return TrainState(
        params=params,
        ema=init_ema(dataset.n_classes, cfg.ema_momentum),
        velocity=zero_grads(params),
        epoch=0,
        history=[],
    )


def effective_lr0(state: TrainState, dataset: GcdDataset, cfg: TrainConfig) -> float:
    """Cap the base learning rate if the init-time gradient norm is large."""
    if cfg.epochs == 0 or cfg.lr0 <= SAFE_LR:
        return cfg.lr0
    batches = make_batches(dataset, cfg.batch_size, cfg.aug_strength,
                           seed=[cfg.seed, 0], dropout=cfg.aug_dropout)
    probe = compute_step(state.params, batches[0], cfg,
                         teacher_temperature(0, cfg), state.ema,
                         dataset.known_classes)
    norm = grad_norm(probe.grads)
    if norm > GRAD_NORM_SAFETY_BOUND:
        logger.warning(
            "init gradient norm %.2f exceeds %.1f; capping base lr at %.3g",
            norm, GRAD_NORM_SAFETY_BOUND, SAFE_LR,
        )
        return SAFE_LR
    return cfg.lr0


def train(dataset: GcdDataset, cfg: TrainConfig, on_epoch=None) -> TrainState:
    """Full training run; evaluates on the unlabeled samples after each epoch.

    Deterministic: all randomness derives from cfg.seed (and the dataset the
    caller built).  on_epoch(state), if given, fires after each epoch's
    evaluation (state.epoch counts completed epochs).
    """
    cfg.validate()
    dataset.validate()
    state = init_state(dataset, cfg)
    lr0 = effective_lr0(state, dataset, cfg)
    known = dataset.known_classes

    for epoch in range(cfg.epochs):
        state.epoch = epoch
        lr = cosine_lr(epoch, cfg.epochs, lr0)
        tau_t = teacher_temperature(epoch, cfg)
        batches = make_batches(dataset, cfg.batch_size, cfg.aug_strength,
                               seed=[cfg.seed, epoch], dropout=cfg.aug_dropout)
        parts = []
        for batch in batches:
            state, breakdown = training_step(state, batch, cfg, lr, known, tau_t)
            parts.append(breakdown)
        metrics = evaluate(state.params, dataset, cfg)
        metrics = dataclasses.replace(
            metrics, epoch=epoch, loss=_mean_breakdown(parts), lr=lr, tau_t=tau_t
        )
        state.history.append(metrics)
        state.epoch = epoch + 1
        if on_epoch is not None:
            on_epoch(state)
    return state
