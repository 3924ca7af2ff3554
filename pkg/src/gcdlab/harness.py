"""Experiment runner: sweep expansion, per-run outputs, summary assembly.

Each grid point gets its own directory named by a self-describing tag.  All
randomness flows from the configured seeds, so reruns are byte-identical.
The GCDLAB_THREADS environment variable caps worker parallelism (default 1,
fully serial).
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config import (
    ABLATION_VARIANTS,
    CsvSpec,
    ExperimentConfig,
    SyntheticSpec,
    _KEY_TO_ATTR,
    serialize_config,
    train_to_dict,
)
from .evaluation import EpochMetrics
from .model import config_fingerprint, save_checkpoint
from .synthdata import GcdDataset, generate_dataset, load_csv_dataset
from .trainer import TrainConfig, TrainState, train

logger = logging.getLogger(__name__)

METRICS_VERSION = "gcdlab-metrics-v1"
SUMMARY_VERSION = "gcdlab-summary-v1"

METRICS_COLUMNS = (
    "epoch", "acc_all", "acc_old", "acc_new", "loss_total", "loss_rep_u",
    "loss_rep_s", "loss_cls_u", "loss_cls_s", "mean_entropy", "dkl", "ler",
    "known_count", "lr", "tau_t",
)

SUMMARY_COLUMNS = (
    "tag", "epochs", "final_acc_all", "final_acc_old", "final_acc_new",
    "best_acc_all", "best_acc_old", "best_acc_new", "final_known_count",
    "final_loss_total",
)


@dataclass
class RunSpec:
    tag: str
    train: TrainConfig


def _fmt_value(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def expand_runs(cfg: ExperimentConfig) -> list[RunSpec]:
    """Cross the ablation variants with the sweep lists, in declared order."""
    variants = cfg.ablation or [None]
    sweep_keys = list(cfg.sweep.keys())
    value_grid = [cfg.sweep[k] for k in sweep_keys]
    runs = []
    for variant in variants:
        for combo in itertools.product(*value_grid):
            tc = dataclasses.replace(cfg.train)
            tc.toggles = dataclasses.replace(
                ABLATION_VARIANTS[variant] if variant else cfg.train.toggles
            )
            parts = [variant] if variant else []
            for key, value in zip(sweep_keys, combo):
                setattr(tc, _KEY_TO_ATTR.get(key, key), value)
                parts.append(f"{key}{_fmt_value(value)}")
            if "seed" not in sweep_keys:
                parts.append(f"seed{tc.seed}")
            tc.validate()
            runs.append(RunSpec(tag="_".join(parts), train=tc))
    return runs


def build_dataset(cfg: ExperimentConfig) -> GcdDataset:
    if isinstance(cfg.dataset, CsvSpec):
        return load_csv_dataset(cfg.dataset.path)
    spec: SyntheticSpec = cfg.dataset
    return generate_dataset(
        n_known=spec.n_known, n_novel=spec.n_novel, per_class=spec.per_class,
        dim=spec.dim, separation=spec.separation, noise=spec.noise,
        labeled_ratio=spec.labeled_ratio, seed=spec.seed,
    )


def _metric_row(m: EpochMetrics) -> str:
    values = (
        m.epoch, m.acc_all, m.acc_old, m.acc_new, m.loss.total, m.loss.rep_unsup,
        m.loss.rep_sup, m.loss.cls_unsup, m.loss.cls_sup, m.loss.mean_entropy,
        m.loss.dkl, m.loss.ler, m.known_count, m.lr, m.tau_t,
    )
    return ",".join(_fmt_value(v) for v in values)


def write_metrics_csv(history: list[EpochMetrics], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {METRICS_VERSION}\n")
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for m in history:
            fh.write(_metric_row(m) + "\n")


def run_one(run: RunSpec, dataset: GcdDataset, out_dir: str,
            checkpoint_every: int) -> TrainState:
    run_dir = os.path.join(out_dir, run.tag)
    os.makedirs(run_dir, exist_ok=True)
    tag_hash = config_fingerprint(train_to_dict(run.train))

    def on_epoch(state: TrainState) -> None:
        epoch = state.epoch
        if checkpoint_every > 0 and epoch % checkpoint_every == 0:
            save_checkpoint(state.params,
                            os.path.join(run_dir, f"checkpoint_epoch{epoch}.json"),
                            tag_hash)

    state = train(dataset, run.train, on_epoch=on_epoch)
    write_metrics_csv(state.history, os.path.join(run_dir, f"metrics_{run.tag}.csv"))
    save_checkpoint(state.params, os.path.join(run_dir, "checkpoint_final.json"), tag_hash)
    return state


def _summary_row(tag: str, history: list[EpochMetrics]) -> str:
    if history:
        final = history[-1]
        values = (
            tag, len(history), final.acc_all, final.acc_old, final.acc_new,
            max(m.acc_all for m in history), max(m.acc_old for m in history),
            max(m.acc_new for m in history), final.known_count, final.loss.total,
        )
    else:
        values = (tag, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0.0)
    return ",".join(v if isinstance(v, str) else _fmt_value(v) for v in values)


def worker_count() -> int:
    raw = os.environ.get("GCDLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        logger.warning("GCDLAB_THREADS=%r is not an integer; using 1", raw)
        return 1
    return max(1, n)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Train every grid point, write per-run metrics/checkpoints and the
    overall summary.csv.  Returns 0 on success, 1 if any run failed."""
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir!r} is not writable")
    with open(os.path.join(out_dir, "config.yaml"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(serialize_config(cfg))

    dataset = build_dataset(cfg)
    runs = expand_runs(cfg)
    results: dict[str, list[EpochMetrics] | None] = {}

    def execute(run: RunSpec):
        try:
            state = run_one(run, dataset, out_dir, cfg.checkpoint_every)
            return run.tag, state.history, None
        except Exception as exc:  # preserve partial outputs, keep going
            return run.tag, None, (exc, traceback.format_exc())

    workers = worker_count()
    if workers == 1:
        outcomes = [execute(r) for r in runs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(execute, runs))

    failed = False
    for tag, history, error in outcomes:
        results[tag] = history
        if error is not None:
            failed = True
            exc, tb = error
            logger.error("run %s failed: %s", tag, exc)
            err_path = os.path.join(out_dir, tag, "error.txt")
            os.makedirs(os.path.dirname(err_path), exist_ok=True)
            with open(err_path, "w", encoding="utf-8") as fh:
                fh.write(tb)

    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(f"# {SUMMARY_VERSION}\n")
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for run in runs:
            history = results.get(run.tag)
            if history is not None:
                fh.write(_summary_row(run.tag, history) + "\n")
    return 1 if failed else 0
