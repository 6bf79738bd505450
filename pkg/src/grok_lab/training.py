# -*- coding: utf-8 -*-
from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from grok_lab.checkpoint import save_params
from grok_lab.errors import NonFiniteError, ShapeError
from grok_lab.model import Params, init_params, trace
from grok_lab.schemas import ExperimentConfig, MetricRow, ModelConfig, RunRecord, RunSummary, TrainConfig
from grok_lab.sinks import BaseSink, CompositeSink, ProgressSink, RunDirectorySink
from grok_lab.tasks import SplitMix64, TaskDataset, build_dataset
from grok_lab.tensor import Tensor, cross_entropy, default_dtype, no_grad
from grok_lab.utils import utc_now_iso_z


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, Tensor]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adamw_step(
    params: Dict[str, Tensor],
    grads: Dict[str, Optional[np.ndarray]],
    state: AdamState,
    t: int,
    cfg: TrainConfig,
) -> Tuple[Dict[str, Tensor], AdamState]:
    """
    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta), applied to
    every tensor. Missing gradients count as zero (decay still applies).

    All new moments and parameters are computed and checked first; nothing in
    params or state changes unless every tensor's update is finite.
    """
    if t < 1:
        raise ValueError(f"adam step index must be >= 1, got {t}")
    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    staged: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"adamw_step: gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"adamw_step({name})")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        updated = p.data - cfg.learning_rate * (m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p.data)
        if not (np.isfinite(updated).all() and np.isfinite(m).all() and np.isfinite(v).all()):
            raise NonFiniteError(f"adamw_step({name})", "update overflowed")
        staged[name] = (m, v, updated)

    for name, (m, v, updated) in staged.items():
        state.m[name][...] = m
        state.v[name][...] = v
        params[name].data[...] = updated
    state.t = t
    return params, state


@dataclass
class SplitStats:
    loss: float
    accuracy: float
    res_norm: float
    max_logit: float


def _split_stats(params: Params, config: ModelConfig, tokens: np.ndarray, labels: np.ndarray) -> SplitStats:
    if len(labels) == 0:
        raise ValueError("cannot evaluate an empty split")
    with no_grad():
        tr = trace(params, config, tokens)
        loss = cross_entropy(tr.logits, labels)
    logits = tr.logits.data
    # argmax keeps the first maximum, i.e. ties go to the lowest class id
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    res = tr.residual.data.astype(np.float64)
    res_norm = float(np.sqrt((res * res).sum(axis=-1)).mean())
    return SplitStats(loss.item(), acc, res_norm, float(np.abs(logits).max()))


def evaluate(params: Params, config: ModelConfig, dataset: TaskDataset, split: str) -> Tuple[float, float]:
    tokens, labels = dataset.split(split)
    stats = _split_stats(params, config, tokens, labels)
    return stats.loss, stats.accuracy


def detect_grok_epoch(rows: Sequence[MetricRow], threshold: float) -> Optional[int]:
    for row in rows:
        if row.test_acc >= threshold:
            return row.epoch
    return None


def train(
    model_config: ModelConfig,
    dataset: TaskDataset,
    train_cfg: TrainConfig,
    name: str = "run",
    config_echo: Optional[Dict[str, Any]] = None,
    sink: Optional[BaseSink] = None,
    checkpoint_dir: Optional[Path] = None,
    verbose: bool = False,
) -> RunRecord:
    """
    Full-batch AdamW: one step per epoch over the whole training split,
    evaluation of both splits at epoch 0, every eval_every epochs and at
    max_epochs. Non-finite values stop the run with diverged=True.
    """
    if model_config.vocab_size != dataset.vocab_size:
        raise ValueError(
            f"model vocab_size {model_config.vocab_size} does not match dataset vocab_size {dataset.vocab_size}"
        )
    echo = config_echo or {
        "model": json.loads(model_config.json()),
        "train": json.loads(train_cfg.json()),
    }
    seed = model_config.init_seed

    if verbose:
        print(f"==== Train {name} ====")
        print(
            f"norm={model_config.norm_mode} unembed={model_config.unembed_mode} "
            f"attention={model_config.attention_mode} fourier_init={model_config.fourier_init} "
            f"lr={train_cfg.learning_rate} wd={train_cfg.weight_decay} epochs={train_cfg.max_epochs}"
        )

    started = time.perf_counter()
    started_at = utc_now_iso_z()
    rows: List[MetricRow] = []
    grok_epoch: Optional[int] = None
    diverged = False
    divergence_epoch: Optional[int] = None

    with default_dtype(train_cfg.precision):
        params = init_params(model_config)
        named = params.named_tensors()
        state = AdamState.zeros_like(named)

        x_train, y_train = dataset.split("train")
        x_test, y_test = dataset.split("test")
        order = SplitMix64(train_cfg.train_seed).permutation(len(y_train))
        x_train, y_train = x_train[order], y_train[order]

        if sink is not None:
            sink.start_run(name, seed, echo)

        def checkpoint(tag: str) -> None:
            if checkpoint_dir is None:
                return
            path = save_params(Path(checkpoint_dir) / f"{tag}.ckpt", params)
            if sink is not None:
                sink.emit_checkpoint(tag, path)

        def record(epoch: int) -> None:
            nonlocal grok_epoch
            tr = _split_stats(params, model_config, x_train, y_train)
            te = _split_stats(params, model_config, x_test, y_test)
            row = MetricRow(
                epoch=epoch,
                train_loss=tr.loss,
                test_loss=te.loss,
                train_acc=tr.accuracy,
                test_acc=te.accuracy,
                res_norm=tr.res_norm,
                max_logit=max(tr.max_logit, te.max_logit),
            )
            rows.append(row)
            if sink is not None:
                sink.emit_metrics(row)
            if grok_epoch is None and row.test_acc >= train_cfg.grok_threshold:
                grok_epoch = epoch
                checkpoint("grok")

        epoch = 0
        try:
            record(0)
            for epoch in range(1, train_cfg.max_epochs + 1):
                for p in named.values():
                    p.zero_grad()
                tr = trace(params, model_config, x_train)
                cross_entropy(tr.logits, y_train).backward()
                adamw_step(named, {n: p.grad for n, p in named.items()}, state, epoch, train_cfg)
                if epoch % train_cfg.eval_every == 0 or epoch == train_cfg.max_epochs:
                    record(epoch)
        except NonFiniteError as exc:
            diverged = True
            divergence_epoch = epoch
            print(f"[{name}] diverged at epoch {epoch}: {exc}", file=sys.stderr)

        # forward ops and adamw_step raise before writing, so params hold the last finite step
        checkpoint("final")

    wall = time.perf_counter() - started
    run = RunRecord(
        name=name,
        seed=seed,
        config=echo,
        rows=rows,
        grok_epoch=detect_grok_epoch(rows, train_cfg.grok_threshold),
        peak_test_acc=max((r.test_acc for r in rows), default=0.0),
        diverged=diverged,
        divergence_epoch=divergence_epoch,
        wall_time_seconds=wall,
        started_at=started_at,
        finished_at=utc_now_iso_z(),
    )
    if sink is not None:
        sink.finalize(run)

    if verbose:
        print("---- Summary ----")
        print(f"grok_epoch={run.grok_epoch} peak_test_acc={run.peak_test_acc:.4f}")
        print(f"diverged={run.diverged} divergence_epoch={run.divergence_epoch}")
        print(f"wall_time={wall:.1f}s evaluations={len(rows)}")
    return run


def run_experiment(
    experiment: ExperimentConfig,
    run_dir: Path,
    indent: Optional[int] = 2,
    verbose: bool = False,
    progress_prefix: str = "",
) -> RunSummary:
    """
    Train one seed of an experiment (experiment.seeds[0]) into run_dir:
    config.json, metrics.csv, summary.json, final.ckpt and grok.ckpt.
    """
    exp = experiment.for_seed(experiment.seeds[0])
    dataset = build_dataset(exp.task)
    run_dir = Path(run_dir)
    directory = RunDirectorySink(run_dir, indent=indent)
    sink: BaseSink = CompositeSink([directory, ProgressSink(progress_prefix)]) if verbose else directory
    record = train(
        exp.model,
        dataset,
        exp.train,
        name=exp.name,
        config_echo=json.loads(exp.json()),
        sink=sink,
        checkpoint_dir=run_dir,
        verbose=verbose,
    )
    return RunSummary.from_record(record)
