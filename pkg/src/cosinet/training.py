"""Optimization: listwise KL / pointwise BCE objectives, Adam, STLR schedule.

Listwise training takes one optimizer step per question group (softmax over
the group's scores against the normalized gold labels); pointwise training
shuffles individual question/candidate pairs into fixed-size batches under
mean binary cross-entropy. Either way the embedding table stays untouched.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics, ndgrad
from .model import (CosinetConfig, CosinetParams, encode_pair, make_scorer,
                    prepare_group, prepare_pair, score_pairs)
from .ndgrad import Tape

LOSS_KINDS = ("pointwise", "listwise")
DEFAULT_MAX_LR = {"pointwise": 2e-3, "listwise": 2e-4}


@dataclass
class TrainConfig:
    loss: str = "listwise"
    epochs: int = 3
    max_lr: float | None = None  # None: 2e-3 pointwise, 2e-4 listwise
    cut_frac: float = 0.1
    ratio: float = 32.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}, expected one of {LOSS_KINDS}")
        if not 0 < self.cut_frac < 1:
            raise ValueError(f"cut_frac must be in (0, 1), got {self.cut_frac}")
        if self.ratio <= 1:
            raise ValueError(f"ratio must be > 1, got {self.ratio}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_lr is not None and self.max_lr <= 0:
            raise ValueError(f"max_lr must be > 0, got {self.max_lr}")

    @property
    def resolved_max_lr(self) -> float:
        return self.max_lr if self.max_lr is not None else DEFAULT_MAX_LR[self.loss]


def stlr(step: int, total: int, cut_frac: float, ratio: float, max_lr: float) -> float:
    """Slanted triangular learning rate at 0 <= step < total.

    Linear warm-up to max_lr over the first cut_frac of the run, then a
    long linear decay down to max_lr/ratio. The warm-up length is clamped
    to one step so very short runs stay well-defined.
    """
    if total < 1:
        raise ValueError(f"stlr: total steps must be >= 1, got {total}")
    if not 0 <= step < total:
        raise ValueError(f"stlr: step {step} outside [0, {total})")
    cut = max(1, math.floor(total * cut_frac))
    if step < cut:
        p = step / cut
    else:
        p = 1.0 - (step - cut) / (cut * (1.0 / cut_frac - 1.0))
        p = min(1.0, max(0.0, p))
    return max_lr * (1.0 + p * (ratio - 1.0)) / ratio


def listwise_loss(scores: ndgrad.Tensor, labels) -> ndgrad.Tensor:
    """KL divergence from normalized gold labels to softmax(scores).

    ``scores`` is a (1, n) tensor, ``labels`` binary with at least one
    positive. Loss = sum_i g_i (ln g_i - ln p_i) with 0 ln 0 = 0; always
    >= 0 and 0 exactly when the distributions match.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.sum() < 1:
        raise ValueError("listwise_loss: group has no positive label")
    g = (y / y.sum()).reshape(1, -1)
    if scores.data.shape != g.shape:
        raise ValueError(f"listwise_loss: scores shape {scores.data.shape} "
                         f"does not match {g.shape[1]} labels")
    pos = g > 0
    entropy = float((g[pos] * np.log(g[pos])).sum())
    tape = scores.tape
    p = ndgrad.softmax_rows(scores)
    cross = ndgrad.sum_all(ndgrad.mul(tape.constant(g), ndgrad.log(p)))
    return ndgrad.sub(tape.constant([[entropy]]), cross)


def pointwise_loss(scores: ndgrad.Tensor, labels) -> ndgrad.Tensor:
    """Mean binary cross-entropy of sigmoid(scores) against binary labels."""
    return ndgrad.bce_logits_mean(scores, labels)


class Adam:
    """Adam with bias correction; one state slot per named parameter."""

    def __init__(self, names, arrays, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(arrays[n]) for n in names}
        self.v = {n: np.zeros_like(arrays[n]) for n in names}

    def step(self, arrays: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in arrays.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            arr -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class TrainingReport:
    wall_seconds: float
    steps: int
    epochs: int
    parameter_count: int
    loss_curve: list = field(default_factory=list)        # one value per optimizer step
    epoch_mean_loss: list = field(default_factory=list)
    dev_map: list = field(default_factory=list)           # per epoch, when dev data given

    def to_dict(self) -> dict:
        d = {
            "wall_seconds": round(self.wall_seconds, 4),
            "steps": self.steps,
            "epochs": self.epochs,
            "parameter_count": self.parameter_count,
            "epoch_mean_loss": [round(x, 6) for x in self.epoch_mean_loss],
        }
        if self.dev_map:
            d["dev_map"] = [round(x, 2) for x in self.dev_map]
        return d


def _check_groups(groups):
    groups = list(groups)
    if not groups:
        raise ValueError("fit: empty dataset")
    for g in groups:
        if sum(g.labels) < 1:
            raise ValueError(f"fit: group {g.question_id} has no positive label "
                             "(filter unanswered questions at ingestion)")
    return groups


def fit(groups, table, params: CosinetParams, config: CosinetConfig,
        train_config: TrainConfig, dev_groups=None) -> TrainingReport:
    """Train ``params`` in place; returns the report with timing and losses.

    Wall-clock covers the optimization loop only (per-epoch dev evaluation,
    when requested, is timed separately and excluded).
    """
    groups = _check_groups(groups)
    if train_config.loss == "pointwise" and config.context != "none":
        raise ValueError("pointwise training scores pairs independently; "
                         "it cannot drive a rank contextualizer (use context=none)")
    rng = np.random.default_rng(train_config.seed)
    adam = Adam(params.names(), params.arrays, train_config.beta1,
                train_config.beta2, train_config.eps)
    max_lr = train_config.resolved_max_lr

    if train_config.loss == "listwise":
        steps_per_epoch = len(groups)
    else:
        pairs = [(gi, ci) for gi, g in enumerate(groups) for ci in range(len(g.candidates))]
        steps_per_epoch = math.ceil(len(pairs) / train_config.batch_size)
    total_steps = train_config.epochs * steps_per_epoch

    report = TrainingReport(wall_seconds=0.0, steps=0, epochs=train_config.epochs,
                            parameter_count=params.count())
    dev_seconds = 0.0
    step = 0
    t0 = time.perf_counter()
    for _ in range(train_config.epochs):
        epoch_losses = []
        if train_config.loss == "listwise":
            for gi in rng.permutation(len(groups)):
                g = groups[gi]
                tape = Tape(dtype=params.dtype)
                leaves = params.as_leaves(tape)
                row = score_pairs(prepare_group(g, table, config), config, leaves, tape)
                loss = listwise_loss(row, g.labels)
                tape.backward(loss)
                adam.step(params.arrays, {n: leaves[n].grad for n in params.names()},
                          stlr(step, total_steps, train_config.cut_frac,
                               train_config.ratio, max_lr))
                step += 1
                epoch_losses.append(float(loss.data[0, 0]))
        else:
            order = rng.permutation(len(pairs))
            for lo in range(0, len(order), train_config.batch_size):
                batch = [pairs[i] for i in order[lo:lo + train_config.batch_size]]
                tape = Tape(dtype=params.dtype)
                leaves = params.as_leaves(tape)
                vecs = []
                labels = []
                for gi, ci in batch:
                    g = groups[gi]
                    cand = g.candidates[ci]
                    pair = prepare_pair(g.question_tokens, cand.tokens, table,
                                        config.kernel_width)
                    vecs.append(encode_pair(pair, leaves, tape))
                    labels.append(cand.label)
                stacked = vecs[0] if len(vecs) == 1 else ndgrad.concat(vecs, axis=0)
                col = ndgrad.add(ndgrad.matmul(stacked, leaves["head_w"]), leaves["head_b"])
                loss = pointwise_loss(ndgrad.transpose(col), labels)
                tape.backward(loss)
                adam.step(params.arrays, {n: leaves[n].grad for n in params.names()},
                          stlr(step, total_steps, train_config.cut_frac,
                               train_config.ratio, max_lr))
                step += 1
                epoch_losses.append(float(loss.data[0, 0]))
        report.loss_curve.extend(epoch_losses)
        report.epoch_mean_loss.append(float(np.mean(epoch_losses)))
        if dev_groups:
            d0 = time.perf_counter()
            dev = metrics.evaluate(make_scorer(params, config, table), dev_groups)
            report.dev_map.append(dev.map)
            dev_seconds += time.perf_counter() - d0
    report.wall_seconds = time.perf_counter() - t0 - dev_seconds
    report.steps = step
    return report
