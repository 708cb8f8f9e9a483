"""Training loop, evaluation, stratified splitting and curve export."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import TextIO

import numpy as np
from threadpoolctl import threadpool_limits

from .augment import AugmentConfig, random_augment
from .data import Dataset
from .exceptions import ConfigError, InputError, NumericError, SplitError
from .losses import ConfusionCounts, accuracy, categorical_cross_entropy, confusion_counts, one_hot
from .model import Model, set_trainable_boundary
from .optim import RMSpropState, rmsprop_init, rmsprop_step
from .parallel import AUGMENT, DROPOUT, SHUFFLE, SPLIT, blas_threads, stream, worker_count

log = logging.getLogger(__name__)

CURVE_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 2e-5
    beta: float = 0.9
    epsilon: float = 1e-8
    freeze_boundary: str | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    val_split: float = 0.2

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.val_split < 1.0:
            raise ConfigError(f"val_split must be in (0, 1), got {self.val_split}")
        if self.lr < 0 or not 0.0 <= self.beta < 1.0 or self.epsilon <= 0:
            raise ConfigError("need lr >= 0, 0 <= beta < 1 and epsilon > 0")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = self.augment.to_dict()
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = 0.0


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    final: dict[str, float] = field(default_factory=dict)

    def curve_rows(self) -> list[tuple]:
        return [(r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc) for r in self.records]


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    confusion: list[ConfusionCounts]
    predictions: np.ndarray


def split(dataset: Dataset, val_frac: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split putting ``ceil(n_c * val_frac)`` samples of each class in validation."""
    if not 0.0 < val_frac < 1.0:
        raise SplitError(f"val_frac must be in (0, 1), got {val_frac}")
    if len(dataset) == 0:
        raise SplitError("cannot split an empty dataset")
    labels = dataset.labels
    val_idx = []
    for k in range(dataset.class_count):
        members = np.flatnonzero(labels == k)
        if members.size < 2:
            raise SplitError(f"class {dataset.class_names[k]!r} has {members.size} samples; need >= 2")
        n_val = math.ceil(members.size * val_frac)
        if n_val >= members.size:
            raise SplitError(f"class {dataset.class_names[k]!r} would have no training samples")
        val_idx.extend(stream(seed, SPLIT, k).permutation(members)[:n_val].tolist())
    is_val = np.zeros(len(dataset), dtype=bool)
    is_val[val_idx] = True
    return dataset.subset(np.flatnonzero(~is_val)), dataset.subset(np.flatnonzero(is_val))


def evaluate(model: Model, data: Dataset, batch_size: int = 64) -> EvalResult:
    """Inference-mode loss, accuracy and per-class confusion counts."""
    if len(data) == 0:
        raise InputError("cannot evaluate an empty dataset")
    if data.class_count != model.class_count:
        raise ConfigError(f"dataset has {data.class_count} classes, model {model.class_count}")
    labels = data.labels
    total_loss = 0.0
    preds = []
    for start in range(0, len(data), batch_size):
        idx = range(start, min(start + batch_size, len(data)))
        batch = np.stack([data.samples[i].image for i in idx])
        probs, _ = model.forward(batch, training=False)
        y = labels[start : start + len(idx)]
        total_loss += categorical_cross_entropy(probs, one_hot(y, model.class_count, probs.dtype)).value * len(idx)
        preds.append(np.argmax(probs, axis=1))
    preds = np.concatenate(preds)
    return EvalResult(
        total_loss / len(data),
        accuracy(preds, labels),
        confusion_counts(preds, labels, model.class_count),
        preds,
    )


def _augment_batch(data, indices, epoch, config, pool):
    def one(i):
        image = data.samples[i].image
        return random_augment(image, config.augment, stream(config.seed, AUGMENT, epoch, int(i)))

    return np.stack(list(pool.map(one, indices)))


def train(model: Model, data: Dataset, config: TrainConfig, val_data: Dataset | None = None,
          state: RMSpropState | None = None) -> tuple[Model, RMSpropState, TrainReport]:
    """Fit ``model`` in place with RMSprop and on-the-fly augmentation.

    Without ``val_data`` a stratified ``config.val_split`` of ``data`` is held
    out. Every random draw comes from a stream keyed by (seed, purpose, epoch,
    sample index), so runs are reproducible whatever the worker count.
    """
    if data.class_count != model.class_count:
        raise ConfigError(f"dataset has {data.class_count} classes, model {model.class_count}")
    if val_data is None:
        data, val_data = split(data, config.val_split, config.seed)
    if config.freeze_boundary is not None:
        set_trainable_boundary(model, config.freeze_boundary)
    if state is None:
        state = rmsprop_init(model, lr=config.lr, beta=config.beta, epsilon=config.epsilon)
    params = model.get_weights(trainable_only=True)
    labels = data.labels
    n = len(data)
    report = TrainReport()
    workers = worker_count()

    with threadpool_limits(limits=blas_threads(workers)), ThreadPoolExecutor(max_workers=workers) as pool:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            order = stream(config.seed, SHUFFLE, epoch).permutation(n)
            loss_sum, correct = 0.0, 0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                batch = _augment_batch(data, idx, epoch, config, pool)
                rngs = [stream(config.seed, DROPOUT, epoch, int(i)) for i in idx]
                probs, contexts = model.forward(batch, training=True, rng=rngs)
                loss = categorical_cross_entropy(probs, one_hot(labels[idx], model.class_count, probs.dtype))
                if not math.isfinite(loss.value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch starting {start}")
                grads = model.backward(loss.grad, contexts)
                rmsprop_step(params, grads, state)
                loss_sum += loss.value * len(idx)
                correct += int(np.sum(np.argmax(probs, axis=1) == labels[idx]))
            val = evaluate(model, val_data)
            record = EpochRecord(epoch, loss_sum / n, correct / n, val.loss, val.accuracy,
                                 time.perf_counter() - started)
            report.records.append(record)
            log.info("epoch %d: loss %.4f acc %.4f val_loss %.4f val_acc %.4f (%.1fs)", epoch,
                     record.train_loss, record.train_acc, record.val_loss, record.val_acc, record.seconds)
        clean = evaluate(model, data)
    report.final = {
        "train_loss": clean.loss,
        "train_acc": clean.accuracy,
        "val_loss": report.records[-1].val_loss,
        "val_acc": report.records[-1].val_acc,
    }
    return model, state, report


def export_curves(report: TrainReport, sink: TextIO | None = None) -> str:
    """Write the per-epoch curves as CSV; returns the text as well."""
    if not report.records:
        raise InputError("report has no epochs")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for epoch, *values in report.curve_rows():
        writer.writerow([epoch, *(f"{v:.9g}" for v in values)])
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def read_curves(source: TextIO | str | os.PathLike) -> list[dict[str, float]]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_curves(fh)
    rows = list(csv.DictReader(source))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in rows]
