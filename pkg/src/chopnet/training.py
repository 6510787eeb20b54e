"""Minibatch SGD training with momentum, step-down LR, and snapshots.

The solver settings mirror the stock Caffe LeNet recipe: SGD with momentum
0.9 and weight decay 5e-4, base learning rate 0.01 dropped by gamma = 0.1
when a step_size_percent fraction of the total epochs has elapsed, batch
size 64, 30 epochs, with a validation pass and a checkpoint snapshot every
epoch.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network
from .checkpoint import save_checkpoint
from .dataset import compute_channel_means, load_split_tiles
from .errors import (ConfigError, EpochOutOfRange, NonFiniteLoss,
                     ShapeMismatch)

_INT_KEYS = {"epochs", "batch_size", "seed",
             "snapshot_interval_epochs", "validation_interval_epochs"}
_FLOAT_KEYS = {"base_lr", "step_size_percent", "gamma",
               "momentum", "weight_decay"}
_STR_KEYS = {"solver", "lr_policy"}


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 64
    solver: str = "SGD"
    base_lr: float = 0.01
    lr_policy: str = "step_down"
    step_size_percent: float = 33.0
    gamma: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0005
    seed: int = 0
    snapshot_interval_epochs: int = 1
    validation_interval_epochs: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 < self.step_size_percent <= 100:
            raise ConfigError("step_size_percent must be in (0, 100], "
                              f"got {self.step_size_percent}")
        if self.solver != "SGD":
            raise ConfigError(f"only the SGD solver is implemented, "
                              f"got {self.solver!r}")
        if self.lr_policy != "step_down":
            raise ConfigError(f"only the step_down policy is implemented, "
                              f"got {self.lr_policy!r}")
        if self.snapshot_interval_epochs < 1:
            raise ConfigError("snapshot_interval_epochs must be >= 1")
        if self.validation_interval_epochs < 1:
            raise ConfigError("validation_interval_epochs must be >= 1")


def lr_at(config: TrainingConfig, epoch: int) -> float:
    """Learning rate in effect at a given 0-based epoch.

    The step boundary is a fixed number of epochs computed once from the
    total: round(epochs * step_size_percent / 100), at least 1. With the
    stock settings (30 epochs, 33%) the rate drops at epochs 10 and 20.
    """
    if not 0 <= epoch < config.epochs:
        raise EpochOutOfRange(
            f"epoch {epoch} outside [0, {config.epochs})")
    step = max(1, int(config.epochs * config.step_size_percent / 100 + 0.5))
    return config.base_lr * config.gamma ** (epoch // step)


def preprocess(tiles, channel_means, dtype=np.float32):
    """(pixel - channel_mean) / 255 per channel, as NCHW float."""
    tiles = np.asarray(tiles)
    if tiles.ndim != 4 or tiles.shape[3] != 3:
        raise ShapeMismatch(
            f"expected tiles of shape (N, S, S, 3), got {tiles.shape}")
    means = np.asarray(channel_means, dtype=dtype)
    if means.shape != (3,):
        raise ShapeMismatch(f"expected 3 channel means, got {means.shape}")
    out = (tiles.astype(dtype) - means) / dtype(255)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float


@dataclass
class MetricsHistory:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)


def _evaluate_arrays(params, batch_x, labels, block=256):
    """Mean loss and top-1 accuracy over preprocessed samples.

    Evaluation walks the data in fixed-size blocks and accumulates
    per-sample losses in float64, so the result does not depend on any
    caller-chosen batch size.
    """
    n = len(batch_x)
    loss_total = 0.0
    correct = 0
    for start in range(0, n, block):
        xb = batch_x[start:start + block]
        yb = labels[start:start + block]
        logits, _ = network.forward(params, xb)
        log_probs = network._log_softmax(logits)
        loss_total += float(
            -log_probs[np.arange(len(yb)), yb].sum(dtype=np.float64))
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    return loss_total / n, correct / n


def evaluate_split(params, manifest, dataset_dir, split="val", _block=256):
    """Mean loss and top-1 accuracy of params over one split of a dataset."""
    tiles, labels = load_split_tiles(manifest, dataset_dir, split)
    means = manifest.channel_means
    if means is None:
        means = compute_channel_means(manifest, dataset_dir)
    batch_x = preprocess(tiles, means)
    return _evaluate_arrays(params, batch_x, labels, block=_block)


def _sgd_step(params, velocity, grads, lr, momentum, weight_decay):
    for key in network.LAYER_ORDER:
        w = params.tensors[key]
        g = grads[key] + weight_decay * w
        velocity[key] = momentum * velocity[key] + g
        w -= lr * velocity[key]


def train(manifest, dataset_dir, config: TrainingConfig, arch=None,
          out_dir=None, log=None):
    """Train a classifier on the manifest's train split.

    Returns (params, MetricsHistory, list of snapshot paths). Snapshots
    (epoch_{N}.ckpt) are written only when out_dir is given. Runs are
    bit-reproducible for identical inputs in single-threaded mode.
    """
    if arch is None:
        arch = network.Architecture(input_size=manifest.tile_size,
                                    input_channels=3,
                                    num_classes=len(manifest.classes))
    if arch.num_classes != len(manifest.classes):
        raise ShapeMismatch(
            f"architecture has {arch.num_classes} classes, manifest has "
            f"{len(manifest.classes)}")
    train_tiles, train_labels = load_split_tiles(manifest, dataset_dir,
                                                 "train")
    val_tiles, val_labels = load_split_tiles(manifest, dataset_dir, "val")
    means = manifest.channel_means
    if means is None:
        means = compute_channel_means(manifest, dataset_dir)
    train_x = preprocess(train_tiles, means)
    val_x = preprocess(val_tiles, means)
    del train_tiles, val_tiles

    params = network.init_params(arch, seed=config.seed,
                                 class_names=manifest.class_names())
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    history = MetricsHistory()
    snapshots = []
    n = len(train_x)
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        seq = np.random.SeedSequence([config.seed, epoch])
        perm = np.random.Generator(np.random.PCG64(seq)).permutation(n)
        batch_losses = []
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            try:
                loss_val, grads = network.loss_and_gradients(
                    params, train_x[idx], train_labels[idx])
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(
                    f"epoch {epoch + 1}, batch {bi + 1}: {exc}")
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(
                    f"epoch {epoch + 1}, batch {bi + 1}: loss {loss_val}")
            batch_losses.append(loss_val)
            _sgd_step(params, velocity, grads, lr,
                      config.momentum, config.weight_decay)
        train_loss = sum(batch_losses) / len(batch_losses)
        val_loss = val_accuracy = float("nan")
        if (epoch + 1) % config.validation_interval_epochs == 0:
            try:
                val_loss, val_accuracy = _evaluate_arrays(params, val_x,
                                                          val_labels)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"epoch {epoch + 1}, validation: {exc}")
        if out_dir is not None \
                and (epoch + 1) % config.snapshot_interval_epochs == 0:
            path = Path(out_dir) / f"epoch_{epoch + 1}.ckpt"
            save_checkpoint(params, path)
            snapshots.append(path)
        history.rows.append(EpochMetrics(
            epoch=epoch + 1, train_loss=train_loss, val_loss=val_loss,
            val_accuracy=val_accuracy, lr=lr))
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs}  lr {lr:g}  "
                f"train loss {train_loss:.4f}  val loss {val_loss:.4f}  "
                f"val acc {val_accuracy:.4f}")
    return params, history, snapshots


# --- config files and metrics persistence ---

def parse_config_text(text) -> dict:
    """Parse flat key = value lines ('#' comments) into typed values."""
    values = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {ln}: expected key = value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise ConfigError(f"line {ln}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"line {ln}: bad value {value!r} for {key}")
    return values


def load_config(path, overrides=None) -> TrainingConfig:
    """TrainingConfig from a config file, with overrides taking precedence.

    Override entries whose value is None are ignored, so optional CLI
    flags can be passed through directly.
    """
    values = parse_config_text(Path(path).read_text())
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return TrainingConfig(**values)


def write_metrics_csv(history: MetricsHistory, path) -> None:
    lines = ["epoch,train_loss,val_loss,val_accuracy,lr"]
    for row in history.rows:
        val_loss = "" if math.isnan(row.val_loss) else repr(row.val_loss)
        val_acc = "" if math.isnan(row.val_accuracy) else repr(row.val_accuracy)
        lines.append(f"{row.epoch},{repr(row.train_loss)},{val_loss},"
                     f"{val_acc},{repr(row.lr)}")
    Path(path).write_text("\n".join(lines) + "\n")
