"""Mini-batch training loops, early stopping, learning curves, and the
transfer-against-scratch comparison harness.

Determinism contract: given equal data, equal model seed, and equal
:class:`TrainConfig`, a rerun reproduces the exact same parameter
trajectory and learning curve, byte for byte once written with
:meth:`LearningCurve.to_csv`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import FingerprintDataset
from .errors import ConfigError, DataError, NumericError
from .metrics import env_accuracy, rmse
from .models import LocalizerModel, UmlpModel, build_localizer, swap_base
from .nn import AdamState, adam_step, bce_loss, mse_loss


@dataclass(frozen=True)
class EarlyStop:
    """Stop when val loss has not improved by min_delta for patience epochs."""

    patience: int = 20
    min_delta: float = 1e-5

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0.0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters shared by all training entry points."""

    epochs: int = 100
    batch_size: int = 256
    lr: float = 5e-4
    beta1: float = 0.1
    beta2: float = 0.99
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    bce_weight: float = 1.0
    early_stop: EarlyStop | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.bce_weight < 0.0:
            raise ConfigError(f"bce_weight must be >= 0, got {self.bce_weight}")
        # lr/beta/eps ranges are enforced by adam_step


@dataclass
class LearningCurve:
    """Per-epoch loss trace; extras hold named auxiliary series."""

    label: str = ""
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def append(self, epoch: int, train_loss: float, val_loss: float, **extra) -> None:
        self.epochs.append(int(epoch))
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        for key, value in extra.items():
            self.extras.setdefault(key, []).append(float(value))

    def to_csv(self, path) -> None:
        """Write the curve; float repr keeps same-seed reruns byte-identical."""
        extra_keys = sorted(self.extras)
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# label={self.label}\n")
            fh.write(",".join(["epoch", "train_loss", "val_loss"] + extra_keys) + "\n")
            for i, epoch in enumerate(self.epochs):
                row = [str(epoch), repr(self.train_loss[i]), repr(self.val_loss[i])]
                row += [repr(self.extras[k][i]) for k in extra_keys]
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "LearningCurve":
        curve = cls()
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        body = []
        for ln in lines:
            if ln.startswith("# label="):
                curve.label = ln[len("# label="):]
            elif ln.startswith("#") or not ln.strip():
                continue
            else:
                body.append(ln)
        if not body:
            return curve
        header = body[0].split(",")
        extra_keys = header[3:]
        for ln in body[1:]:
            cells = ln.split(",")
            curve.epochs.append(int(cells[0]))
            curve.train_loss.append(float(cells[1]))
            curve.val_loss.append(float(cells[2]))
            for key, cell in zip(extra_keys, cells[3:]):
                curve.extras.setdefault(key, []).append(float(cell))
        return curve


def _batch_indices(n: int, batch_size: int, order: np.ndarray):
    """Consecutive slices of the epoch order.

    A trailing single-sample batch is dropped: batch statistics are
    undefined there and the step would abort inside batch norm.
    """
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if idx.size == 1 and n > 1:
            return
        yield idx


def _snapshot(model):
    return [a.copy() for a in model.state_arrays()]


def _restore(model, snap) -> None:
    for a, s in zip(model.state_arrays(), snap):
        a[...] = s


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"{what} became non-finite at epoch {epoch}")


class _EarlyStopTracker:
    """Best-value snapshots plus the patience counter.

    Snapshots follow any strict improvement, so the restored model sits
    exactly at the minimum of the val curve; the patience counter only
    resets on improvements larger than min_delta.
    """

    def __init__(self, model, config: EarlyStop | None):
        self.model = model
        self.config = config
        self.best_val = np.inf
        self.significant_best = np.inf
        self.best_state = None
        self.wait = 0

    def update(self, val_loss: float) -> bool:
        """Record the epoch; returns True when training should stop."""
        if self.config is None:
            return False
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_state = _snapshot(self.model)
        if self.significant_best - val_loss > self.config.min_delta:
            self.significant_best = val_loss
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.config.patience

    def finish(self) -> None:
        if self.config is not None and self.best_state is not None:
            _restore(self.model, self.best_state)


def _run_epochs(model, config: TrainConfig, n_train: int, step_fn, eval_fn, curve: LearningCurve) -> LearningCurve:
    """Shared epoch driver for both model families."""
    if n_train == 0:
        raise DataError("training split is empty")
    params = model.parameters()
    grads = model.gradients()
    opt = AdamState.for_parameters(params)
    shuffle_rng = np.random.default_rng(config.seed)
    stopper = _EarlyStopTracker(model, config.early_stop)
    for epoch in range(1, config.epochs + 1):
        model.set_mode("train")
        order = shuffle_rng.permutation(n_train) if config.shuffle else np.arange(n_train)
        total, used = 0.0, 0
        for b, idx in enumerate(_batch_indices(n_train, config.batch_size, order)):
            try:
                loss = step_fn(idx)
                adam_step(params, grads, opt, config.lr, config.beta1, config.beta2, config.eps)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            total += loss * idx.size
            used += idx.size
        if used == 0:
            raise DataError(
                f"batch_size {config.batch_size} yields no usable batch for {n_train} samples"
            )
        train_loss = total / used
        _check_finite(train_loss, "train loss", epoch)
        val_loss, extra = eval_fn()
        _check_finite(val_loss, "val loss", epoch)
        curve.append(epoch, train_loss, val_loss, **extra)
        if stopper.update(val_loss):
            break
    stopper.finish()
    return curve


def train_localizer(
    model: LocalizerModel,
    train: FingerprintDataset,
    val: FingerprintDataset,
    config: TrainConfig,
    label: str = "no TL",
) -> LearningCurve:
    """Train a coordinate regressor in place; returns its learning curve.

    Losses are MSE in the normalized coordinate frame; the val column is
    computed in inference mode.  With early stopping configured, the
    model ends at the weights of its best val epoch.
    """
    x, y = train.features, train.labels
    xv, yv = val.features, val.labels

    def step(idx):
        pred = model.forward(x[idx])
        loss, grad = mse_loss(pred, y[idx])
        model.backward(grad)
        return loss

    def evaluate():
        loss, _ = mse_loss(model.predict(xv), yv)
        return loss, {}

    return _run_epochs(
        model, config, train.n_samples, step, evaluate, LearningCurve(label=label)
    )


def train_with_transfer(
    source: LocalizerModel,
    train: FingerprintDataset,
    val: FingerprintDataset,
    config: TrainConfig,
    model_seed: int = 0,
    label: str = "with TL",
) -> tuple[LocalizerModel, LearningCurve]:
    """Build a fresh target model, implant the source base, fine-tune all.

    The target shares the source architecture but is sized for the target
    feature width; every block stays trainable during fine-tuning.
    """
    target = build_localizer(train.n_features, source.config, seed=model_seed)
    swap_base(source, target)
    curve = train_localizer(target, train, val, config, label=label)
    return target, curve


def train_umlp(
    model: UmlpModel,
    train: FingerprintDataset,
    val: FingerprintDataset,
    config: TrainConfig,
    label: str = "unified",
) -> LearningCurve:
    """Train the two-head model on MSE + bce_weight * BCE.

    Extras per epoch: ``val_rmse`` over coordinates and ``val_accuracy``
    for the environment bit.  Both splits must carry environment tags.
    """
    if train.env_tag is None or val.env_tag is None:
        raise DataError("unified training needs env_tag on both splits")
    x, y = train.features, train.labels
    env = train.env_tag.astype(np.float64).reshape(-1, 1)
    xv, yv = val.features, val.labels
    env_v = val.env_tag.astype(np.float64).reshape(-1, 1)

    def step(idx):
        coords, logits = model.forward(x[idx])
        reg_loss, reg_grad = mse_loss(coords, y[idx])
        cls_loss, cls_grad = bce_loss(logits, env[idx])
        model.backward(reg_grad, config.bce_weight * cls_grad)
        return reg_loss + config.bce_weight * cls_loss

    def evaluate():
        coords, logits = model.predict(xv)
        reg_loss, _ = mse_loss(coords, yv)
        cls_loss, _ = bce_loss(logits, env_v)
        return reg_loss + config.bce_weight * cls_loss, {
            "val_rmse": rmse(coords, yv),
            "val_accuracy": env_accuracy(logits, val.env_tag),
        }

    return _run_epochs(
        model, config, train.n_samples, step, evaluate, LearningCurve(label=label)
    )


def epochs_to_reach(curve: LearningCurve, threshold: float) -> int | None:
    """First epoch whose val loss is <= threshold, or None if never."""
    for epoch, loss in zip(curve.epochs, curve.val_loss):
        if loss <= threshold:
            return epoch
    return None


@dataclass(frozen=True)
class TransferComparison:
    """Paired scratch-vs-transfer run sharing everything but the base init."""

    scratch: LearningCurve
    transfer: LearningCurve
    threshold: float
    scratch_epoch: int | None
    transfer_epoch: int | None
    scratch_model: LocalizerModel = field(repr=False, default=None)
    transfer_model: LocalizerModel = field(repr=False, default=None)

    @property
    def transfer_faster(self) -> bool:
        if self.transfer_epoch is None:
            return False
        if self.scratch_epoch is None:
            return True
        return self.transfer_epoch < self.scratch_epoch


def compare_transfer_to_scratch(
    source: LocalizerModel,
    train: FingerprintDataset,
    val: FingerprintDataset,
    config: TrainConfig,
    model_seed: int = 0,
    threshold_at: int | None = None,
) -> TransferComparison:
    """Race a transfer-initialized model against a scratch twin.

    Both runs use the same model seed, dropout stream, shuffle order, and
    optimizer settings; only the base block's starting values differ.
    The threshold is the scratch run's val loss at ``threshold_at``
    (default: its final epoch).
    """
    scratch = build_localizer(train.n_features, source.config, seed=model_seed)
    scratch_curve = train_localizer(scratch, train, val, config, label="no TL")
    target, transfer_curve = train_with_transfer(
        source, train, val, config, model_seed=model_seed
    )
    k = threshold_at if threshold_at is not None else len(scratch_curve.epochs)
    if not (1 <= k <= len(scratch_curve.epochs)):
        raise ConfigError(f"threshold_at {k} outside the scratch curve")
    threshold = scratch_curve.val_loss[k - 1]
    return TransferComparison(
        scratch=scratch_curve,
        transfer=transfer_curve,
        threshold=threshold,
        scratch_epoch=epochs_to_reach(scratch_curve, threshold),
        transfer_epoch=epochs_to_reach(transfer_curve, threshold),
        scratch_model=scratch,
        transfer_model=target,
    )
