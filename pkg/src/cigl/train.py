"""Training loops for the dual-mask sparse trainer and its baselines.

Methods
-------
cigl         dual-mask sparse training with weight & mask averaging
rigl         magnitude-prune / gradient-regrow baseline (single mask)
rigl_wdp     rigl plus per-iteration Bernoulli weight dropout
rigl_mcdp    trained exactly like rigl_wdp; Monte Carlo dropout at prediction
dense        no sparsity constraint, plain SGD training
cigl_no_rm   ablation: no random mask (averages bare masked snapshots)
cigl_no_wma  ablation: no averaging (returns the final iterate)

All methods share one loop so degenerate configurations coincide
bit-exactly: cigl with keep_prob=1 equals cigl_no_rm, cigl_no_wma with
keep_prob=1 equals rigl, and rigl at sparsity 0 equals dense.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .calibration import ece, label_smoothing_targets, mixup_batch, nll
from .data import BatchIterator, Dataset
from .masks import (
    DeterministicMask,
    WmaAccumulator,
    build_sparsity_plan,
    init_mask,
    mask_update_fraction,
    ones_mask_like,
    sample_random_mask,
    update_deterministic_mask,
    wma_update,
)
from .rng import substream
from .tensor import LrSchedule, MlpModel, SgdState, backward, forward, init_mlp, lr_at, sgd_step, softmax

log = logging.getLogger(__name__)

METHODS = ("cigl", "rigl", "rigl_wdp", "rigl_mcdp", "dense", "cigl_no_rm", "cigl_no_wma")

_USES_RANDOM_MASK = {"cigl", "cigl_no_wma", "rigl_wdp", "rigl_mcdp"}
_USES_WMA = {"cigl", "cigl_no_rm"}
_MC_PREDICT = {"rigl_mcdp"}


class NonFiniteLossError(FloatingPointError):
    """Training diverged; carries a diagnostic snapshot."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    method: str = "cigl"
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    sparsity: float = 0.9
    sparsity_mode: str = "uniform"  # uniform | erk
    mask_exclude: tuple[int, ...] = ()
    update_interval: int = 50  # iterations between topology updates
    update_fraction: float = 0.3  # initial prune/regrow fraction
    update_end_fraction: float = 0.75  # topology frozen past this share of iterations
    keep_prob: float = 0.9  # random-mask keep probability
    wma_start_epoch: int | None = None  # default: floor(0.8 * epochs)
    wma_every: int = 1  # collect a snapshot every this many epochs
    base_lr: float = 0.1
    lr_milestones: tuple[int, ...] = (50, 75)
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    mc_samples: int = 30
    label_smoothing: float = 0.0
    mixup_alpha: float = 0.0

    def resolved_wma_start(self) -> int:
        if self.wma_start_epoch is not None:
            return self.wma_start_epoch
        return int(0.8 * self.epochs)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must be in [0, 1)")
        if self.update_interval < 1:
            raise ValueError("update_interval must be >= 1")
        if not 0.0 <= self.update_fraction <= 1.0:
            raise ValueError("update_fraction must be in [0, 1]")
        if not 0.0 < self.update_end_fraction <= 1.0:
            raise ValueError("update_end_fraction must be in (0, 1]")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in [0, 1]")
        if self.resolved_wma_start() >= self.epochs:
            raise ValueError("wma_start_epoch must be < epochs")
        if self.wma_every < 1:
            raise ValueError("wma_every must be >= 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.mixup_alpha < 0.0:
            raise ValueError("mixup_alpha must be >= 0")
        # constructing the schedule validates base_lr / milestones / decay
        LrSchedule(self.base_lr, self.lr_milestones, self.lr_decay)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    test_ece: float
    lr: float
    current_sparsity: float
    n_models_in_wma: int

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "test_accuracy": self.test_accuracy,
            "test_ece": self.test_ece,
            "lr": self.lr,
            "current_sparsity": self.current_sparsity,
            "n_models_in_wma": self.n_models_in_wma,
        }


@dataclass
class TrainResult:
    model: MlpModel  # the method's output weights (masked / averaged)
    mask: DeterministicMask
    history: list[EpochRecord]
    n_models: int
    mask_update_log: list[tuple[int, tuple[int, ...]]]  # (iteration, nnz per layer)
    final_probs: np.ndarray  # test probabilities of the output model
    config: TrainConfig


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    nll: float
    probs: np.ndarray


def predict_logits(model: MlpModel, features: np.ndarray, batch_size: int = 512) -> np.ndarray:
    out = np.empty((len(features), model.weights[-1].shape[0]), dtype=np.float64)
    for start in range(0, len(features), batch_size):
        out[start : start + batch_size] = forward(model, features[start : start + batch_size])
    return out


def evaluate(model: MlpModel, data: Dataset, batch_size: int = 512) -> EvalResult:
    """Accuracy, mean NLL, and probability rows; argmax ties break to the
    lowest class index."""
    probs = softmax(predict_logits(model, data.features, batch_size))
    pred = probs.argmax(axis=1)
    acc = float(np.mean(pred == data.labels))
    return EvalResult(acc, nll(probs, data.labels), probs)


def predict_mc_dropout(model: MlpModel, mask: DeterministicMask, keep_prob: float,
                       n_samples: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Mean softmax over n_samples random-mask draws applied to the weights."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    total = np.zeros((len(x), model.weights[-1].shape[0]), dtype=np.float64)
    for _ in range(n_samples):
        z = sample_random_mask(mask, keep_prob, rng)
        masked = MlpModel([w * m * zz for w, m, zz in zip(model.weights, mask.layers, z)],
                          model.biases)
        total += softmax(forward(masked, x))
    return total / n_samples


def _masked_model(model: MlpModel, mask: DeterministicMask, z) -> MlpModel:
    return MlpModel(
        [w * m * zz for w, m, zz in zip(model.weights, mask.layers, z)],
        model.biases,
    )


def _apply_topology(model: MlpModel, mask: DeterministicMask) -> None:
    for w, m in zip(model.weights, mask.layers):
        w *= m


def _snapshot(model: MlpModel, mask: DeterministicMask, z):
    weights = [w * m * zz for w, m, zz in zip(model.weights, mask.layers, z)]
    return weights + [b.copy() for b in model.biases]


def _model_from_mean(acc: WmaAccumulator, mask: DeterministicMask, n_layers: int) -> MlpModel:
    weights = [a.astype(np.float32) * m for a, m in zip(acc.means[:n_layers], mask.layers)]
    biases = [a.astype(np.float32) for a in acc.means[n_layers:]]
    return MlpModel(weights, biases)


def train(config: TrainConfig, train_data: Dataset, test_data: Dataset) -> TrainResult:
    """Run the configured method end to end. One epoch record per epoch;
    the test metrics track the model the method would output if stopped at
    that epoch."""
    config.validate()
    if train_data.n_classes != test_data.n_classes:
        raise ValueError("train/test class count mismatch")
    method = config.method
    seed = config.seed

    dims = [train_data.n_features, *config.hidden, train_data.n_classes]
    model = init_mlp(dims, substream(seed, "init.weights"))
    shapes = [w.shape for w in model.weights]
    sparsity = 0.0 if method == "dense" else config.sparsity
    plan = build_sparsity_plan(shapes, sparsity, config.sparsity_mode, config.mask_exclude)
    mask = init_mask(shapes, plan, substream(seed, "mask.init"))
    _apply_topology(model, mask)

    state = SgdState.for_model(model, config.momentum, config.weight_decay)
    schedule = LrSchedule(config.base_lr, config.lr_milestones, config.lr_decay)
    batches = BatchIterator(train_data, config.batch_size, seed)
    total_iters = config.epochs * batches.batches_per_epoch()
    update_end = int(config.update_end_fraction * total_iters)
    wma_start = config.resolved_wma_start()

    updates_topology = method != "dense"
    random_masked = method in _USES_RANDOM_MASK
    collects = method in _USES_WMA
    z_rng = substream(seed, "mask.random") if random_masked else None
    mix_rng = substream(seed, "train.mixup") if config.mixup_alpha > 0 else None
    z_ones = ones_mask_like(mask)

    acc = WmaAccumulator()
    history: list[EpochRecord] = []
    update_log: list[tuple[int, tuple[int, ...]]] = []
    final_probs: np.ndarray | None = None
    t = 0

    for epoch in range(1, config.epochs + 1):
        lr = lr_at(schedule, epoch - 1)
        loss_sum = 0.0
        n_batches = 0
        z = z_ones
        for xb, yb in batches.epoch_batches(epoch - 1):
            t += 1
            targets = label_smoothing_targets(yb, config.label_smoothing, train_data.n_classes)
            if mix_rng is not None:
                perm = mix_rng.permutation(len(xb))
                xb, targets, _ = mixup_batch(xb, targets, xb[perm], targets[perm],
                                             config.mixup_alpha, mix_rng)

            if updates_topology and t % config.update_interval == 0 and t < update_end:
                # dense gradients (all positions) at the bare masked weights
                _, dense_gw, _ = backward(_masked_model(model, mask, z_ones), xb, targets)
                frac = mask_update_fraction(t, config.update_fraction, update_end)
                new_mask = update_deterministic_mask(model.weights, dense_gw, mask, frac)
                for v, new_m, old_m in zip(state.velocity_w, new_mask.layers, mask.layers):
                    v[new_m & ~old_m] = 0.0
                mask = new_mask
                _apply_topology(model, mask)
                update_log.append((t, mask.nnz()))

            z = sample_random_mask(mask, config.keep_prob, z_rng) if random_masked else z_ones
            try:
                loss, gw, gb = backward(_masked_model(model, mask, z), xb, targets)
            except ValueError as exc:
                if "non-finite" not in str(exc):
                    raise
                raise NonFiniteLossError(
                    f"training diverged at epoch {epoch}, iteration {t}: {exc}",
                    {"epoch": epoch, "iteration": t, "lr": lr, "loss": float("nan")},
                ) from None
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, iteration {t}",
                    {"epoch": epoch, "iteration": t, "lr": lr, "loss": loss},
                )
            gw = [g * m * zz for g, m, zz in zip(gw, mask.layers, z)]
            sgd_step(model, gw, gb, state, lr)
            _apply_topology(model, mask)
            loss_sum += loss
            n_batches += 1

        if collects and epoch > wma_start and (epoch - wma_start) % config.wma_every == 0:
            wma_update(acc, _snapshot(model, mask, z))

        current = _output_model(model, mask, acc, collects)
        if method in _MC_PREDICT:
            probs = predict_mc_dropout(model, mask, config.keep_prob, config.mc_samples,
                                       test_data.features, substream(seed, f"mc.eval.{epoch}"))
        else:
            probs = evaluate(current, test_data).probs
        pred = probs.argmax(axis=1)
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n_batches,
                test_accuracy=float(np.mean(pred == test_data.labels)),
                test_ece=ece(probs, test_data.labels),
                lr=lr,
                current_sparsity=mask.sparsity(),
                n_models_in_wma=acc.n_models,
            )
        )
        final_probs = probs

    result_model = _output_model(model, mask, acc, collects)
    return TrainResult(
        model=result_model,
        mask=mask,
        history=history,
        n_models=acc.n_models,
        mask_update_log=update_log,
        final_probs=final_probs,
        config=config,
    )


def _output_model(model: MlpModel, mask: DeterministicMask, acc: WmaAccumulator,
                  collects: bool) -> MlpModel:
    if collects and acc.n_models > 0:
        return _model_from_mean(acc, mask, len(model.weights))
    return MlpModel([w * m for w, m in zip(model.weights, mask.layers)],
                    [b.copy() for b in model.biases])


def train_cigl(config: TrainConfig, train_data: Dataset, test_data: Dataset) -> TrainResult:
    if config.method != "cigl":
        raise ValueError("train_cigl requires method == 'cigl'")
    return train(config, train_data, test_data)


def train_rigl(config: TrainConfig, train_data: Dataset, test_data: Dataset) -> TrainResult:
    if config.method != "rigl":
        raise ValueError("train_rigl requires method == 'rigl'")
    return train(config, train_data, test_data)


def train_variant(config: TrainConfig, train_data: Dataset, test_data: Dataset) -> TrainResult:
    if config.method not in ("rigl_wdp", "rigl_mcdp", "dense", "cigl_no_rm", "cigl_no_wma"):
        raise ValueError(f"train_variant does not handle method {config.method!r}")
    return train(config, train_data, test_data)
