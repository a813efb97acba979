"""Staged training schedules and confident-sample machinery.

A run proceeds through up to four phases: full training with the gate
bypassed, phase-spectrum learning (amplitude detached), amplitude-spectrum
learning (phase detached), and finally progressive suffix training in which
ever-longer prefixes are frozen while the re-initialized remainder trains
under Adam for short per-stage budgets.

All randomness is derived from the schedule seed through fixed tag streams:
shuffling is a pure function of (seed, epoch index), suffix re-initialization
and the selection augmentation each get one dedicated stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Adam, SGD, cross_entropy
from .errors import ConfigurationError, InputError
from .models import SegmentedModel
from .noise import NoisyDataset
from .report import EpochRow, RunReport
from .spectral import GateMode

# rng stream tags (second entry of the default_rng seed list)
_SHUFFLE = 0
_REINIT = 1
_AUGMENT = 2


@dataclass
class SGDConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass
class AdamConfig:
    lr: float = 1e-4


@dataclass
class PaddlesSchedule:
    """Epoch budgets and optimizer settings for one staged run."""

    t_a: int
    t_p: int
    t_0: int
    suffix_epochs: list[int] = field(default_factory=list)
    gate_index: int | None = None
    batch_size: int = 128
    seed: int = 0
    optimizer: SGDConfig = field(default_factory=SGDConfig)
    pes_optimizer: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if min(self.t_a, self.t_p, self.t_0) < 0:
            raise ConfigurationError("epoch budgets must be non-negative")
        if self.t_a + self.t_p + self.t_0 < 1:
            raise ConfigurationError("at least one of t_a, t_p, t_0 must be positive")
        if any(e < 0 for e in self.suffix_epochs):
            raise ConfigurationError("suffix epoch budgets must be non-negative")

    def echo(self) -> dict:
        return {
            "t_a": self.t_a,
            "t_p": self.t_p,
            "t_0": self.t_0,
            "suffix_epochs": list(self.suffix_epochs),
            "gate_index": self.gate_index,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "optimizer": {
                "kind": "sgd",
                "lr": self.optimizer.lr,
                "momentum": self.optimizer.momentum,
                "weight_decay": self.optimizer.weight_decay,
            },
            "pes_optimizer": {"kind": "adam", "lr": self.pes_optimizer.lr},
        }


@dataclass
class ConfidentSplit:
    """Partition of the training set by noisy-label / prediction agreement."""

    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray
    predicted: np.ndarray


def shuffle_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Mini-batch order for one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, _SHUFFLE, epoch]).permutation(n)


def _batched_probs(model: SegmentedModel, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    chunks = []
    with ag.no_grad():
        for start in range(0, len(x), batch_size):
            logits = model.forward(x[start : start + batch_size])
            chunks.append(ag.softmax_values(logits.values))
    return np.concatenate(chunks) if chunks else np.zeros((0, model.spec.num_classes))


def _subset_accuracies(model: SegmentedModel, ds: NoisyDataset) -> tuple[float, float]:
    preds = model.predict(ds.features)
    clean_mask = ~ds.flipped
    noisy_mask = ds.flipped
    acc_clean = float((preds[clean_mask] == ds.noisy_labels[clean_mask]).mean()) if clean_mask.any() else 0.0
    acc_noisy = float((preds[noisy_mask] == ds.noisy_labels[noisy_mask]).mean()) if noisy_mask.any() else 0.0
    return acc_clean, acc_noisy


def test_accuracy(model: SegmentedModel, test_x: np.ndarray, test_y: np.ndarray) -> float:
    if len(test_x) == 0:
        return 0.0
    return float((model.predict(test_x) == np.asarray(test_y)).mean())


def _run_epochs(
    model: SegmentedModel,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    optimizer,
    *,
    batch_size: int,
    seed: int,
    epoch_offset: int = 0,
    class_weights: np.ndarray | None = None,
    after_epoch=None,
) -> None:
    n = len(features)
    for local in range(epochs):
        epoch = epoch_offset + local
        order = shuffle_order(seed, epoch, n)
        loss_total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = model.forward(features[idx])
            loss = cross_entropy(logits, labels[idx], class_weights)
            ag.backward(loss)
            # parameters severed from the loss (a fully detached gate) see
            # an all-zero gradient, not a missing one
            for p in optimizer.params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.values)
            optimizer.step()
            loss_total += float(loss.values) * len(idx)
        if after_epoch is not None:
            after_epoch(epoch, loss_total / n)


def train_phase(
    model: SegmentedModel,
    ds: NoisyDataset,
    epochs: int,
    gate_mode: GateMode | None,
    optimizer,
    *,
    batch_size: int = 128,
    seed: int = 0,
    epoch_offset: int = 0,
    phase_tag: str = "full",
    report: RunReport | None = None,
    test_x: np.ndarray | None = None,
    test_y: np.ndarray | None = None,
) -> None:
    """Run mini-batch epochs with the gate in the given mode (None = bypass)."""
    if len(ds) == 0:
        raise InputError("cannot train on an empty dataset")
    model.gate_mode = gate_mode

    def after_epoch(epoch: int, mean_loss: float) -> None:
        if report is None:
            return
        acc_clean, acc_noisy = _subset_accuracies(model, ds)
        t_acc = test_accuracy(model, test_x, test_y) if test_x is not None else 0.0
        report.append(EpochRow(epoch, phase_tag, mean_loss, acc_clean, acc_noisy, t_acc))

    _run_epochs(
        model,
        ds.features,
        ds.noisy_labels,
        epochs,
        optimizer,
        batch_size=batch_size,
        seed=seed,
        epoch_offset=epoch_offset,
        after_epoch=after_epoch,
    )


def pes_suffix(
    model: SegmentedModel,
    ds: NoisyDataset,
    suffix_epochs: list[int],
    adam: AdamConfig,
    *,
    batch_size: int = 128,
    seed: int = 0,
    epoch_offset: int = 0,
    report: RunReport | None = None,
    test_x: np.ndarray | None = None,
    test_y: np.ndarray | None = None,
) -> None:
    """Progressive suffix training: freeze ever-longer prefixes, train the rest.

    The suffix is re-initialized once at entry; stage ``l`` then trains all
    stages l..T for its budget with stages 0..l-1 fixed.
    """
    j = model.gate_index
    n_suffix = model.num_stages - 1 - j
    if len(suffix_epochs) != n_suffix:
        raise ConfigurationError(
            f"suffix_epochs has {len(suffix_epochs)} budgets but {n_suffix} stages follow "
            f"the gate at index {j}"
        )
    reinit_seed = int(np.random.SeedSequence([seed, _REINIT]).generate_state(1)[0])
    model.reinit_suffix(j + 1, reinit_seed)
    offset = epoch_offset
    for step, l in enumerate(range(j + 1, model.num_stages)):
        model.freeze_prefix(l - 1)
        optimizer = Adam(model.trainable_parameters(), lr=adam.lr)
        train_phase(
            model,
            ds,
            suffix_epochs[step],
            GateMode.PASS_BOTH,
            optimizer,
            batch_size=batch_size,
            seed=seed,
            epoch_offset=offset,
            phase_tag=f"suffix{l}",
            report=report,
            test_x=test_x,
            test_y=test_y,
        )
        offset += suffix_epochs[step]


def run_paddles(
    model: SegmentedModel,
    ds: NoisyDataset,
    schedule: PaddlesSchedule,
    test_x: np.ndarray | None = None,
    test_y: np.ndarray | None = None,
    *,
    select_sigma: float = 0.05,
    select_seed: int | None = None,
    with_final_metrics: bool = True,
) -> RunReport:
    """Execute the full staged schedule and emit a complete report."""
    if schedule.gate_index is not None and schedule.gate_index != model.gate_index:
        raise ConfigurationError(
            f"schedule gate index {schedule.gate_index} != model gate index {model.gate_index}"
        )
    if schedule.suffix_epochs:
        n_suffix = model.num_stages - 1 - model.gate_index
        if len(schedule.suffix_epochs) != n_suffix:
            raise ConfigurationError(
                f"suffix_epochs has {len(schedule.suffix_epochs)} budgets but {n_suffix} "
                f"stages follow the gate"
            )

    started = time.time()
    report = RunReport(header={"schedule": schedule.echo(), "model_seed": model.spec.seed})
    cfg = schedule.optimizer
    optimizer = SGD(
        model.trainable_parameters(),
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    common = dict(
        batch_size=schedule.batch_size,
        seed=schedule.seed,
        report=report,
        test_x=test_x,
        test_y=test_y,
    )
    phases = [
        (schedule.t_a, None, "full"),
        (schedule.t_p, GateMode.DETACH_AMPLITUDE, "detach_amplitude"),
        (schedule.t_0, GateMode.DETACH_PHASE, "detach_phase"),
    ]
    offset = 0
    for epochs, mode, tag in phases:
        train_phase(model, ds, epochs, mode, optimizer,
                    epoch_offset=offset, phase_tag=tag, **common)
        offset += epochs
    if schedule.suffix_epochs:
        pes_suffix(model, ds, schedule.suffix_epochs, schedule.pes_optimizer,
                   epoch_offset=offset, **common)
    else:
        model.gate_mode = GateMode.PASS_BOTH if schedule.t_p or schedule.t_0 else None

    if with_final_metrics:
        seed = schedule.seed if select_seed is None else select_seed
        split = select_confident(model, ds, sigma=select_sigma, seed=seed)
        report.final = evaluate(split, ds, model, test_x, test_y)
    report.header["wall_time_s"] = time.time() - started
    return report


def select_confident(
    model: SegmentedModel, ds: NoisyDataset, sigma: float = 0.05, seed: int = 0
) -> ConfidentSplit:
    """Split samples by agreement between the noisy label and the averaged
    prediction under two augmentations (identity and seeded feature noise)."""
    feats = ds.features
    feature_std = feats.std(axis=0)
    rng = np.random.default_rng([seed, _AUGMENT])
    jitter = rng.standard_normal(feats.shape) * (sigma * feature_std)
    p_id = _batched_probs(model, feats)
    p_aug = _batched_probs(model, feats + jitter)
    predicted = np.argmax(0.5 * (p_id + p_aug), axis=1)
    agree = ds.noisy_labels == predicted
    return ConfidentSplit(
        labeled_indices=np.flatnonzero(agree),
        unlabeled_indices=np.flatnonzero(~agree),
        predicted=predicted,
    )


def evaluate(
    split: ConfidentSplit,
    ds: NoisyDataset,
    model: SegmentedModel,
    test_x: np.ndarray | None = None,
    test_y: np.ndarray | None = None,
) -> dict:
    """Confident-split quality: test accuracy, label recall, label precision."""
    correct = ds.noisy_labels == ds.clean_labels
    n_correct = int(correct.sum())
    in_split_correct = int(correct[split.labeled_indices].sum())
    n_labeled = len(split.labeled_indices)
    recall = in_split_correct / n_correct if n_correct else 0.0
    precision = in_split_correct / n_labeled if n_labeled else 0.0
    return {
        "test_acc": test_accuracy(model, test_x, test_y) if test_x is not None else 0.0,
        "label_recall": recall,
        "label_precision": precision,
        "recall_defined": n_correct > 0,
        "precision_defined": n_labeled > 0,
        "n_labeled": n_labeled,
        "n_correct_total": n_correct,
    }


def class_weights_for_split(split: ConfidentSplit, ds: NoisyDataset) -> np.ndarray:
    """Inverse-frequency weights over the retained labels: |D| / (K * count_c)."""
    labels = ds.noisy_labels[split.labeled_indices]
    counts = np.bincount(labels, minlength=ds.num_classes).astype(np.float64)
    total = float(len(labels))
    weights = np.zeros(ds.num_classes)
    present = counts > 0
    weights[present] = total / (ds.num_classes * counts[present])
    return weights


def weighted_ce_fit(
    model: SegmentedModel,
    split: ConfidentSplit,
    ds: NoisyDataset,
    epochs: int,
    optimizer,
    *,
    batch_size: int = 128,
    seed: int = 0,
    epoch_offset: int = 0,
) -> np.ndarray:
    """Train on the confident subset under inverse-frequency class weights.

    Returns the weight vector actually used.
    """
    if len(split.labeled_indices) == 0:
        raise InputError("confident subset is empty; nothing to fit")
    weights = class_weights_for_split(split, ds)
    if not np.isfinite(weights).all():
        raise InputError("class weights are not finite")
    _run_epochs(
        model,
        ds.features[split.labeled_indices],
        ds.noisy_labels[split.labeled_indices],
        epochs,
        optimizer,
        batch_size=batch_size,
        seed=seed,
        epoch_offset=epoch_offset,
        class_weights=weights,
    )
    return weights
