"""From-scratch (FS) and fine-tuning (FT) training regimens."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, NormStats, SplitSpec, Splits, concat, normalize, split_random
from .errors import LeakageError, TrainingDivergedError
from .metrics import spatial_accuracy
from .nn import (AdamState, Architecture, NetworkParams, TrainConfig, TrainHistory, adam_step,
                 backward, forward, init_params, loss)

log = logging.getLogger(__name__)


def _streams(seed: int):
    """Independent (initialization, shuffling) seed sequences from one run seed."""
    return np.random.SeedSequence(seed).spawn(2)


def fit(params: NetworkParams, X_train, Y_train, X_val, Y_val, config: TrainConfig,
        shuffle_rng: np.random.Generator) -> tuple[NetworkParams, TrainHistory]:
    """Mini-batch Adam with early stopping on validation spatial accuracy.

    Returns the parameters of the best epoch (1-based); with zero epochs the
    input parameters come back unchanged.
    """
    history = TrainHistory()
    history.initial_val_accuracy = spatial_accuracy(forward(params, X_val), Y_val)
    state = AdamState.zeros(params)
    best, best_acc, since_best = params, np.inf, 0
    n = len(X_train)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grads = backward(params, X_train[idx], Y_train[idx])
            total += value * len(idx)
            params = adam_step(params, grads, state, config.learning_rate, config.beta1,
                               config.beta2, config.eps)
        pred = forward(params, X_val)
        val_loss = loss(pred, Y_val)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(
                f"validation loss {val_loss} at epoch {epoch}; last train loss {total / n:.4g}, "
                f"max |param| {np.max(np.abs(params.flat)):.4g}")
        acc = spatial_accuracy(pred, Y_val)
        history.train_loss.append(total / n)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(acc)
        if acc < best_acc:
            best, best_acc, since_best = params, acc, 0
            history.best_epoch = epoch
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                break
    return best, history


@dataclass
class TrainedModel:
    params: NetworkParams
    norm: NormStats
    history: TrainHistory
    provenance: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        """Gaze predictions for raw (unnormalized) sensor frames."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        return forward(self.params, self.norm.apply(X))

    def evaluate(self, dataset: Dataset, idx) -> float:
        idx = np.asarray(idx, dtype=np.int64)
        return spatial_accuracy(self.predict(dataset.X[idx]), dataset.gaze[idx])

    @property
    def val_accuracy(self) -> float:
        if self.history.best_epoch == 0:
            return self.history.initial_val_accuracy
        return self.history.val_accuracy[self.history.best_epoch - 1]


def _train_subject(init: NetworkParams, dataset: Dataset, splits: Splits, config: TrainConfig,
                   shuffle_ss, provenance: dict) -> TrainedModel:
    subjects = set(dataset.subjects[np.concatenate([splits.train, splits.validation])].tolist())
    if len(subjects) != 1:
        raise ValueError(f"subject-specific training needs one subject, found {sorted(subjects)}")
    normed, stats = normalize(dataset, splits.train)
    params, history = fit(init, normed.X[splits.train], dataset.gaze[splits.train],
                          normed.X[splits.validation], dataset.gaze[splits.validation],
                          config, np.random.default_rng(shuffle_ss))
    prov = {"subject": subjects.pop(), "n_train": int(len(splits.train)), "seed": config.seed}
    prov.update(provenance)
    return TrainedModel(params, stats, history, prov)


def train_fs(dataset: Dataset, splits: Splits, config: TrainConfig,
             arch: Architecture = Architecture(), provenance: dict | None = None) -> TrainedModel:
    """Subject-specific training from a random initialization."""
    init_ss, shuffle_ss = _streams(config.seed)
    return _train_subject(init_params(init_ss, arch), dataset, splits, config, shuffle_ss,
                          {"regimen": "FS", **(provenance or {})})


def fine_tune(pretrained: NetworkParams, dataset: Dataset, splits: Splits, config: TrainConfig,
              arch: Architecture | None = None, provenance: dict | None = None) -> TrainedModel:
    """Same loop as :func:`train_fs`, started from pre-trained weights."""
    if arch is not None and pretrained.arch != arch:
        raise ValueError(f"checkpoint architecture {pretrained.arch} does not match {arch}")
    _, shuffle_ss = _streams(config.seed)
    return _train_subject(pretrained.copy(), dataset, splits, config, shuffle_ss,
                          {"regimen": "FT", **(provenance or {})})


@dataclass
class PretrainPool:
    """Every subject's data except the target's."""

    target_subject: str
    datasets: list[Dataset]

    def __post_init__(self):
        self.check_leakage()

    @property
    def subject_ids(self) -> set[str]:
        out = set()
        for d in self.datasets:
            out |= d.subject_ids
        return out

    def check_leakage(self) -> None:
        if self.target_subject in self.subject_ids:
            raise LeakageError(f"target subject {self.target_subject} present in pre-training pool")

    def dataset(self) -> Dataset:
        return concat(self.datasets)


def pretrain_loso(pool: PretrainPool, config: TrainConfig, arch: Architecture = Architecture(),
                  val_fraction: float = 0.15) -> NetworkParams:
    """Train one model on the concatenated out-of-subject pool; weights only."""
    pool.check_leakage()
    data = pool.dataset()
    splits = split_random(data, SplitSpec((1 - val_fraction, val_fraction, 0.0), seed=config.seed))
    normed, _ = normalize(data, splits.train)
    init_ss, shuffle_ss = _streams(config.seed)
    params, history = fit(init_params(init_ss, arch), normed.X[splits.train], data.gaze[splits.train],
                          normed.X[splits.validation], data.gaze[splits.validation], config,
                          np.random.default_rng(shuffle_ss))
    log.debug("pretrained for %s: %d epochs, best val %.3f deg", pool.target_subject,
              len(history), min(history.val_accuracy, default=np.nan))
    return params
