"""Before/after comparison of a filtered dataset against a random control.

A stratified holdout is carved from the full dataset once. Each of three
datasets (the full data, the retained subset, a random subset of the same
size) is then treated as its own benchmark: models train on its
non-holdout part and are scored on its holdout part. With nothing removed,
the "after" benchmark is the "before" benchmark.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .classifiers import TrainConfig, accuracy, train_linear, train_rbf
from .core import EmbeddedDataset, FilterResult
from .errors import AFLiteError, EvaluationError


@dataclass(frozen=True)
class EvaluationReport:
    dataset_sizes: tuple[int, int, int]  # original, retained, control
    linear_accuracy: tuple[float, float, float]  # before, after, random control
    rbf_accuracy: tuple[float, float, float] | None  # None for multi-class data
    bias_removal: float | None = None
    flip_removal: float | None = None
    holdout_fraction: float = 0.2
    holdout_sizes: tuple[int, int, int] = (0, 0, 0)
    seed: int | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("dataset_sizes", "linear_accuracy", "rbf_accuracy", "holdout_sizes"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


def stratified_holdout(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask selecting ``round(fraction * count)`` instances of every label."""
    mask = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        take = int(round(fraction * len(members)))
        mask[rng.choice(members, size=take, replace=False)] = True
    return mask


def _benchmark(dataset: EmbeddedDataset, members: np.ndarray, holdout: np.ndarray, name: str,
               train_config: TrainConfig, n_classes: int):
    train = members & ~holdout
    test = members & holdout
    X, y = dataset.features, dataset.labels
    if test.sum() == 0:
        raise EvaluationError(f"{name} set has no holdout instances to evaluate on")
    if len(np.unique(y[train])) < 2:
        raise EvaluationError(f"{name} set is too small to train: its training part has one class")
    try:
        lin = train_linear(X[train], y[train], train_config, n_classes=n_classes)
        rbf = train_rbf(X[train], y[train]) if n_classes == 2 else None
    except AFLiteError as exc:
        raise EvaluationError(f"{name} set: {exc}") from exc
    rbf_acc = None if rbf is None else accuracy(rbf, X[test], y[test])
    return accuracy(lin, X[test], y[test]), rbf_acc, int(test.sum())


def evaluate(
    dataset: EmbeddedDataset,
    result: FilterResult,
    holdout_fraction: float = 0.2,
    rng: np.random.Generator | None = None,
    bias_mask: np.ndarray | None = None,
    flip_mask: np.ndarray | None = None,
    train_config: TrainConfig = TrainConfig(),
    seed: int | None = None,
) -> EvaluationReport:
    if not 0 < holdout_fraction < 1:
        raise EvaluationError("holdout_fraction must lie strictly between 0 and 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    size = len(dataset)
    retained = np.zeros(size, dtype=bool)
    retained[dataset.index_of(result.retained_ids)] = True

    holdout = stratified_holdout(dataset.labels, holdout_fraction, rng)
    control = np.zeros(size, dtype=bool)
    control[rng.choice(size, size=int(retained.sum()), replace=False)] = True

    n_classes = max(dataset.n_classes, 2)
    full = np.ones(size, dtype=bool)
    before = _benchmark(dataset, full, holdout, "full", train_config, n_classes)
    after = _benchmark(dataset, retained, holdout, "retained", train_config, n_classes)
    ctrl = _benchmark(dataset, control, holdout, "control", train_config, n_classes)

    def removal(mask):
        if mask is None:
            return None
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return None
        return float(np.mean(~retained[mask]))

    return EvaluationReport(
        dataset_sizes=(size, int(retained.sum()), int(control.sum())),
        linear_accuracy=(before[0], after[0], ctrl[0]),
        rbf_accuracy=None if before[1] is None else (before[1], after[1], ctrl[1]),
        bias_removal=removal(bias_mask),
        flip_removal=removal(flip_mask),
        holdout_fraction=holdout_fraction,
        holdout_sizes=(before[2], after[2], ctrl[2]),
        seed=seed,
    )
