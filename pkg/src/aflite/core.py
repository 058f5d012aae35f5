"""Datasets, random train/test partitions and predictability bookkeeping.

Everything here addresses instances by dense position within the current
working set; stable string ids are only used for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation, InputError, InvalidPartitionError


@dataclass(frozen=True)
class EmbeddedDataset:
    """Precomputed feature matrix with labels and unique instance ids."""

    ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        features = np.array(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[1] < 1:
            raise InputError("features need at least one column")
        if not (len(ids) == features.shape[0] == labels.shape[0]):
            raise InputError(
                f"size mismatch: {len(ids)} ids, {features.shape[0]} feature rows, "
                f"{labels.shape[0]} labels"
            )
        if len(set(ids)) != len(ids):
            raise InputError("instance ids must be unique")
        if not np.all(np.isfinite(features)):
            raise InputError("features contain non-finite values")
        if labels.size and (
            not np.all(np.equal(np.mod(labels, 1), 0)) or labels.min() < 0
        ):
            raise InputError("labels must be non-negative integers")
        labels = labels.astype(np.int64)
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, indices: Sequence[int] | np.ndarray) -> "EmbeddedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddedDataset(
            ids=tuple(self.ids[i] for i in idx),
            features=self.features[idx],
            labels=self.labels[idx],
        )

    def index_of(self, ids: Sequence[str]) -> np.ndarray:
        lookup = {k: i for i, k in enumerate(self.ids)}
        try:
            return np.array([lookup[k] for k in ids], dtype=np.int64)
        except KeyError as exc:
            raise InputError(f"unknown instance id {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Partition:
    train_indices: np.ndarray
    test_indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.train_indices) + len(self.test_indices)


def random_partition(working_set_size: int, t: int, rng: np.random.Generator) -> Partition:
    """Draw a uniformly random size-``t`` train split; the rest is the test split."""
    if t < 1 or t >= working_set_size:
        raise InvalidPartitionError(
            f"need 1 <= t < |S|, got t={t}, |S|={working_set_size}"
        )
    order = rng.permutation(working_set_size)
    return Partition(np.sort(order[:t]), np.sort(order[t:]))


@dataclass(frozen=True)
class PredictabilityTable:
    """Per-instance correct/total prediction counts over held-out evaluations."""

    correct: np.ndarray
    total: np.ndarray

    @classmethod
    def empty(cls, size: int) -> "PredictabilityTable":
        return cls(np.zeros(size, dtype=np.int64), np.zeros(size, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.total)

    @property
    def score(self) -> np.ndarray:
        # never-evaluated instances score 0 so they cannot be removed
        out = np.zeros(len(self.total), dtype=np.float64)
        seen = self.total > 0
        out[seen] = self.correct[seen] / self.total[seen]
        return out

    def merge(self, other: "PredictabilityTable") -> "PredictabilityTable":
        if len(other) != len(self):
            raise ContractViolation("cannot merge tables of different sizes")
        return PredictabilityTable(self.correct + other.correct, self.total + other.total)


def update_table(
    table: PredictabilityTable,
    partition: Partition,
    predictions: np.ndarray | Sequence[int] | dict[int, int],
    truth: np.ndarray,
) -> PredictabilityTable:
    """Record one model's predictions on the test split of ``partition``.

    ``predictions`` is either aligned with ``partition.test_indices`` or a
    mapping from test index to predicted label; it must cover the test split
    exactly.
    """
    test = np.asarray(partition.test_indices, dtype=np.int64)
    if isinstance(predictions, dict):
        keys = set(predictions)
        if keys != set(test.tolist()):
            stray = sorted(keys - set(test.tolist()))
            raise ContractViolation(
                f"predictions must cover exactly the test indices (stray: {stray[:5]})"
            )
        pred = np.array([predictions[i] for i in test.tolist()], dtype=np.int64)
    else:
        pred = np.asarray(predictions, dtype=np.int64)
        if pred.shape != test.shape:
            raise ContractViolation(
                f"expected {len(test)} predictions for the test split, got {pred.size}"
            )
    if len(test) == 0:
        raise ContractViolation("partition has an empty test split")
    if test.max() >= len(table):
        raise ContractViolation("test index outside the table")
    correct = table.correct.copy()
    total = table.total.copy()
    total[test] += 1
    correct[test] += (pred == np.asarray(truth)[test]).astype(np.int64)
    return PredictabilityTable(correct, total)


@dataclass(frozen=True)
class PhaseRecord:
    phase_index: int
    removed_ids: tuple[str, ...]
    mean_score: float
    max_score: float
    remaining_count: int


@dataclass(frozen=True)
class FilterResult:
    retained_ids: tuple[str, ...]
    phases: tuple[PhaseRecord, ...] = field(default_factory=tuple)

    @property
    def removed_ids(self) -> tuple[str, ...]:
        return tuple(i for p in self.phases for i in p.removed_ids)
