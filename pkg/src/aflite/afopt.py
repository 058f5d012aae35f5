"""Exact representation bias and exhaustive optimum subset search.

Both are exponential and only meant for datasets of a dozen or so
instances, where they serve as ground truth for the filtering heuristics.

The representation bias of a subset ``S`` is the expected held-out accuracy
of a model trained on a uniformly random size-``t`` subset of ``S`` and
tested on the rest. It is computed two ways from one enumeration of train
splits: directly, as the mean per-split test accuracy, and in factored
form, as the sum over instances of ``E[correct(i) | i held out] / |S|``.
The two agree up to rounding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classifiers import LinearModel, TrainConfig, train_linear_batch
from .core import EmbeddedDataset
from .errors import BudgetExceededError, InputError

DEFAULT_SPLIT_BUDGET = 50_000
MAX_SEARCH_SIZE = 14

Trainer = Callable[[np.ndarray, np.ndarray], object]


@dataclass(frozen=True)
class ExactBiasReport:
    subset: tuple[int, ...]
    bias: float
    factored_bias: float
    evaluated_splits: int
    # E[correct(i) | i in the test split], on the same scale as
    # PredictabilityTable.score; the factored per-instance term is this / |S|
    instance_scores: tuple[float, ...]

    @property
    def predictability(self) -> tuple[float, ...]:
        size = len(self.subset)
        return tuple(s / size for s in self.instance_scores)


class _SplitOracle:
    """Memoised held-out predictions, keyed by training set.

    A trained model depends only on its training instances, so one model per
    size-``t`` training set serves every subset that contains it.
    """

    def __init__(self, dataset: EmbeddedDataset, t: int, trainer: Trainer | None = None):
        self.dataset = dataset
        self.t = t
        self.trainer = trainer
        self.n_classes = max(dataset.n_classes, 2)
        self._correct: dict[tuple[int, ...], np.ndarray] = {}

    def _constant(self, label: int) -> LinearModel:
        bias = np.zeros(self.n_classes)
        bias[label] = 1.0
        return LinearModel(np.zeros((self.n_classes, self.dataset.dim)), bias)

    def prepare(self, train_sets: Sequence[tuple[int, ...]]) -> None:
        todo = [u for u in train_sets if u not in self._correct]
        if not todo:
            return
        X, y = self.dataset.features, self.dataset.labels
        models: dict[tuple[int, ...], object] = {}
        mixed = []
        for u in todo:
            labels = np.unique(y[list(u)])
            if len(labels) == 1:
                # a single-class training set can only ever predict that class
                models[u] = self._constant(int(labels[0]))
            else:
                mixed.append(u)
        if mixed and self.trainer is None:
            idx = np.array(mixed)
            fitted = train_linear_batch(X[idx], y[idx], self.n_classes, TrainConfig())
            models.update(zip(mixed, fitted))
        else:
            for u in mixed:
                models[u] = self.trainer(X[list(u)], y[list(u)])
        for u in todo:
            self._correct[u] = models[u].predict_many(X) == y

    def correct(self, train_set: tuple[int, ...]) -> np.ndarray:
        return self._correct[train_set]


def _bias_from_oracle(oracle: _SplitOracle, subset: tuple[int, ...]) -> ExactBiasReport:
    t = oracle.t
    size = len(subset)
    splits = list(itertools.combinations(subset, t))
    oracle.prepare(splits)
    pos = {g: i for i, g in enumerate(subset)}
    sub = np.array(subset)

    per_split = []
    hits = np.zeros(size)
    seen = np.zeros(size, dtype=np.int64)
    for u in splits:
        held_out = np.ones(size, dtype=bool)
        held_out[[pos[g] for g in u]] = False
        c = oracle.correct(u)[sub][held_out]
        per_split.append(c.sum() / held_out.sum())
        hits[held_out] += c
        seen[held_out] += 1

    direct = math.fsum(per_split) / len(splits)
    instance_scores = hits / seen
    factored = math.fsum(instance_scores / size)
    return ExactBiasReport(
        subset=tuple(int(i) for i in subset),
        bias=float(direct),
        factored_bias=float(factored),
        evaluated_splits=len(splits),
        instance_scores=tuple(float(s) for s in instance_scores),
    )


def exact_representation_bias(
    dataset: EmbeddedDataset,
    t: int,
    trainer: Trainer | None = None,
    subset: Sequence[int] | None = None,
    budget: int = DEFAULT_SPLIT_BUDGET,
) -> ExactBiasReport:
    """Enumerate every size-``t`` training split of ``subset`` (default: all).

    ``trainer(features, labels)`` must return an object with
    ``predict_many``; by default a zero-initialised logistic model with the
    default :class:`TrainConfig` is fitted.
    """
    if subset is None:
        subset = range(len(dataset))
    subset = tuple(int(i) for i in subset)
    if len(set(subset)) != len(subset):
        raise InputError("subset indices must be distinct")
    if not 1 <= t < len(subset):
        raise InputError(f"need 1 <= t < |S|, got t={t}, |S|={len(subset)}")
    required = math.comb(len(subset), t)
    if required > budget:
        raise BudgetExceededError(
            f"exact bias needs {required} train/test splits, budget is {budget}"
        )
    return _bias_from_oracle(_SplitOracle(dataset, t, trainer), subset)


def afopt_search(
    dataset: EmbeddedDataset,
    n: int,
    t: int,
    trainer: Trainer | None = None,
    max_size: int = MAX_SEARCH_SIZE,
) -> ExactBiasReport:
    """Subset of size at least ``n`` with the lowest exact representation bias.

    Ties go to the lexicographically smallest index tuple.
    """
    size = len(dataset)
    if size > max_size:
        raise BudgetExceededError(
            f"exhaustive search over {size} instances exceeds the cap of {max_size}"
        )
    if not 1 <= t < n <= size:
        raise InputError(f"need 1 <= t < n <= |D|, got t={t}, n={n}, |D|={size}")

    oracle = _SplitOracle(dataset, t, trainer)
    oracle.prepare(list(itertools.combinations(range(size), t)))
    best: ExactBiasReport | None = None
    lowest = math.inf
    for s in range(n, size + 1):
        for subset in itertools.combinations(range(size), s):
            report = _bias_from_oracle(oracle, subset)
            lowest = min(lowest, report.bias)
            if best is None or report.bias < best.bias - 1e-12:
                best = report
            elif abs(report.bias - best.bias) <= 1e-12 and report.subset < best.subset:
                best = report
    assert best is not None and best.bias <= lowest + 1e-12
    return best
