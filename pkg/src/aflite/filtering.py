"""Iterative adversarial filtering.

Each phase trains ``m`` linear models on random size-``t`` subsets of the
surviving instances, scores every instance by how often the models that did
not train on it predict its label correctly, and removes the most
predictable instances. Three removal strategies are available:

* ``greedy``          remove the single highest-scoring instance
* ``greedy_slicing``  remove the ``k`` highest-scoring instances
* ``gumbel_sampling`` sample ``k`` instances without replacement, with
                      probability proportional to score

Only instances scoring at least ``tau`` are ever eligible.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import TrainConfig, train_linear_batch
from .core import (
    EmbeddedDataset,
    FilterResult,
    PhaseRecord,
    PredictabilityTable,
    random_partition,
)
from .errors import AFLiteError, DegenerateTrainingError, InputError, PhaseError

log = logging.getLogger(__name__)

STRATEGIES = ("greedy", "greedy_slicing", "gumbel_sampling")

# partitions are trained in fixed-size stacks so results do not depend on
# how many worker threads share the work
BLOCK_SIZE = 32
MAX_PARTITION_RETRIES = 10


@dataclass(frozen=True)
class FilterConfig:
    n: int
    m: int = 128
    t: int = 100
    k: int = 1
    tau: float = 0.75
    strategy: str = "greedy_slicing"
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    # "resample": redraw splits whose training part holds one class;
    # "constant": keep them and predict that class, as the exact oracle does
    single_class_splits: str = "resample"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.m < 1 or self.k < 1:
            raise InputError("m and k must be at least 1")
        if not 1 <= self.t < self.n:
            raise InputError(f"need 1 <= t < n, got t={self.t}, n={self.n}")
        if self.tau < 0:
            raise InputError("tau must be non-negative")
        if self.single_class_splits not in ("resample", "constant"):
            raise InputError("single_class_splits must be 'resample' or 'constant'")

    @property
    def slice_size(self) -> int:
        return 1 if self.strategy == "greedy" else self.k

    def check_against(self, size: int) -> None:
        if self.n > size:
            raise InputError(f"target size n={self.n} exceeds dataset size {size}")


def _partition_seed(seed: int, phase_index: int, partition_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(0, phase_index, partition_index))


def _selection_seed(seed: int, phase_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(1, phase_index))


def _score_block(features, labels, n_classes, t, config, seeds):
    size = len(labels)
    rngs, train_sets = [], []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        for _ in range(MAX_PARTITION_RETRIES):
            part = random_partition(size, t, rng)
            if config.single_class_splits == "constant":
                break
            if len(np.unique(labels[part.train_indices])) >= 2:
                break
        else:
            raise DegenerateTrainingError(
                f"no two-class training split after {MAX_PARTITION_RETRIES} draws"
            )
        rngs.append(rng)
        train_sets.append(part.train_indices)

    train_idx = np.stack(train_sets)
    train_labels = labels[train_idx]
    mixed = np.array([len(np.unique(row)) >= 2 for row in train_labels])
    W = np.zeros((len(seeds), n_classes, features.shape[1]))
    b = np.zeros((len(seeds), n_classes))
    if mixed.any():
        models = train_linear_batch(
            features[train_idx[mixed]],
            train_labels[mixed],
            n_classes,
            config.train,
            [r for r, ok in zip(rngs, mixed) if ok],
        )
        W[mixed] = np.stack([mdl.weights for mdl in models])
        b[mixed] = np.stack([mdl.bias for mdl in models])
    for j in np.flatnonzero(~mixed):
        b[j, train_labels[j, 0]] = 1.0
    pred = np.argmax(W @ features.T + b[:, :, None], axis=1)

    in_test = np.ones((len(seeds), size), dtype=bool)
    np.put_along_axis(in_test, train_idx, False, axis=1)
    hits = (pred == labels[None, :]) & in_test
    return PredictabilityTable(hits.sum(axis=0), in_test.sum(axis=0))


def score_phase(
    working_set: EmbeddedDataset,
    config: FilterConfig,
    phase_index: int = 0,
    threads: int = 1,
) -> PredictabilityTable:
    """Predictability table for one phase, from ``config.m`` random partitions.

    Partition ``j`` of phase ``p`` draws from a stream seeded by
    ``(config.seed, p, j)``; a partition whose train split holds a single
    class is redrawn from the same stream.
    """
    size = len(working_set)
    if size <= config.t:
        raise InputError(f"working set of {size} is not larger than t={config.t}")
    features, labels = working_set.features, working_set.labels
    n_classes = working_set.n_classes
    seeds = [_partition_seed(config.seed, phase_index, j) for j in range(config.m)]
    blocks = [seeds[i : i + BLOCK_SIZE] for i in range(0, len(seeds), BLOCK_SIZE)]

    def work(block):
        return _score_block(features, labels, n_classes, config.t, config, block)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(work, blocks))
    else:
        tables = [work(block) for block in blocks]

    table = PredictabilityTable.empty(size)
    for part in tables:
        table = table.merge(part)
    return table


def gumbel_topk(scores: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``k`` indices without replacement, proportionally to ``scores``.

    Adds standard Gumbel noise to ``log(scores)`` and keeps the ``k``
    largest. Non-positive scores can never be drawn and are dropped first;
    if fewer than ``k`` remain, all of them are returned.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if k < 0:
        raise InputError("k must be non-negative")
    u = rng.random(scores.shape[0])
    candidates = np.flatnonzero(scores > 0)
    if candidates.size <= k:
        return candidates
    # u == 0 would give -inf noise, which is harmless; guard log(0) warnings
    gumbel = -np.log(-np.log(np.clip(u[candidates], np.finfo(float).tiny, None)))
    perturbed = np.log(scores[candidates]) + gumbel
    top = np.argsort(-perturbed, kind="stable")[:k]
    return candidates[top]


def select_removals(
    scores: np.ndarray,
    config: FilterConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Indices chosen for removal this phase, most predictable first.

    Returns an empty array when nothing scores at least ``tau``.
    """
    if isinstance(scores, PredictabilityTable):
        scores = scores.score
    scores = np.asarray(scores, dtype=np.float64)
    eligible = np.flatnonzero(scores >= config.tau)
    if eligible.size == 0:
        return eligible
    k = config.slice_size
    if config.strategy == "gumbel_sampling":
        if rng is None:
            raise InputError("gumbel_sampling needs a random generator")
        picked = eligible[gumbel_topk(scores[eligible], k, rng)]
        return picked[np.argsort(-scores[picked], kind="stable")]
    # stable sort on -score breaks ties toward the lower index
    order = eligible[np.argsort(-scores[eligible], kind="stable")]
    return order[:k]


def run_filter(
    dataset: EmbeddedDataset,
    config: FilterConfig,
    threads: int = 1,
) -> FilterResult:
    config.check_against(len(dataset))
    alive = np.arange(len(dataset))
    phases: list[PhaseRecord] = []
    phase = 0
    while len(alive) > config.n:
        working = dataset.subset(alive)
        try:
            table = score_phase(working, config, phase, threads)
        except AFLiteError as exc:
            raise PhaseError(phase, exc) from exc
        scores = table.score
        rng = np.random.default_rng(_selection_seed(config.seed, phase))
        chosen = select_removals(scores, config, rng)

        if config.strategy == "gumbel_sampling":
            stop = chosen.size == 0
        else:
            stop = chosen.size < config.slice_size
        if stop:
            log.debug("phase %d: %d instance(s) pass tau, stopping", phase, chosen.size)
            break

        capped = len(alive) - chosen.size < config.n
        if capped:
            chosen = chosen[: len(alive) - config.n]

        keep = np.ones(len(alive), dtype=bool)
        keep[chosen] = False
        phases.append(
            PhaseRecord(
                phase_index=phase,
                removed_ids=tuple(working.ids[i] for i in chosen),
                mean_score=float(scores.mean()),
                max_score=float(scores.max()),
                remaining_count=int(keep.sum()),
            )
        )
        log.debug(
            "phase %d: removed %d, %d remain, max score %.3f",
            phase, chosen.size, keep.sum(), scores.max(),
        )
        alive = alive[keep]
        phase += 1
        if capped:
            break

    return FilterResult(tuple(dataset.ids[i] for i in alive), tuple(phases))
