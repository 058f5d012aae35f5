"""Concentric-circle benchmark with injected class-correlated features.

Class 0 lies on a circle of radius ``inner_radius``, class 1 on a circle of
radius ``inner_radius + gap``. A fraction of each class additionally carries
appended features drawn from a per-class Gaussian (the spurious bias); the
remaining instances get zero-mean noise in those columns. At the largest gap
some biased instances have their labels flipped before the bias features are
drawn, so their bias columns agree with the flipped label while their circle
position contradicts it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EmbeddedDataset
from .errors import InvalidSpecError


@dataclass(frozen=True)
class SyntheticSpec:
    n_points: int = 500
    separations: tuple[float, ...] = (1.5, 1.0, 0.6, 0.3)
    inner_radius: float = 1.0
    radial_jitter: float = 0.1
    bias_fraction: float = 0.75
    bias_dims: int = 2
    bias_means: tuple[tuple[float, ...], tuple[float, ...]] = field(
        default=((-1.0, -1.0), (1.0, 1.0))
    )
    bias_stddev: float = 0.5
    noise_stddev: float = 1.0
    flip_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "separations", tuple(float(s) for s in self.separations))
        means = tuple(tuple(float(v) for v in m) for m in self.bias_means)
        object.__setattr__(self, "bias_means", means)
        if self.n_points < 1:
            raise InvalidSpecError("n_points must be positive")
        if not self.separations:
            raise InvalidSpecError("at least one separation level is required")
        if not 0.0 <= self.bias_fraction <= 1.0:
            raise InvalidSpecError("bias_fraction must lie in [0, 1]")
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise InvalidSpecError("flip_fraction must lie in [0, 1]")
        if self.bias_dims < 1:
            raise InvalidSpecError("bias_dims must be at least 1")
        if len(means) != 2 or any(len(m) != self.bias_dims for m in means):
            raise InvalidSpecError("bias_means needs two vectors of length bias_dims")
        if means[0] == means[1]:
            raise InvalidSpecError("the two bias means must differ")
        if not (self.bias_stddev > 0 and self.noise_stddev > 0):
            raise InvalidSpecError("standard deviations must be positive")
        if not self.inner_radius > 0 or self.radial_jitter < 0:
            raise InvalidSpecError("inner_radius must be positive, radial_jitter non-negative")

    @property
    def largest_separation_index(self) -> int:
        return int(np.argmax(self.separations))


@dataclass(frozen=True)
class SyntheticDataset:
    dataset: EmbeddedDataset
    bias_mask: np.ndarray
    flip_mask: np.ndarray
    circle_labels: np.ndarray  # labels before flipping


def generate(spec: SyntheticSpec, separation_index: int) -> SyntheticDataset:
    if not 0 <= separation_index < len(spec.separations):
        raise InvalidSpecError(
            f"separation_index {separation_index} outside 0..{len(spec.separations) - 1}"
        )
    gap = spec.separations[separation_index]
    if gap <= 0:
        raise InvalidSpecError(f"gap {gap} <= 0 makes the annuli overlap")

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, separation_index]))
    n = spec.n_points
    circle_labels = np.repeat([0, 1], n)
    radii = np.where(circle_labels == 0, spec.inner_radius, spec.inner_radius + gap)
    radii = radii + rng.normal(scale=spec.radial_jitter, size=2 * n)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
    coords = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])

    n_biased = int(round(spec.bias_fraction * n))
    bias_mask = np.zeros(2 * n, dtype=bool)
    for c in (0, 1):
        members = np.flatnonzero(circle_labels == c)
        bias_mask[rng.choice(members, size=n_biased, replace=False)] = True

    labels = circle_labels.copy()
    flip_mask = np.zeros(2 * n, dtype=bool)
    if separation_index == spec.largest_separation_index and spec.flip_fraction > 0:
        biased = np.flatnonzero(bias_mask)
        n_flip = int(round(spec.flip_fraction * len(biased)))
        flipped = rng.choice(biased, size=n_flip, replace=False)
        flip_mask[flipped] = True
        labels[flipped] = 1 - labels[flipped]

    means = np.asarray(spec.bias_means)
    extra = rng.normal(scale=spec.noise_stddev, size=(2 * n, spec.bias_dims))
    biased_rows = np.flatnonzero(bias_mask)
    extra[biased_rows] = means[labels[biased_rows]] + rng.normal(
        scale=spec.bias_stddev, size=(len(biased_rows), spec.bias_dims)
    )

    features = np.hstack([coords, extra])
    width = len(str(2 * n - 1))
    ids = tuple(f"s{separation_index}-{i:0{width}d}" for i in range(2 * n))
    return SyntheticDataset(
        dataset=EmbeddedDataset(ids, features, labels),
        bias_mask=bias_mask,
        flip_mask=flip_mask,
        circle_labels=circle_labels,
    )


def bias_noise_toy(seed: int | None = None) -> SyntheticDataset:
    """Ten instances: five whose first feature encodes the label, five without signal.

    With ``seed=None`` the layout is fixed: the informative instances sit at
    ``(+-2, 0)`` and the uninformative ones on a circle of radius 0.5 with
    alternating labels. With a seed, labels and positions are randomised
    (informative feature ``+-2`` plus small jitter, everything else standard
    normal). Used to compare the heuristics against exhaustive search.
    """
    if seed is None:
        biased_labels = np.array([0, 1, 0, 1, 0])
        noise_labels = np.array([0, 1, 0, 1, 0])
        biased = np.column_stack([2.0 * (2 * biased_labels - 1), np.zeros(5)])
        angles = 2.0 * np.pi * np.arange(5) / 5
        noise = 0.5 * np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        rng = np.random.default_rng(seed)
        biased_labels = rng.permutation([0, 0, 1, 1, rng.integers(2)])
        noise_labels = rng.permutation([0, 0, 1, 1, rng.integers(2)])
        biased = np.column_stack([
            2.0 * (2 * biased_labels - 1) + rng.normal(scale=0.1, size=5),
            rng.normal(size=5),
        ])
        noise = rng.normal(size=(5, 2))
    features = np.vstack([biased, noise])
    labels = np.concatenate([biased_labels, noise_labels])
    ids = tuple([f"b{i}" for i in range(5)] + [f"n{i}" for i in range(5)])
    bias_mask = np.arange(10) < 5
    return SyntheticDataset(
        dataset=EmbeddedDataset(ids, features, labels),
        bias_mask=bias_mask,
        flip_mask=np.zeros(10, dtype=bool),
        circle_labels=labels.copy(),
    )
