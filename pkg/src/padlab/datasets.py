"""Synthetic desk-scale datasets.

Two generators: Gaussian class blobs in d dimensions (for MLPs) and tiny
single-channel image grids whose classes are distinct low-frequency gratings
(so the 2-D spectral gate sees genuine spatial structure). Train and test
splits come from independently spawned streams of the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class SplitData:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int


def _class_frequencies(k: int, h: int, w: int) -> list[tuple[int, int]]:
    """K distinct non-DC frequency pairs, lowest energy first."""
    pairs = [
        (u, v)
        for u in range(h // 2 + 1)
        for v in range(w // 2 + 1)
        if (u, v) != (0, 0)
    ]
    pairs.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, p))
    if k > len(pairs):
        raise ConfigurationError(
            f"cannot assign {k} distinct gratings on an {h}x{w} grid"
        )
    return pairs[:k]


def _sample_gratings(labels, freqs, h, w, rng, pixel_noise, amp_low=0.8, amp_high=1.2):
    n = len(labels)
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    amps = rng.uniform(amp_low, amp_high, size=n)
    shifts = rng.uniform(0.0, 2.0 * np.pi, size=n)
    x = np.empty((n, 1, h, w))
    for i, y in enumerate(labels):
        u, v = freqs[y]
        theta = 2.0 * np.pi * (u * rows / h + v * cols / w) + shifts[i]
        x[i, 0] = amps[i] * np.cos(theta)
    x += pixel_noise * rng.standard_normal(x.shape)
    return x


def make_tiny_images(
    n: int,
    k: int,
    h: int = 8,
    w: int = 8,
    seed: int = 0,
    n_test: int = 500,
    pixel_noise: float = 0.5,
) -> SplitData:
    """Class-specific gratings with random phase shift plus pixel noise."""
    freqs = _class_frequencies(k, h, w)
    ss = np.random.SeedSequence(seed)
    train_ss, test_ss = ss.spawn(2)
    out = []
    for count, sub in ((n, train_ss), (n_test, test_ss)):
        rng = np.random.default_rng(sub)
        labels = rng.integers(0, k, size=count)
        feats = _sample_gratings(labels, freqs, h, w, rng, pixel_noise)
        out.append((feats, labels.astype(np.int64)))
    (train_x, train_y), (test_x, test_y) = out
    return SplitData(train_x, train_y, test_x, test_y, k)


def make_blobs(
    n: int,
    k: int,
    d: int = 32,
    seed: int = 0,
    n_test: int = 500,
    separation: float = 3.0,
) -> SplitData:
    """K Gaussian clusters with unit within-class spread."""
    ss = np.random.SeedSequence(seed)
    mean_ss, train_ss, test_ss = ss.spawn(3)
    means = np.random.default_rng(mean_ss).standard_normal((k, d))
    means *= separation / np.sqrt(d)
    out = []
    for count, sub in ((n, train_ss), (n_test, test_ss)):
        rng = np.random.default_rng(sub)
        labels = rng.integers(0, k, size=count)
        feats = means[labels] + rng.standard_normal((count, d))
        out.append((feats, labels.astype(np.int64)))
    (train_x, train_y), (test_x, test_y) = out
    return SplitData(train_x, train_y, test_x, test_y, k)
