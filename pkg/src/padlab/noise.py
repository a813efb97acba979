"""Synthetic label-noise generators with known ground truth.

Three corruption families are provided: symmetric (uniform over the wrong
classes, total flip probability epsilon), pairflip (flip to the successor
class mod K), and instance-dependent (flip distribution derived from a
random projection of the sample's features).

Randomness comes from numpy's PCG64 via ``np.random.default_rng``, a named,
documented generator that is stable across platforms; all draws happen in a
fixed order so regeneration with the same seed is bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

FEATURES_MAGIC = "padlab-features-v1"


@dataclass
class NoisyDataset:
    """Features with hidden clean labels and observed noisy labels."""

    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    noise_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        for name, labels in (("clean", self.clean_labels), ("noisy", self.noisy_labels)):
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise InputError(f"{name} labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.noisy_labels)

    @property
    def flipped(self) -> np.ndarray:
        return self.noisy_labels != self.clean_labels


def _check_epsilon(epsilon: float, upper: float = 1.0) -> None:
    if not 0.0 <= epsilon <= upper:
        raise InputError(f"noise rate {epsilon} outside [0, {upper}]")


def symmetric_noise(clean: np.ndarray, k: int, epsilon: float, seed: int) -> np.ndarray:
    """Flip each label with probability epsilon to a uniform wrong class."""
    _check_epsilon(epsilon)
    if k < 2:
        raise InputError(f"need at least 2 classes, got {k}")
    clean = np.asarray(clean, dtype=np.int64)
    rng = np.random.default_rng(seed)
    flip = rng.random(len(clean)) < epsilon
    offsets = rng.integers(1, k, size=len(clean))
    return np.where(flip, (clean + offsets) % k, clean)


def pairflip_noise(clean: np.ndarray, k: int, epsilon: float, seed: int) -> np.ndarray:
    """Flip each label with probability epsilon to its successor class mod K."""
    if epsilon > 0.5:
        raise InputError(
            f"pairflip rate {epsilon} > 0.5 makes the corruption unidentifiable"
        )
    _check_epsilon(epsilon, upper=0.5)
    if k < 2:
        raise InputError(f"need at least 2 classes, got {k}")
    clean = np.asarray(clean, dtype=np.int64)
    rng = np.random.default_rng(seed)
    flip = rng.random(len(clean)) < epsilon
    return np.where(flip, (clean + 1) % k, clean)


def instance_noise(
    features: np.ndarray, clean: np.ndarray, k: int, epsilon: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Feature-dependent flips via one global random projection.

    Per sample: rate q_i ~ Normal(epsilon, 0.1^2) clipped to [0, 1]; scores
    p = x_i @ W with the clean class masked out; the noisy label is drawn
    from q_i * softmax(p) on the wrong classes plus 1 - q_i on the clean
    class. Returns (noisy_labels, q). Draw order: q, then W, then the
    selection uniforms.
    """
    _check_epsilon(epsilon)
    clean = np.asarray(clean, dtype=np.int64)
    x = np.asarray(features, dtype=np.float64).reshape(len(clean), -1)
    n, d = x.shape
    if d == 0:
        raise InputError("instance noise requires at least one feature dimension")
    rng = np.random.default_rng(seed)
    q = np.clip(rng.normal(epsilon, 0.1, size=n), 0.0, 1.0)
    w = rng.standard_normal((d, k))
    scores = x @ w
    scores[np.arange(n), clean] = -np.inf
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    soft = e / e.sum(axis=1, keepdims=True)
    probs = q[:, None] * soft
    probs[np.arange(n), clean] = 1.0 - q
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n)
    noisy = (u[:, None] > cdf).sum(axis=1)
    return noisy.astype(np.int64), q


def make_noisy_dataset(
    features: np.ndarray,
    clean: np.ndarray,
    k: int,
    kind: str,
    epsilon: float,
    seed: int,
) -> NoisyDataset:
    """Apply one noise family and package the result with its metadata."""
    clean = np.asarray(clean, dtype=np.int64)
    q = None
    if kind == "none":
        noisy = clean.copy()
    elif kind == "symmetric":
        noisy = symmetric_noise(clean, k, epsilon, seed)
    elif kind == "pairflip":
        noisy = pairflip_noise(clean, k, epsilon, seed)
    elif kind == "instance":
        noisy, q = instance_noise(features, clean, k, epsilon, seed)
    else:
        raise InputError(f"unknown noise kind {kind!r}")
    meta = {"kind": kind, "epsilon": float(epsilon), "seed": int(seed)}
    if q is not None:
        meta["q"] = q
    return NoisyDataset(np.asarray(features, dtype=np.float64), clean, noisy, k, meta)


def noise_report(ds: NoisyDataset) -> dict:
    """Realized disagreement, empirical transition matrix, per-class flips."""
    n = len(ds)
    k = ds.num_classes
    transition = np.zeros((k, k))
    np.add.at(transition, (ds.clean_labels, ds.noisy_labels), 1.0)
    counts = transition.sum(axis=1, keepdims=True)
    rates = np.divide(transition, counts, out=np.zeros_like(transition), where=counts > 0)
    flips = ds.flipped
    per_class = np.zeros(k, dtype=np.int64)
    np.add.at(per_class, ds.clean_labels[flips], 1)
    return {
        "n": n,
        "k": k,
        "disagreement_rate": float(flips.mean()) if n else 0.0,
        "transition_counts": transition.astype(np.int64).tolist(),
        "transition_rates": rates.tolist(),
        "per_class_flips": per_class.tolist(),
    }


# ---------------------------------------------------------------------------
# serialization: raw little-endian float64 features + JSON labels
# ---------------------------------------------------------------------------


def save_dataset(ds: NoisyDataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    feats = np.ascontiguousarray(ds.features, dtype="<f8")
    (directory / "features.bin").write_bytes(feats.tobytes())
    header = {
        "magic": FEATURES_MAGIC,
        "dtype": "float64",
        "byteorder": "little",
        "shape": list(feats.shape),
    }
    (directory / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True))
    meta = ds.noise_meta
    labels = {
        "k": ds.num_classes,
        "noise_kind": meta.get("kind", "none"),
        "epsilon": meta.get("epsilon", 0.0),
        "seed": meta.get("seed", 0),
        "clean_labels": ds.clean_labels.tolist(),
        "noisy_labels": ds.noisy_labels.tolist(),
        "q": meta["q"].tolist() if meta.get("q") is not None else None,
    }
    (directory / "labels.json").write_text(json.dumps(labels, sort_keys=True))


def load_dataset(directory: str | Path) -> NoisyDataset:
    directory = Path(directory)
    header = json.loads((directory / "header.json").read_text())
    if header.get("magic") != FEATURES_MAGIC:
        raise InputError(f"{directory}: not a dataset directory (bad magic)")
    shape = tuple(header["shape"])
    raw = (directory / "features.bin").read_bytes()
    features = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    labels = json.loads((directory / "labels.json").read_text())
    meta = {
        "kind": labels["noise_kind"],
        "epsilon": labels["epsilon"],
        "seed": labels["seed"],
    }
    if labels.get("q") is not None:
        meta["q"] = np.asarray(labels["q"], dtype=np.float64)
    return NoisyDataset(
        features,
        np.asarray(labels["clean_labels"], dtype=np.int64),
        np.asarray(labels["noisy_labels"], dtype=np.int64),
        int(labels["k"]),
        meta,
    )
