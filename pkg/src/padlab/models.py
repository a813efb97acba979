"""Small segmented architectures hosting the spectral gate.

A model is an ordered list of stages (dense+ReLU, conv+ReLU with optional
leading 2x2 average pool, linear head). The gate sits between stages
``gate_index`` and ``gate_index + 1``; by default that is the second-to-last
stage boundary, so at least one parameterized stage sits on each side.

Stages can be frozen (their parameters stop requiring gradients and are
skipped by optimizers) and re-initialized from the seeded init distribution,
which is what the progressive suffix phase needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigurationError, DimensionError, UsageError
from .spectral import GateMode, gated_forward


def _stage_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


class DenseStage:
    """Fully connected layer followed by ReLU."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 index: int):
        self.in_features = in_features
        self.out_features = out_features
        self.index = index
        self.w = Tensor(np.zeros((in_features, out_features)), requires_grad=True,
                        name=f"stage{index}.w")
        self.b = Tensor(np.zeros(out_features), requires_grad=True, name=f"stage{index}.b")
        self.reinit(rng)

    def reinit(self, rng: np.random.Generator) -> None:
        self.w.values = ag.kaiming_uniform(self.w.values.shape, self.in_features, rng)
        self.b.values = np.zeros(self.out_features)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]

    def forward(self, x: Tensor) -> Tensor:
        return ag.relu(ag.add(ag.matmul(x, self.w), self.b))


class ConvStage:
    """3x3 same-padding conv + ReLU, optionally preceded by 2x2 avg pooling."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 index: int, pool_first: bool):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.index = index
        self.pool_first = pool_first
        fan_in = in_channels * 9
        self.fan_in = fan_in
        self.w = Tensor(np.zeros((out_channels, in_channels, 3, 3)), requires_grad=True,
                        name=f"stage{index}.w")
        self.b = Tensor(np.zeros(out_channels), requires_grad=True, name=f"stage{index}.b")
        self.reinit(rng)

    def reinit(self, rng: np.random.Generator) -> None:
        self.w.values = ag.kaiming_uniform(self.w.values.shape, self.fan_in, rng)
        self.b.values = np.zeros(self.out_channels)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]

    def forward(self, x: Tensor) -> Tensor:
        if self.pool_first:
            x = ag.avg_pool2d(x, 2)
        return ag.relu(ag.conv2d(x, self.w, self.b, stride=1, pad=1))


class HeadStage:
    """Flattening linear classifier head producing [N, K] logits."""

    def __init__(self, in_features: int, num_classes: int, rng: np.random.Generator,
                 index: int):
        self.in_features = in_features
        self.num_classes = num_classes
        self.index = index
        self.w = Tensor(np.zeros((in_features, num_classes)), requires_grad=True,
                        name=f"stage{index}.w")
        self.b = Tensor(np.zeros(num_classes), requires_grad=True, name=f"stage{index}.b")
        self.reinit(rng)

    def reinit(self, rng: np.random.Generator) -> None:
        self.w.values = ag.kaiming_uniform(self.w.values.shape, self.in_features, rng)
        self.b.values = np.zeros(self.num_classes)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]

    def forward(self, x: Tensor) -> Tensor:
        if x.values.ndim > 2:
            x = ag.reshape(x, (x.values.shape[0], -1))
        return ag.add(ag.matmul(x, self.w), self.b)


@dataclass
class ModelSpec:
    """Construction record, enough to rebuild the architecture."""

    kind: str
    num_classes: int
    seed: int
    gate_index: int
    widths: list[int] | None = None
    channels: list[int] | None = None
    in_channels: int = 1
    height: int = 0
    width: int = 0


class SegmentedModel:
    def __init__(self, stages, spec: ModelSpec, gate_axes: tuple[int, ...]):
        if not 0 <= spec.gate_index < len(stages):
            raise ConfigurationError(
                f"gate index {spec.gate_index} outside [0, {len(stages)})"
            )
        self.stages = stages
        self.spec = spec
        self.gate_index = spec.gate_index
        self.gate_axes = gate_axes
        self.gate_mode: GateMode | None = None
        self.frozen = [False] * len(stages)
        self.last_feature: Tensor | None = None

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def parameters(self) -> list[Tensor]:
        return [p for s in self.stages for p in s.params()]

    def trainable_parameters(self) -> list[Tensor]:
        return [
            p
            for i, s in enumerate(self.stages)
            for p in s.params()
            if not self.frozen[i]
        ]

    def forward(self, x, capture_feature: bool = False) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(x)
        for i, stage in enumerate(self.stages):
            t = stage.forward(t)
            if i == self.gate_index:
                if capture_feature:
                    self.last_feature = t
                if self.gate_mode is not None:
                    t = gated_forward(t, self.gate_mode, self.gate_axes)
        if t.values.ndim != 2:
            raise DimensionError(f"model produced non-logit output shape {t.values.shape}")
        return t

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Argmax class predictions without touching the gradient tape."""
        outputs = []
        with ag.no_grad():
            for start in range(0, len(x), batch_size):
                logits = self.forward(x[start : start + batch_size])
                outputs.append(np.argmax(logits.values, axis=1))
        return np.concatenate(outputs) if outputs else np.zeros(0, dtype=np.int64)

    def freeze_prefix(self, upto: int) -> None:
        """Freeze stages 0..upto inclusive."""
        if not 0 <= upto < len(self.stages):
            raise UsageError(f"freeze index {upto} outside [0, {len(self.stages)})")
        for i in range(upto + 1):
            self.frozen[i] = True
            for p in self.stages[i].params():
                p.requires_grad = False
                p.zero_grad()

    def thaw(self) -> None:
        for i in range(len(self.stages)):
            self.frozen[i] = False
            for p in self.stages[i].params():
                p.requires_grad = True

    def reinit_suffix(self, from_index: int, seed: int) -> None:
        """Resample parameters of stages >= from_index from the init law."""
        if not 0 <= from_index < len(self.stages):
            raise UsageError(f"reinit index {from_index} outside [0, {len(self.stages)})")
        for i in range(from_index, len(self.stages)):
            self.stages[i].reinit(_stage_rng(seed, i))
            self.frozen[i] = False
            for p in self.stages[i].params():
                p.requires_grad = True
                p.zero_grad()


def default_gate_index(num_stages: int) -> int:
    """Second-to-last stage boundary (last boundary is num_stages - 2)."""
    return max(0, num_stages - 3)


def build_mlp(widths: list[int], num_classes: int, seed: int,
              gate_index: int | None = None) -> SegmentedModel:
    if len(widths) < 2:
        raise ConfigurationError(f"an MLP needs at least 2 layer widths, got {widths}")
    if any(w <= 0 for w in widths) or num_classes <= 0:
        raise ConfigurationError(f"layer widths and class count must be positive: {widths}")
    stages = []
    for i in range(len(widths) - 1):
        stages.append(DenseStage(widths[i], widths[i + 1], _stage_rng(seed, i), i))
    head_idx = len(widths) - 1
    stages.append(HeadStage(widths[-1], num_classes, _stage_rng(seed, head_idx), head_idx))
    j = default_gate_index(len(stages)) if gate_index is None else gate_index
    spec = ModelSpec(kind="mlp", num_classes=num_classes, seed=seed, gate_index=j,
                     widths=list(widths))
    return SegmentedModel(stages, spec, gate_axes=(-1,))


def build_smallcnn(channels: list[int], num_classes: int, hw: tuple[int, int], seed: int,
                   in_channels: int = 1, gate_index: int | None = None) -> SegmentedModel:
    if not 2 <= len(channels) <= 4:
        raise ConfigurationError(f"small CNN supports 2-4 conv stages, got {len(channels)}")
    h, w = hw
    if h < 4 or w < 4:
        raise ConfigurationError(f"input spatial extent {h}x{w} too small (need >= 4)")
    # one 2x2 pool in front of every conv stage after the first
    pools = len(channels) - 1
    if h % (1 << pools) or w % (1 << pools):
        raise ConfigurationError(
            f"spatial extent {h}x{w} collapses under {pools} poolings"
        )
    stages = []
    prev = in_channels
    for i, ch in enumerate(channels):
        if ch <= 0:
            raise ConfigurationError(f"channel counts must be positive: {channels}")
        stages.append(ConvStage(prev, ch, _stage_rng(seed, i), i, pool_first=i > 0))
        prev = ch
    final_h, final_w = h >> pools, w >> pools
    head_idx = len(channels)
    stages.append(
        HeadStage(prev * final_h * final_w, num_classes, _stage_rng(seed, head_idx), head_idx)
    )
    j = default_gate_index(len(stages)) if gate_index is None else gate_index
    spec = ModelSpec(kind="smallcnn", num_classes=num_classes, seed=seed, gate_index=j,
                     channels=list(channels), in_channels=in_channels, height=h, width=w)
    return SegmentedModel(stages, spec, gate_axes=(-2, -1))


def build_model(spec: ModelSpec) -> SegmentedModel:
    if spec.kind == "mlp":
        return build_mlp(spec.widths, spec.num_classes, spec.seed, spec.gate_index)
    if spec.kind == "smallcnn":
        return build_smallcnn(spec.channels, spec.num_classes, (spec.height, spec.width),
                              spec.seed, spec.in_channels, spec.gate_index)
    raise ConfigurationError(f"unknown model kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + raw little-endian float64 parameter blob
# ---------------------------------------------------------------------------


def save_checkpoint(model: SegmentedModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": model.spec.kind,
        "num_classes": model.spec.num_classes,
        "seed": model.spec.seed,
        "gate_index": model.gate_index,
        "widths": model.spec.widths,
        "channels": model.spec.channels,
        "in_channels": model.spec.in_channels,
        "height": model.spec.height,
        "width": model.spec.width,
        "stages": [
            {
                "type": type(s).__name__,
                "params": [{"name": p.name, "shape": list(p.values.shape)} for p in s.params()],
            }
            for s in model.stages
        ],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    blob = b"".join(
        np.ascontiguousarray(p.values, dtype="<f8").tobytes() for p in model.parameters()
    )
    (directory / "params.bin").write_bytes(blob)


def load_checkpoint(directory: str | Path) -> SegmentedModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    spec = ModelSpec(
        kind=manifest["kind"],
        num_classes=manifest["num_classes"],
        seed=manifest["seed"],
        gate_index=manifest["gate_index"],
        widths=manifest["widths"],
        channels=manifest["channels"],
        in_channels=manifest["in_channels"],
        height=manifest["height"],
        width=manifest["width"],
    )
    model = build_model(spec)
    raw = (directory / "params.bin").read_bytes()
    flat = np.frombuffer(raw, dtype="<f8")
    offset = 0
    for p in model.parameters():
        n = p.values.size
        p.values = flat[offset : offset + n].reshape(p.values.shape).astype(np.float64)
        offset += n
    if offset * 8 != len(raw):
        raise UsageError(f"checkpoint blob size mismatch in {directory}")
    return model
