"""Small fully-convolutional per-pixel classifier and its training objective."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Sequence

import numpy as np

from odics import tensor as T
from odics.errors import ConfigurationError, NumericFailure
from odics.tensor import ParamSet

IGNORE_INDEX = 255
INPUT_MEAN = 0.5
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    hidden_channels: int = 16
    num_layers: int = 3
    num_classes: int = 19
    kernel_size: int = 3
    init_seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigurationError("kernel_size must be odd")
        if self.num_layers < 1:
            raise ConfigurationError("num_layers must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def layer_channels(self) -> list[tuple[int, int]]:
        widths = [self.in_channels] + [self.hidden_channels] * (self.num_layers - 1) + [self.num_classes]
        return list(zip(widths[:-1], widths[1:]))


def init_model(config: ModelConfig) -> ParamSet:
    """He-normal kernels, zero biases; deterministic in ``config.init_seed``."""
    rng = np.random.default_rng(config.init_seed)
    k = config.kernel_size
    params = ParamSet()
    for i, (cin, cout) in enumerate(config.layer_channels()):
        std = np.sqrt(2.0 / (cin * k * k))
        params[f"conv{i}.weight"] = (rng.standard_normal((cout, cin, k, k)) * std).astype(config.dtype)
        params[f"conv{i}.bias"] = np.zeros(cout, dtype=config.dtype)
    return params


def num_layers(params: ParamSet) -> int:
    return len(params) // 2


def forward(params: ParamSet, images: np.ndarray, cache: list | None = None) -> np.ndarray:
    """Logits (N, C, H, W). When ``cache`` is a list, per-layer activations are appended."""
    if images.ndim != 4:
        raise ConfigurationError(f"images must be NCHW, got shape {images.shape}")
    # fixed input centring; activations are kept channels-last
    x = (images - INPUT_MEAN).transpose(0, 2, 3, 1)
    depth = num_layers(params)
    for i in range(depth):
        w, b = params[f"conv{i}.weight"], params[f"conv{i}.bias"]
        pre, cols = T.conv2d_forward(x, w, b)
        if cache is not None:
            cache.append((cols, pre))
        x = T.relu(pre) if i < depth - 1 else pre
    return x.transpose(0, 3, 1, 2)


def backward(params: ParamSet, cache: list, dlogits: np.ndarray) -> ParamSet:
    grads = ParamSet()
    depth = num_layers(params)
    dy = dlogits.transpose(0, 2, 3, 1)
    for i in reversed(range(depth)):
        cols, pre = cache[i]
        if i < depth - 1:
            dy = T.relu_backward(dy, pre)
        w = params[f"conv{i}.weight"]
        dx, dw, db = T.conv2d_backward(dy, w, cols, need_dx=i > 0)
        grads[f"conv{i}.weight"] = dw
        grads[f"conv{i}.bias"] = db
        dy = dx
    return ParamSet((k, grads[k]) for k in params)


def predict(params: ParamSet, images: np.ndarray) -> np.ndarray:
    return argmax_classes(forward(params, images))


def argmax_classes(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class id
    return np.argmax(logits, axis=1)


# ---------------------------------------------------------------------------
# objective terms


@dataclass
class DataTerm:
    """Masked cross entropy on an extra labelled batch (replay or simulated)."""

    images: np.ndarray
    masks: np.ndarray
    weight: float = 1.0
    name: str = "data"


@dataclass
class LogitTerm:
    """Penalty on the logits of the primary batch: ``fn(logits) -> (value, dlogits)``."""

    fn: Callable[[np.ndarray], tuple[float, np.ndarray]]
    name: str = "logit"


@dataclass
class ParamTerm:
    """Penalty on the parameters: ``fn(params) -> (value, grads)``."""

    fn: Callable[[ParamSet], tuple[float, ParamSet]]
    name: str = "param"


PenaltyTerm = DataTerm | LogitTerm | ParamTerm


@dataclass
class LossBreakdown:
    total: float
    parts: dict = field(default_factory=dict)


def loss_and_grads(params: ParamSet, images: np.ndarray, masks: np.ndarray,
                   extra_terms: Sequence[PenaltyTerm] = (), ignore_index: int = IGNORE_INDEX,
                   with_breakdown: bool = False):
    """Total objective = mean CE on (images, masks) + sum of extra terms, with exact gradients.

    All data terms share one forward/backward pass over the concatenated images,
    which is what counts as a single budget unit.
    """
    # a data term with no valid pixel contributes exactly zero; skipping it keeps
    # the matmul shapes, and so the floating-point results, of the remaining terms
    data_terms = [t for t in extra_terms if isinstance(t, DataTerm) and (np.asarray(t.masks) != ignore_index).any()]
    groups = [(images, masks, 1.0, "data")] + [(t.images, t.masks, t.weight, t.name) for t in data_terms]
    all_images = np.concatenate([g[0] for g in groups]) if data_terms else images
    cache: list = []
    logits = forward(params, all_images, cache)
    dlogits = np.zeros_like(logits)
    parts = {}
    total = 0.0
    start = 0
    for imgs, msk, weight, name in groups:
        stop = start + len(imgs)
        if stop > start:
            value, d = T.masked_softmax_cross_entropy(logits[start:stop], msk, ignore_index)
            dlogits[start:stop] += weight * d
            total += weight * value
            parts[name] = parts.get(name, 0.0) + weight * value
        start = stop
    primary = logits[:len(images)]
    param_grads = []
    for term in extra_terms:
        if isinstance(term, LogitTerm):
            value, d = term.fn(primary)
            dlogits[:len(images)] += d
        elif isinstance(term, ParamTerm):
            value, g = term.fn(params)
            param_grads.append(g)
        else:
            continue
        total += value
        parts[term.name] = parts.get(term.name, 0.0) + value
    if not np.isfinite(total):
        raise NumericFailure(f"non-finite loss; parts={parts}")
    grads = backward(params, cache, dlogits)
    for g in param_grads:
        grads.add_(g)
    if with_breakdown:
        return total, grads, LossBreakdown(total, parts)
    return total, grads


# ---------------------------------------------------------------------------
# snapshots and checkpoints


class ModelSnapshot:
    """Frozen deep copy of a ParamSet; arrays are marked read-only."""

    __slots__ = ("_params", "config")

    def __init__(self, params: ParamSet, config: ModelConfig | None = None):
        frozen = ParamSet()
        for k, v in params.items():
            a = np.array(v, copy=True)
            a.setflags(write=False)
            frozen[k] = a
        self._params = MappingProxyType(frozen)
        self.config = config

    @property
    def params(self) -> ParamSet:
        # read-only view; mutating the arrays raises
        return ParamSet(self._params)

    def thaw(self) -> ParamSet:
        return ParamSet((k, v.copy()) for k, v in self._params.items())


def snapshot(params, config: ModelConfig | None = None) -> ModelSnapshot:
    if isinstance(params, ModelSnapshot):
        return ModelSnapshot(params.params, params.config if config is None else config)
    return ModelSnapshot(params, config)


def save_checkpoint(path: str | Path, params: ParamSet, config: ModelConfig) -> None:
    """npz container: ``__meta__`` JSON (version + config) plus one array per parameter."""
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(config), "names": list(params)})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params)


def load_checkpoint(path: str | Path) -> tuple[ParamSet, ModelConfig]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {meta.get('version')}")
        params = ParamSet((name, data[name].copy()) for name in meta["names"])
    return params, ModelConfig(**meta["config"])
