"""Dense numeric kernels with hand-written reverse-mode gradients.

Tensors are plain numpy arrays. A :class:`ParamSet` is an insertion-ordered
mapping of parameter names to arrays; gradients use the same container so
every parameter has a gradient slot of identical shape.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from odics.errors import ConfigurationError, DataError, NumericFailure


class ParamSet(dict):
    """Ordered name -> array mapping used for parameters and their gradients."""

    def copy(self) -> "ParamSet":
        return ParamSet((k, v.copy()) for k, v in self.items())

    def zeros_like(self) -> "ParamSet":
        return ParamSet((k, np.zeros_like(v)) for k, v in self.items())

    def num_values(self) -> int:
        return int(sum(v.size for v in self.values()))

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values()])

    def add_(self, other: "ParamSet", scale: float = 1.0) -> "ParamSet":
        check_same_structure(self, other)
        for k in self:
            self[k] += scale * other[k]
        return self

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.values())


def check_same_structure(a: ParamSet, b: ParamSet) -> None:
    if list(a) != list(b):
        raise ConfigurationError(f"parameter names differ: {list(a)} vs {list(b)}")
    for k in a:
        if a[k].shape != b[k].shape:
            raise ConfigurationError(f"shape mismatch for {k}: {a[k].shape} vs {b[k].shape}")


def distance(a: ParamSet, b: ParamSet) -> float:
    check_same_structure(a, b)
    return float(np.sqrt(sum(np.sum((a[k] - b[k]) ** 2) for k in a)))


# ---------------------------------------------------------------------------
# convolution


def _im2col_nhwc(x: np.ndarray, k: int) -> np.ndarray:
    """(N, H, W, C) -> (N, H, W, k*k*C) patches for a same-padded odd kernel."""
    n, h, w, c = x.shape
    p = k // 2
    xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    xp[:, p:p + h, p:p + w] = x
    cols = np.empty((n, h, w, k * k * c), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            s = (i * k + j) * c
            cols[..., s:s + c] = xp[:, i:i + h, j:j + w]
    return cols


def _check_conv_shapes(x_channels: int, kernel: np.ndarray, bias: np.ndarray) -> None:
    if kernel.ndim != 4:
        raise ConfigurationError(f"kernel must be O x C x k x k, got {kernel.shape}")
    o, c, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"kernel must be square with odd size, got {kh}x{kw}")
    if x_channels != c:
        raise ConfigurationError(f"channel mismatch: input has {x_channels}, kernel expects {c}")
    if bias.shape != (o,):
        raise ConfigurationError(f"bias shape {bias.shape} does not match {o} output channels")


def _kernel_matrix(kernel: np.ndarray) -> np.ndarray:
    o = kernel.shape[0]
    return kernel.transpose(0, 2, 3, 1).reshape(o, -1)  # (O, k*k*C), matches patch order


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation, NCHW in and out."""
    if x.ndim != 4:
        raise ConfigurationError(f"conv2d expects NCHW input, got shape {x.shape}")
    out, _ = conv2d_forward(x.transpose(0, 2, 3, 1), kernel, bias)
    return out.transpose(0, 3, 1, 2)


def conv2d_forward(x, kernel, bias):
    """NHWC forward; returns the output and the patch matrix for the backward pass."""
    _check_conv_shapes(x.shape[-1], kernel, bias)
    cols = _im2col_nhwc(x, kernel.shape[-1])
    y = cols @ _kernel_matrix(kernel).T
    y += bias
    return y, cols


def conv2d_backward(dy, kernel, cols, need_dx=True):
    """NHWC gradients of a same-padded conv w.r.t. (input, kernel, bias)."""
    n, h, w, o = dy.shape
    _, c, k, _ = kernel.shape
    p = k // 2
    dy_mat = dy.reshape(-1, o)
    dkernel = (dy_mat.T @ cols.reshape(-1, k * k * c)).reshape(o, k, k, c).transpose(0, 3, 1, 2)
    dbias = dy_mat.sum(axis=0)
    if not need_dx:
        return None, np.ascontiguousarray(dkernel), dbias
    dcols = dy @ _kernel_matrix(kernel)
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            s = (i * k + j) * c
            dxp[:, i:i + h, j:j + w] += dcols[..., s:s + c]
    return dxp[:, p:p + h, p:p + w], np.ascontiguousarray(dkernel), dbias


# ---------------------------------------------------------------------------
# pointwise


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return dy * (x > 0)


def log_softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    return np.exp(log_softmax(logits, axis=axis))


def masked_softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, ignore_index: int = 255):
    """Mean per-pixel cross entropy over non-ignored pixels.

    Args:
        logits: (N, C, H, W) real scores.
        labels: (N, H, W) integer class ids or ``ignore_index``.

    Returns:
        ``(loss, dlogits)``. With no valid pixel both are zero.
    """
    n, c, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ConfigurationError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    valid = labels != ignore_index
    bad = valid & ((labels < 0) | (labels >= c))
    if bad.any():
        raise DataError(f"label ids outside [0, {c}) and != {ignore_index}: {np.unique(labels[bad]).tolist()}")
    count = int(valid.sum())
    dlogits = np.zeros_like(logits)
    if count == 0:
        return 0.0, dlogits
    safe = np.where(valid, labels, 0)
    logp = log_softmax(logits, axis=1)
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    loss = -float(picked[valid].sum()) / count
    prob = np.exp(logp)
    np.put_along_axis(prob, safe[:, None], np.take_along_axis(prob, safe[:, None], axis=1) - 1.0, axis=1)
    dlogits[:] = prob * (valid[:, None] / count)
    return loss, dlogits


# ---------------------------------------------------------------------------
# optimisation


def sgd_step(params: ParamSet, grads: ParamSet, lr: float) -> None:
    """In-place ``theta <- theta - lr * g``."""
    check_same_structure(params, grads)
    for name, g in grads.items():
        if not np.isfinite(g).all():
            bad = int((~np.isfinite(g)).sum())
            raise NumericFailure(f"non-finite gradient in {name!r} ({bad} of {g.size} entries)")
    for name, g in grads.items():
        params[name] -= lr * g


def finite_diff_check(
    loss_fn: Callable[[ParamSet], tuple[float, ParamSet]],
    params: ParamSet,
    eps: float = 1e-5,
    num_coords: int | None = 100,
    seed: int = 0,
    coords: Iterable[tuple[str, int]] | None = None,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` maps a ParamSet to ``(loss, grads)``. Coordinates are sampled
    uniformly over all parameter entries (``num_coords=None`` checks every one).
    ``floor`` bounds the denominator from below: gradients far smaller than the
    central-difference roundoff are compared in absolute terms instead.
    """
    base = params.copy()
    _, analytic = loss_fn(base)
    if coords is None:
        index = [(k, i) for k, v in base.items() for i in range(v.size)]
        if num_coords is not None and num_coords < len(index):
            rng = np.random.default_rng(seed)
            pick = rng.choice(len(index), size=num_coords, replace=False)
            index = [index[i] for i in sorted(pick)]
    else:
        index = list(coords)
    worst = 0.0
    for name, i in index:
        probe = base.copy()
        flat = probe[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        up, _ = loss_fn(probe)
        flat[i] = orig - eps
        down, _ = loss_fn(probe)
        numeric = (up - down) / (2 * eps)
        a = float(analytic[name].reshape(-1)[i])
        worst = max(worst, abs(a - numeric) / max(floor, abs(a) + abs(numeric)))
    return worst
