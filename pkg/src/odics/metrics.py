"""Confusion matrices, mIoU and transfer statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from odics.errors import ConfigurationError, DataError


class ConfusionMatrix:
    """C x C counts, rows = ground truth, columns = prediction."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, pred_mask, gt_mask, ignore_index: int = 255) -> None:
        accumulate(self, pred_mask, gt_mask, ignore_index)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_classes)
        out.counts = self.counts + other.counts
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, pred_mask, gt_mask, ignore_index: int = 255) -> None:
    pred = np.asarray(pred_mask).ravel().astype(np.int64)
    gt = np.asarray(gt_mask).ravel().astype(np.int64)
    if pred.shape != gt.shape:
        raise ConfigurationError(f"pred/gt shape mismatch {np.shape(pred_mask)} vs {np.shape(gt_mask)}")
    valid = gt != ignore_index
    pred, gt = pred[valid], gt[valid]
    c = cm.num_classes
    if ((gt < 0) | (gt >= c)).any() or ((pred < 0) | (pred >= c)).any():
        raise DataError(f"label outside [0, {c})")
    cm.counts += np.bincount(gt * c + pred, minlength=c * c).reshape(c, c)


def per_class_iou(cm) -> np.ndarray:
    """IoU per class; NaN where the union is empty."""
    m = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    inter = np.diag(m).astype(float)
    union = m.sum(axis=0) + m.sum(axis=1) - np.diag(m)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), np.nan)


def miou(cm) -> float:
    iou = per_class_iou(cm)
    present = ~np.isnan(iou)
    if not present.any():
        return 0.0
    return float(iou[present].mean())


@dataclass
class TransferMatrix:
    """``values[i][j]``: mIoU on domain ``j`` after finishing domain ``i`` (NaN = not yet filled)."""

    domains: list
    values: np.ndarray

    @classmethod
    def empty(cls, domains) -> "TransferMatrix":
        d = len(domains)
        return cls(list(domains), np.full((d, d), np.nan))

    def set_row(self, i: int, row) -> None:
        self.values[i] = np.asarray(row, dtype=float)

    def is_complete(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def to_list(self):
        return [[None if np.isnan(v) else float(v) for v in row] for row in self.values]


def transfer_stats(R, order=None) -> dict:
    """Backward transfer ``R[last][j] - R[j][j]`` and forward transfer ``R[j][j] - R[j-1][j]``.

    ``order`` lists the domain names in training order (row order of ``R``);
    results are keyed by name. Forward transfer is undefined for the first
    domain. ``forward_column[j]`` holds ``R[i][j]`` for every ``i < j``.
    """
    if isinstance(R, TransferMatrix):
        order = order or R.domains
        R = R.values
    R = np.asarray(R, dtype=float)
    d = R.shape[0]
    if R.shape != (d, d):
        raise ConfigurationError(f"transfer matrix must be square, got {R.shape}")
    if not np.isfinite(R).all():
        raise DataError("transfer matrix is not fully populated")
    order = list(order) if order is not None else list(range(d))
    backward = {order[j]: float(R[-1, j] - R[j, j]) for j in range(d)}
    forward = {order[j]: float(R[j, j] - R[j - 1, j]) for j in range(1, d)}
    column = {order[j]: [float(R[i, j]) for i in range(j)] for j in range(d)}
    bwt = [backward[order[j]] for j in range(d - 1)]
    return {
        "backward": backward,
        "forward": forward,
        "forward_column": column,
        # the last domain cannot be forgotten, so it is left out of the mean
        "mean_backward": float(np.mean(bwt)) if bwt else 0.0,
        "mean_forward": float(np.mean(list(forward.values()))) if forward else 0.0,
    }
