"""Multi-task training losses evaluated on grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, ShapeMismatch
from .featuremaps import FeatureMaps
from .geometry import angle_difference, fold_angle, fold_vector_angle

EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    lambda_align: float = 100.0

    def __post_init__(self):
        if self.lambda_align < 0:
            raise ValueError("lambda_align must be >= 0")


@dataclass(frozen=True)
class LossReport:
    seg: float
    dt: float
    align: float
    total: float


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"grid shapes differ: {sorted(shapes)}")


def seg_loss(pred, gt) -> float:
    """Mean binary cross entropy; predictions clamped to ``[EPS, 1 - EPS]``."""
    _same_shape(pred, gt)
    y = np.clip(np.asarray(pred, dtype=np.float64), EPS, 1 - EPS)
    t = np.asarray(gt, dtype=np.float64)
    return float(-np.mean(t * np.log(y) + (1 - t) * np.log(1 - y)))


def dt_loss(pred, gt) -> float:
    _same_shape(pred, gt)
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float(np.mean(diff * diff))


def alignment_loss(pred_vx, pred_vy, gt_angle, mask) -> float:
    """Mean squared undirected angle error over ``mask``.

    The predicted vector and the target angle are both folded to ``[0, pi)``
    and their difference wrapped to ``(-pi/2, pi/2]``, so 1 and 179 degrees
    are 2 degrees apart.
    """
    _same_shape(pred_vx, pred_vy, gt_angle, mask)
    on = np.asarray(mask) > 0
    if not on.any():
        raise EmptyMask("alignment loss needs at least one masked pixel")
    pred = fold_vector_angle(np.asarray(pred_vx)[on], np.asarray(pred_vy)[on])
    target = fold_angle(np.asarray(gt_angle, dtype=np.float64)[on])
    d = angle_difference(pred, target)
    return float(np.mean(np.square(d)))


def total_loss(pred: FeatureMaps, gt: FeatureMaps, cfg: LossConfig = LossConfig()) -> LossReport:
    if pred.spec.shape != gt.spec.shape:
        raise ShapeMismatch(f"grid shapes differ: {pred.spec.shape} vs {gt.spec.shape}")
    seg = seg_loss(pred.seg, gt.seg)
    dt = dt_loss(pred.dt, gt.dt)
    if np.any(gt.angle_mask > 0):
        gt_angle = fold_vector_angle(gt.angle_x, gt.angle_y)
        align = alignment_loss(pred.angle_x, pred.angle_y, gt_angle, gt.angle_mask)
    else:
        align = 0.0
    return LossReport(seg, dt, align, seg + dt + cfg.lambda_align * align)
