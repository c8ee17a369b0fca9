"""Fusion of per-view Sparkles: rotation calibration and confidence-weighted averaging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geom3 import chordal_mean
from .sparkle import Sparkle


@dataclass
class ViewPrediction:
    sparkle: Sparkle
    view_id: int = 0
    view_weight_scale: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.view_weight_scale) or self.view_weight_scale < 0:
            raise ValueError("view_weight_scale must be a finite non-negative number")


def _view_weight(p: ViewPrediction) -> float:
    conf = np.concatenate([p.sparkle.joint_conf, p.sparkle.anchor_conf])
    return p.view_weight_scale * float(conf.mean())


def _canonical(preds):
    return sorted(preds, key=lambda p: p.view_id)


def calibrate_rotation(preds: Sequence[ViewPrediction]) -> np.ndarray:
    """Weighted chordal mean of the views' global rotations."""
    if not preds:
        raise ValueError("calibrate_rotation: no views")
    preds = _canonical(preds)
    return chordal_mean([p.sparkle.global_rot for p in preds], [_view_weight(p) for p in preds])


def _fuse_points(xs, w):
    """xs (V, K, 3), w (V, K) -> fused (K, 3) and a mask of keypoints with no weight."""
    tot = w.sum(axis=0)
    dead = tot <= 0
    wn = np.where(dead[None, :], 1.0 / len(xs), w / np.where(dead, 1.0, tot)[None, :])
    return np.einsum("vk,vkd->kd", wn, xs), dead


def fuse_sparkle(preds: Sequence[ViewPrediction]) -> Sparkle:
    """Per-keypoint weights = view scale x keypoint confidence, normalized per keypoint."""
    if not preds:
        raise ValueError("fuse_sparkle: no views")
    preds = _canonical(preds)
    scale = np.array([p.view_weight_scale for p in preds])
    jw = scale[:, None] * np.stack([p.sparkle.joint_conf for p in preds])
    aw = scale[:, None] * np.stack([p.sparkle.anchor_conf for p in preds])
    joints, jdead = _fuse_points(np.stack([p.sparkle.joints for p in preds]), jw)
    anchors, adead = _fuse_points(np.stack([p.sparkle.anchors for p in preds]), aw)
    live = scale > 0 if np.any(scale > 0) else np.ones(len(preds), dtype=bool)
    jconf = np.where(jdead, 0.0, np.stack([p.sparkle.joint_conf for p in preds])[live].max(axis=0))
    aconf = np.where(adead, 0.0, np.stack([p.sparkle.anchor_conf for p in preds])[live].max(axis=0))
    tw = scale * np.array([p.sparkle.joint_conf.mean() for p in preds])
    trans, _ = _fuse_points(np.stack([p.sparkle.trans for p in preds])[:, None, :], tw[:, None])
    if np.any([_view_weight(p) > 0 for p in preds]):
        rot = calibrate_rotation(preds)
    else:
        rot = chordal_mean([p.sparkle.global_rot for p in preds])
    return Sparkle(joints, anchors, trans[0], rot, jconf, aconf)
