"""Joint/vertex position errors (mm) and rotation angle error (degrees)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .body import BodyTemplate, Pose, forward_kinematics
from .geom3 import geodesic_angle_deg, rotvec_to_matrix

FIELDS = ("j_err_l", "v_err_l", "j_err_g", "v_err_g", "ang_err")


def mpjpe(pred, gt, mode: str = "global") -> float:
    """Mean per-point Euclidean error in millimetres.

    ``local`` first moves both sets so that point 0 (the root) is at the origin.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3 or len(pred) < 1:
        raise ValueError(f"mpjpe shape mismatch: {pred.shape} vs {gt.shape}")
    if mode == "local":
        pred = pred - pred[0]
        gt = gt - gt[0]
    elif mode != "global":
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.linalg.norm(pred - gt, axis=1).mean() * 1000.0)


def angle_error(theta_pred, theta_gt) -> float:
    rp = rotvec_to_matrix(np.asarray(theta_pred, dtype=float).reshape(-1, 3))
    rg = rotvec_to_matrix(np.asarray(theta_gt, dtype=float).reshape(-1, 3))
    if rp.shape != rg.shape:
        raise ValueError("angle_error: pose sizes differ")
    return float(np.mean([geodesic_angle_deg(a, b) for a, b in zip(rp, rg)]))


@dataclass
class EvalReport:
    j_err_l: float = 0.0
    v_err_l: float = 0.0
    j_err_g: float = 0.0
    v_err_g: float = 0.0
    ang_err: float = 0.0
    per_frame: dict = field(default_factory=lambda: {k: [] for k in FIELDS})

    @classmethod
    def from_series(cls, series: dict) -> "EvalReport":
        means = {k: float(np.mean(series[k])) if len(series[k]) else 0.0 for k in FIELDS}
        return cls(**means, per_frame={k: [float(v) for v in series[k]] for k in FIELDS})

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in FIELDS}

    def to_dict(self) -> dict:
        return {**self.summary(), "frames": len(self.per_frame["j_err_g"]), "per_frame": self.per_frame}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("frame",) + FIELDS)
            for t in range(len(self.per_frame["j_err_g"])):
                w.writerow([t] + [repr(self.per_frame[k][t]) for k in FIELDS])
            w.writerow(["mean"] + [repr(getattr(self, k)) for k in FIELDS])


def evaluate_frame(pred: Pose, gt: Pose, template: BodyTemplate) -> dict:
    bp = forward_kinematics(template, pred)
    bg = forward_kinematics(template, gt)
    # local vertex error is taken relative to the root joint, like the joints
    vp = bp.surface - bp.joints[0]
    vg = bg.surface - bg.joints[0]
    return {
        "j_err_l": mpjpe(bp.joints, bg.joints, "local"),
        "v_err_l": mpjpe(vp, vg, "global"),
        "j_err_g": mpjpe(bp.joints, bg.joints, "global"),
        "v_err_g": mpjpe(bp.surface, bg.surface, "global"),
        "ang_err": angle_error(pred.theta, gt.theta),
    }


def evaluate_sequence(preds: Sequence[Pose], gts: Sequence[Pose], template: BodyTemplate) -> EvalReport:
    if len(preds) != len(gts):
        raise ValueError(f"sequence lengths differ: {len(preds)} vs {len(gts)}")
    series = {k: [] for k in FIELDS}
    for p, g in zip(preds, gts):
        for k, v in evaluate_frame(p, g, template).items():
            series[k].append(v)
    return EvalReport.from_series(series)
