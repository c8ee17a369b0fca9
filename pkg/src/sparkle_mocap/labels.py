"""Hierarchical ground-truth labels: vertex->joint, point->joint, anchor->joint, point->anchor."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, knn

JOINT_BG = 24
ANCHOR_BG = 32


@dataclass
class LabelSet:
    joint_label: np.ndarray
    anchor_label: np.ndarray

    def __post_init__(self):
        self.joint_label = np.asarray(self.joint_label, dtype=int)
        self.anchor_label = np.asarray(self.anchor_label, dtype=int)
        if self.joint_label.shape != self.anchor_label.shape:
            raise ValueError("joint and anchor label arrays differ in length")
        if np.any((self.joint_label == JOINT_BG) & (self.anchor_label != ANCHOR_BG)):
            raise ValueError("background joint label must carry background anchor label")

    def __len__(self):
        return len(self.joint_label)

    def subset(self, idx) -> "LabelSet":
        return LabelSet(self.joint_label[idx], self.anchor_label[idx])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["joint_label", "anchor_label"])
            w.writerows(zip(self.joint_label.tolist(), self.anchor_label.tolist()))

    @classmethod
    def read_csv(cls, path) -> "LabelSet":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([int(r["joint_label"]) for r in rows], [int(r["anchor_label"]) for r in rows])


def vertex_joint_match(surface, joints) -> np.ndarray:
    """Nearest joint per vertex (ties to the lowest joint index)."""
    surface = np.asarray(surface, dtype=float).reshape(-1, 3)
    joints = np.asarray(joints, dtype=float).reshape(-1, 3)
    if len(surface) == 0 or len(joints) == 0:
        raise ValueError("vertex_joint_match needs non-empty inputs")
    d2 = np.sum((surface[:, None, :] - joints[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def point_joint_labels(c: PointCloud, surface, surface_joint, k: int = 3, bg_dist: float = 0.25) -> np.ndarray:
    """Majority vote over the k nearest surface vertices; far points become background."""
    surface = np.asarray(surface, dtype=float)
    surface_joint = np.asarray(surface_joint, dtype=int)
    if len(c) == 0:
        return np.zeros(0, dtype=int)
    nn = knn(c.points, surface, k)
    nearest = np.linalg.norm(c.points - surface[nn[:, 0]], axis=1)
    votes = surface_joint[nn]
    if k == 1:
        lab = votes[:, 0].copy()
    else:
        counts = np.zeros((len(c), JOINT_BG), dtype=int)
        np.add.at(counts, (np.repeat(np.arange(len(c)), k), votes.ravel()), 1)
        lab = np.argmax(counts, axis=1)
    lab[nearest > bg_dist] = JOINT_BG
    return lab


def anchor_joint_assign(anchor_vertex, surface_joint) -> np.ndarray:
    anchor_vertex = np.asarray(anchor_vertex, dtype=int)
    surface_joint = np.asarray(surface_joint, dtype=int)
    if np.any(anchor_vertex < 0) or np.any(anchor_vertex >= len(surface_joint)):
        raise ValueError("anchor vertex index out of range")
    return surface_joint[anchor_vertex]


def _fallback_joints(j: int, parent) -> list[int]:
    out = [int(c) for c in np.nonzero(np.asarray(parent) == j)[0]]
    if parent[j] >= 0:
        out.insert(0, int(parent[j]))
    return out


def point_anchor_labels(c: PointCloud, joint_label, anchors, anchor_joint, parent=None) -> np.ndarray:
    """Nearest anchor restricted to anchors of the point's own joint.

    A joint owning no anchors falls back to the anchors of its parent and
    children; if those are empty too, to all anchors.
    """
    from .body import PARENTS

    parent = PARENTS if parent is None else np.asarray(parent)
    joint_label = np.asarray(joint_label, dtype=int)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 3)
    anchor_joint = np.asarray(anchor_joint, dtype=int)
    out = np.full(len(joint_label), ANCHOR_BG, dtype=int)
    for j in np.unique(joint_label):
        if j == JOINT_BG:
            continue
        cand = np.nonzero(anchor_joint == j)[0]
        if len(cand) == 0:
            cand = np.nonzero(np.isin(anchor_joint, _fallback_joints(int(j), parent)))[0]
        if len(cand) == 0:
            cand = np.arange(len(anchors))
        pts = np.nonzero(joint_label == j)[0]
        d2 = np.sum((c.points[pts][:, None, :] - anchors[cand][None, :, :]) ** 2, axis=2)
        out[pts] = cand[np.argmin(d2, axis=1)]
    return out


def generate_labels(c: PointCloud, surface, surface_joint, anchors, anchor_joint,
                    k: int = 3, bg_dist: float = 0.25, parent=None) -> LabelSet:
    """Stages 2 and 4 against a posed surface (stages 1 and 3 live in the template)."""
    jl = point_joint_labels(c, surface, surface_joint, k, bg_dist)
    return LabelSet(jl, point_anchor_labels(c, jl, anchors, anchor_joint, parent))
