"""Multi-person stage: zone-cropped clustering, centroid tracking, MOTA/IDF1/IDs."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cloud import PointCloud, euclidean_cluster_indices

_BIG = 1e12


@dataclass
class Track:
    id: int
    centroids: list = field(default_factory=list)
    missed: int = 0

    @property
    def last(self) -> np.ndarray:
        return self.centroids[-1]


@dataclass
class Association:
    tracks: list
    assignment: dict  # detection index -> track id
    next_id: int
    terminated: list = field(default_factory=list)


@dataclass
class MotReport:
    mota: float
    idf1: float
    id_switches: int
    fp: int
    fn: int
    gt_total: int
    idtp: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def segment_persons(c: PointCloud, zone_min, zone_max, radius: float = 0.4, min_pts: int = 30):
    zone_min = np.asarray(zone_min, dtype=float)
    zone_max = np.asarray(zone_max, dtype=float)
    if np.any(zone_min >= zone_max):
        raise ValueError("zone_min must be below zone_max componentwise")
    inside = np.all((c.points >= zone_min) & (c.points <= zone_max), axis=1)
    idx = np.nonzero(inside)[0]
    out = []
    for members in euclidean_cluster_indices(c.points[idx], radius, min_pts):
        sub = c.subset(idx[members])
        out.append((sub, sub.points.mean(axis=0)))
    return out


def _assign(cost: np.ndarray, gate: float):
    """Optimal one-to-one pairs with cost <= gate."""
    if cost.size == 0:
        return []
    c = np.where(cost <= gate, cost, _BIG)
    rows, cols = linear_sum_assignment(c)
    return [(int(r), int(k)) for r, k in zip(rows, cols) if cost[r, k] <= gate]


def associate(tracks: Sequence[Track], detections, gate: float = 1.0, max_miss: int = 5,
              next_id: int | None = None) -> Association:
    """Match detections to tracks by minimum total centroid distance within ``gate``.

    Unmatched detections open new tracks; tracks missing more than ``max_miss``
    consecutive frames are terminated.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    dets = np.asarray(detections, dtype=float).reshape(-1, 3)
    if next_id is None:
        next_id = max((t.id for t in tracks), default=-1) + 1
    tracks = [Track(t.id, list(t.centroids), t.missed) for t in tracks]
    if tracks and len(dets):
        cost = np.linalg.norm(np.stack([t.last for t in tracks])[:, None] - dets[None], axis=2)
        pairs = _assign(cost, gate)
    else:
        pairs = []
    assignment = {}
    matched = set()
    for ti, di in pairs:
        tracks[ti].centroids.append(dets[di].copy())
        tracks[ti].missed = 0
        assignment[di] = tracks[ti].id
        matched.add(ti)
    alive, dead = [], []
    for i, t in enumerate(tracks):
        if i not in matched:
            t.missed += 1
        (dead if t.missed > max_miss else alive).append(t)
    for di in range(len(dets)):
        if di not in assignment:
            alive.append(Track(next_id, [dets[di].copy()], 0))
            assignment[di] = next_id
            next_id += 1
    return Association(alive, assignment, next_id, dead)


class Tracker:
    """Stateful wrapper running ``associate`` frame by frame."""

    def __init__(self, gate: float = 1.0, max_miss: int = 5):
        self.gate = gate
        self.max_miss = max_miss
        self.tracks: list[Track] = []
        self.next_id = 0

    def step(self, detections) -> dict:
        res = associate(self.tracks, detections, self.gate, self.max_miss, self.next_id)
        self.tracks, self.next_id = res.tracks, res.next_id
        return res.assignment


def compute_mot(gt: Sequence[Mapping[int, Sequence[float]]], pred: Sequence[Mapping[int, Sequence[float]]],
                match_dist: float = 0.5) -> MotReport:
    """CLEAR-MOT counts and IDF1 for per-frame {id: centroid} dictionaries."""
    if len(gt) != len(pred):
        raise ValueError("gt and pred must cover the same frames")
    fp = fn = ids = total = 0
    last_match: dict = {}
    co = defaultdict(int)
    n_gt_dets = n_pred_dets = 0
    for g, p in zip(gt, pred):
        gids, pids = sorted(g), sorted(p)
        n_gt_dets += len(gids)
        n_pred_dets += len(pids)
        total += len(gids)
        if gids and pids:
            gx = np.array([g[i] for i in gids], dtype=float).reshape(-1, 3)
            px = np.array([p[i] for i in pids], dtype=float).reshape(-1, 3)
            d = np.linalg.norm(gx[:, None] - px[None], axis=2)
            pairs = _assign(d, match_dist)
            for gi, pi in zip(*np.nonzero(d <= match_dist)):
                co[(gids[gi], pids[pi])] += 1
        else:
            pairs = []
        for gi, pi in pairs:
            gid, pid = gids[gi], pids[pi]
            if gid in last_match and last_match[gid] != pid:
                ids += 1
            last_match[gid] = pid
        fn += len(gids) - len(pairs)
        fp += len(pids) - len(pairs)
    mota = 1.0 - (fp + fn + ids) / total if total else 1.0
    idtp = _idtp(co)
    denom = n_gt_dets + n_pred_dets
    idf1 = 2.0 * idtp / denom if denom else 1.0
    return MotReport(mota, idf1, ids, fp, fn, total, idtp)


def _idtp(co: Mapping) -> int:
    """Best one-to-one identity mapping maximizing co-occurring matched frames."""
    if not co:
        return 0
    gset = sorted({g for g, _ in co})
    pset = sorted({p for _, p in co})
    m = np.zeros((len(gset), len(pset)))
    gi = {g: i for i, g in enumerate(gset)}
    pi = {p: i for i, p in enumerate(pset)}
    for (g, p), v in co.items():
        m[gi[g], pi[p]] = v
    rows, cols = linear_sum_assignment(-m)
    return int(m[rows, cols].sum())


def write_tracks_csv(path, frames: Sequence[Mapping[int, Sequence[float]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "id", "x", "y", "z"])
        for t, f in enumerate(frames):
            for i in sorted(f):
                x, y, z = (float(v) for v in f[i])
                w.writerow([t, i, repr(x), repr(y), repr(z)])


def read_tracks_csv(path, n_frames: int | None = None) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    last = max((int(r["frame"]) for r in rows), default=-1)
    n = last + 1 if n_frames is None else n_frames
    frames: list[dict] = [{} for _ in range(n)]
    for r in rows:
        frames[int(r["frame"])][int(r["id"])] = np.array([float(r["x"]), float(r["y"]), float(r["z"])])
    return frames
