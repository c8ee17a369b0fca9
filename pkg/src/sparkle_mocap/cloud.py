"""Point-cloud primitives and a simple single-view depth sensor model."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


@dataclass
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    frame: int = 0
    view_id: Optional[int] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self):
        return len(self.points)

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[idx], self.frame, self.view_id)


@dataclass(frozen=True)
class SensorModel:
    view_dir: tuple = (1.0, 0.0, 0.0)
    noise_sigma: float = 0.0
    dropout: float = 0.0
    density_ref_dist: float = 10.0
    seed: int = 0
    cull: bool = True

    def __post_init__(self):
        v = np.asarray(self.view_dir, dtype=float)
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("view_dir must be a unit 3-vector")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def farthest_point_sample(c: PointCloud, k: int, start: int = 0) -> PointCloud:
    return c.subset(farthest_point_indices(c.points, k, start))


def farthest_point_indices(points, k: int, start: int = 0) -> np.ndarray:
    """Greedy max-min selection; ties go to the lowest index."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if not 0 <= start < n:
        raise ValueError("start index out of range")
    sel = np.empty(k, dtype=int)
    sel[0] = start
    d = np.sum((pts - pts[start]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(d))
        sel[i] = nxt
        d = np.minimum(d, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return sel


def normalize(c: PointCloud):
    if len(c) == 0:
        raise ValueError("cannot normalize an empty cloud")
    centroid = c.points.mean(axis=0)
    return PointCloud(c.points - centroid, c.frame, c.view_id), centroid


def knn(query, reference, k: int) -> np.ndarray:
    """Indices of the k nearest references per query, ascending distance,
    ties broken by lowest reference index."""
    q = np.asarray(query, dtype=float).reshape(-1, 3)
    r = np.asarray(reference, dtype=float).reshape(-1, 3)
    if k > len(r) or k < 1:
        raise ValueError(f"k={k} invalid for {len(r)} reference points")
    out = np.empty((len(q), k), dtype=int)
    if len(q) == 0:
        return out
    tree = cKDTree(r)
    _, idx = tree.query(q, k)
    idx = idx.reshape(len(q), k)
    # the tree's k-th distance bounds the true one; re-rank everything inside
    # that ball with exact squared differences so ties resolve by index
    kth = np.sum((q[:, None, :] - r[idx]) ** 2, axis=2).max(axis=1)
    balls = tree.query_ball_point(q, np.sqrt(kth) * (1 + 1e-9) + 1e-12)
    for i, cand in enumerate(balls):
        cand = np.asarray(cand, dtype=int)
        d2 = np.sum((r[cand] - q[i]) ** 2, axis=1)
        out[i] = cand[np.lexsort((cand, d2))[:k]]
    return out


def euclidean_cluster(c: PointCloud, radius: float, min_pts: int = 1) -> list[PointCloud]:
    return [c.subset(idx) for idx in euclidean_cluster_indices(c.points, radius, min_pts)]


def euclidean_cluster_indices(points, radius: float, min_pts: int = 1) -> list[np.ndarray]:
    """Connected components of the radius graph, ordered by lowest member index."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(comp):
        groups.setdefault(int(lab), []).append(i)
    clusters = [np.array(v) for v in groups.values() if len(v) >= min_pts]
    clusters.sort(key=lambda a: a[0])
    return clusters


def simulate_scan(b, s: SensorModel, target_count: int, frame: int = 0, view_id=None,
                  surface_joint=None, return_index: bool = False):
    """Sample a scan of a posed body as seen from a sensor looking along ``view_dir``.

    ``surface_joint`` gives each surface point's joint; culling uses the radial
    direction from that joint. Returns the cloud, plus source surface indices
    if ``return_index``.
    """
    if target_count < 1:
        raise ValueError("target_count must be at least 1")
    if surface_joint is None:
        raise ValueError("simulate_scan needs the template surface_joint binding")
    rng = np.random.default_rng(s.seed)
    view = np.asarray(s.view_dir, dtype=float)
    surf = b.surface
    idx = np.arange(len(surf))
    if s.cull:
        radial = surf - b.joints[surface_joint]
        idx = idx[radial @ (-view) >= 0.0]
    dist = np.linalg.norm(surf[idx].mean(axis=0)) if len(idx) else 0.0
    keep_frac = 1.0 if dist <= 0 else min(1.0, (s.density_ref_dist / dist) ** 2)
    if keep_frac < 1.0:
        idx = idx[rng.random(len(idx)) < keep_frac]
    pts = surf[idx]
    if s.noise_sigma > 0:
        pts = pts + rng.normal(scale=s.noise_sigma, size=pts.shape)
    if s.dropout > 0:
        keep = rng.random(len(pts)) >= s.dropout
        pts, idx = pts[keep], idx[keep]
    if len(pts) > target_count:
        sel = farthest_point_indices(pts, target_count, 0)
        pts, idx = pts[sel], idx[sel]
    cloud = PointCloud(pts, frame, view_id)
    return (cloud, idx) if return_index else cloud


def occlude(c: PointCloud, ratio: float, seed: int = 0) -> PointCloud:
    return c.subset(occlude_indices(len(c), ratio, seed))


def occlude_indices(n: int, ratio: float, seed: int = 0) -> np.ndarray:
    """Indices surviving removal of round(ratio * n) uniformly chosen points, in original order."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("occlusion ratio must lie in [0, 1]")
    remove = int(round(ratio * n))
    rng = np.random.default_rng(seed)
    drop = rng.choice(n, size=remove, replace=False) if remove else np.zeros(0, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[drop] = False
    return np.nonzero(mask)[0]


_FRAME_RE = re.compile(r"frame_(\d{6})\.(ply|csv)$")


def frame_filename(frame: int, ext: str = "ply") -> str:
    return f"frame_{frame:06d}.{ext}"


def _frame_from_name(path: Path) -> int:
    m = _FRAME_RE.search(path.name)
    return int(m.group(1)) if m else 0


def write_ply(path, c: PointCloud) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(c)}",
        "property float64 x",
        "property float64 y",
        "property float64 z",
        "end_header",
    ]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in c.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path, view_id=None) -> PointCloud:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    end = None
    for i, line in enumerate(text):
        parts = line.split()
        if parts[:1] == ["format"] and parts[1:2] != ["ascii"]:
            raise ValueError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        if line.strip() == "end_header":
            end = i
            break
    if n is None or end is None:
        raise ValueError(f"{path}: malformed PLY header")
    body = text[end + 1:end + 1 + n]
    pts = np.array([[float(v) for v in row.split()[:3]] for row in body]).reshape(-1, 3)
    return PointCloud(pts, _frame_from_name(path), view_id)


def write_csv(path, c: PointCloud) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        for x, y, z in c.points.tolist():
            w.writerow([repr(x), repr(y), repr(z)])


def read_csv(path, view_id=None) -> PointCloud:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
    return PointCloud(pts, _frame_from_name(path), view_id)
