import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparkle_mocap.body import Pose, forward_kinematics
from sparkle_mocap.cloud import (
    PointCloud, SensorModel, euclidean_cluster, euclidean_cluster_indices, farthest_point_indices,
    farthest_point_sample, frame_filename, knn, normalize, occlude, read_csv, read_ply, simulate_scan, write_csv,
    write_ply,
)


def _fps_oracle(pts, k, start):
    """Greedy trace recomputed from the full distance table."""
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    sel = [start]
    while len(sel) < k:
        mind = d[:, sel].min(axis=1)
        best = mind.max()
        sel.append(int(np.nonzero(mind == best)[0][0]))
    return sel


def test_fps_all_points():
    pts = np.random.default_rng(0).normal(size=(7, 3))
    assert sorted(farthest_point_indices(pts, 7, 3).tolist()) == list(range(7))


def test_fps_line():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [9, 0, 0]], float)
    assert farthest_point_indices(pts, 2, 0).tolist() == [0, 3]
    # brute force over all pairs: {0, 9} maximizes the pair distance
    best = max(itertools.combinations(range(4), 2), key=lambda p: np.linalg.norm(pts[p[0]] - pts[p[1]]))
    assert set(best) == {0, 3}


def test_fps_square_never_center():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0]], float)
    for start in range(4):
        sel = farthest_point_indices(pts, 3, start).tolist()
        assert 4 not in sel and sel == _fps_oracle(pts, 3, start)


def test_fps_rejects_bad_k():
    with pytest.raises(ValueError):
        farthest_point_indices(np.zeros((3, 3)), 4)


@given(st.integers(0, 2**31), st.integers(1, 40))
def test_fps_matches_greedy_oracle(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 5, size=(40, 3)).astype(float)  # many ties
    c = farthest_point_sample(PointCloud(pts), k)
    assert farthest_point_indices(pts, k).tolist() == _fps_oracle(pts, k, 0)
    assert len(c) == k


def test_normalize():
    c, cen = normalize(PointCloud([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(c.points, [[0, 0, 0]])
    np.testing.assert_array_equal(cen, [1, 2, 3])
    pts = np.random.default_rng(1).normal(size=(50, 3)) + 4
    c, _ = normalize(PointCloud(pts))
    np.testing.assert_allclose(c.points.mean(axis=0), 0, atol=1e-12)
    c2, shift = normalize(c)
    np.testing.assert_allclose(shift, 0, atol=1e-12)
    with pytest.raises(ValueError):
        normalize(PointCloud())


def test_knn_examples():
    ref = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], float)
    assert knn([[0.9, 0, 0]], ref, 2).tolist() == [[1, 0]]
    assert knn(ref[2:], ref, 1).tolist() == [[2]]
    with pytest.raises(ValueError):
        knn(ref, ref, 4)


def test_knn_full_sort_oracle():
    rng = np.random.default_rng(2)
    ref = rng.normal(size=(500, 3))
    q = rng.normal(size=(60, 3))
    d = np.linalg.norm(q[:, None] - ref[None], axis=2)
    want = np.argsort(d, axis=1, kind="stable")[:, :7]
    np.testing.assert_array_equal(knn(q, ref, 7), want)


@given(st.integers(0, 2**31), st.integers(1, 12))
def test_knn_ties_by_lowest_index(seed, k):
    rng = np.random.default_rng(seed)
    ref = rng.integers(0, 3, size=(30, 3)).astype(float)
    q = rng.integers(0, 3, size=(10, 3)).astype(float)
    got = knn(q, ref, k)
    d2 = np.sum((q[:, None] - ref[None]) ** 2, axis=2)
    for i in range(len(q)):
        assert got[i].tolist() == np.lexsort((np.arange(30), d2[i]))[:k].tolist()
        assert np.all(np.diff(d2[i, got[i]]) >= 0)


def _union_find_clusters(pts, radius, min_pts):
    n = len(pts)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) <= radius:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted((g for g in groups.values() if len(g) >= min_pts), key=lambda g: g[0])


def test_cluster_examples():
    rng = np.random.default_rng(3)
    a = rng.normal(scale=0.05, size=(20, 3))
    pts = np.concatenate([a, a + [10, 0, 0]])
    assert len(euclidean_cluster(PointCloud(pts), 0.5)) == 2
    chain = np.stack([np.arange(30) * 0.4, np.zeros(30), np.zeros(30)], axis=1)
    assert len(euclidean_cluster(PointCloud(chain), 0.5)) == 1
    with pytest.raises(ValueError):
        euclidean_cluster(PointCloud(chain), 0.0)


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_cluster_union_find_oracle(seed, min_pts):
    pts = np.random.default_rng(seed).uniform(0, 3, size=(60, 3))
    got = [c.tolist() for c in euclidean_cluster_indices(pts, 0.45, min_pts)]
    assert got == _union_find_clusters(pts, 0.45, min_pts)
    flat = sum(got, [])
    assert len(flat) == len(set(flat))


def test_culling_predicate(template):
    body = forward_kinematics(template, Pose())
    c, idx = simulate_scan(body, SensorModel(view_dir=(-1.0, 0.0, 0.0)), 10_000,
                           surface_joint=template.surface_joint, return_index=True)
    radial = body.surface[idx] - body.joints[template.surface_joint[idx]]
    assert len(c) > 0
    assert np.all(radial[:, 0] >= 0)


def test_scan_deterministic(template):
    body = forward_kinematics(template, Pose())
    s = SensorModel(noise_sigma=0.01, dropout=0.2, seed=5)
    a = simulate_scan(body, s, 200, surface_joint=template.surface_joint)
    b = simulate_scan(body, s, 200, surface_joint=template.surface_joint)
    np.testing.assert_array_equal(a.points, b.points)
    assert len(a) == 200


def test_density_falls_quadratically(template):
    kept = {}
    for dist in (20.0, 40.0):
        body = forward_kinematics(template, Pose(trans=[dist, 0, 0]))
        n = [len(simulate_scan(body, SensorModel(seed=s, cull=False), 10_000,
                               surface_joint=template.surface_joint)) for s in range(50)]
        kept[dist] = np.mean(n)
    assert kept[40.0] / kept[20.0] == pytest.approx(0.25, rel=0.10)


def test_scan_requires_binding_and_positive_count(template):
    body = forward_kinematics(template, Pose())
    with pytest.raises(ValueError):
        simulate_scan(body, SensorModel(), 10)
    with pytest.raises(ValueError):
        simulate_scan(body, SensorModel(), 0, surface_joint=template.surface_joint)
    with pytest.raises(ValueError):
        SensorModel(dropout=1.0)


def test_occlude():
    c = PointCloud(np.random.default_rng(0).normal(size=(100, 3)))
    np.testing.assert_array_equal(occlude(c, 0.0).points, c.points)
    half = occlude(c, 0.5, seed=1)
    assert len(half) == 50
    assert all(any(np.array_equal(p, q) for q in c.points) for p in half.points)
    assert len(occlude(PointCloud(np.zeros((256, 3))), 0.9)) == 26
    np.testing.assert_array_equal(occlude(c, 0.3, 4).points, occlude(c, 0.3, 4).points)
    with pytest.raises(ValueError):
        occlude(c, 1.5)


def test_ply_and_csv_round_trip(tmp_path):
    pts = np.random.default_rng(6).normal(size=(25, 3))
    p = tmp_path / frame_filename(12)
    assert p.name == "frame_000012.ply"
    write_ply(p, PointCloud(pts))
    back = read_ply(p, view_id=2)
    np.testing.assert_array_equal(back.points, pts)
    assert back.frame == 12 and back.view_id == 2
    q = tmp_path / frame_filename(3, "csv")
    write_csv(q, PointCloud(pts))
    np.testing.assert_array_equal(read_csv(q).points, pts)
    bad = tmp_path / "bin.ply"
    bad.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ValueError):
        read_ply(bad)


def test_cloud_rejects_non_finite():
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 1.0]])
