import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparkle_mocap.body import Pose, forward_kinematics
from sparkle_mocap.cloud import PointCloud
from sparkle_mocap.track import (
    Track, Tracker, associate, compute_mot, read_tracks_csv, segment_persons, write_tracks_csv,
)


def _bodies(template, positions):
    return PointCloud(np.concatenate([forward_kinematics(template, Pose(trans=p)).surface for p in positions]))


# segmentation ------------------------------------------------------------------

def test_two_bodies_two_clusters(template):
    c = _bodies(template, [[0, 0, 0], [5, 0, 0]])
    out = segment_persons(c, [-10, -10, -10], [10, 10, 10], 0.4, 30)
    assert len(out) == 2
    np.testing.assert_allclose(out[0][1], c.points[: len(template.surface)].mean(axis=0))


def test_body_outside_zone_excluded(template):
    c = _bodies(template, [[0, 0, 0], [50, 0, 0]])
    assert len(segment_persons(c, [-10, -10, -10], [10, 10, 10])) == 1
    with pytest.raises(ValueError):
        segment_persons(c, [0, 0, 0], [0, 1, 1])


def test_football_scale_scene(template):
    rng = np.random.default_rng(0)
    xs, zs = np.meshgrid(np.linspace(-25, 25, 5), np.linspace(-45, 45, 5))
    pos = np.stack([xs.ravel(), np.zeros(25), zs.ravel()], axis=1) + rng.uniform(-1, 1, (25, 3)) * [1, 0, 1]
    c = _bodies(template, pos)
    out = segment_persons(c, [-30, -5, -50], [30, 5, 50])
    assert len(out) == 25


# association ---------------------------------------------------------------------

def test_stationary_targets_keep_ids():
    tr = Tracker()
    dets = np.array([[0, 0, 0], [3, 0, 0], [0, 0, 3]], float)
    first = tr.step(dets)
    for _ in range(5):
        assert tr.step(dets + np.random.default_rng(0).normal(scale=0.01, size=dets.shape)) == first


def test_far_detection_spawns_new_id():
    tracks = [Track(0, [np.zeros(3)])]
    res = associate(tracks, [[10.0, 0, 0]], gate=1.0)
    assert res.assignment == {0: 1} and res.next_id == 2
    with pytest.raises(ValueError):
        associate(tracks, [[0, 0, 0]], gate=0.0)


def test_missed_tracks_terminate():
    tr = Tracker(gate=1.0, max_miss=2)
    tr.step([[0, 0, 0]])
    for _ in range(2):
        tr.step(np.zeros((0, 3)))
    assert [t.id for t in tr.tracks] == [0]
    tr.step(np.zeros((0, 3)))
    assert tr.tracks == []


def _brute_assign(prev, dets, gate):
    """Exhaustive search: most gated matches, then least total distance."""
    best = None
    n, m = len(prev), len(dets)
    for r in range(min(n, m), -1, -1):
        for rows in itertools.combinations(range(n), r):
            for cols in itertools.permutations(range(m), r):
                d = [np.linalg.norm(prev[i] - dets[j]) for i, j in zip(rows, cols)]
                if any(x > gate for x in d):
                    continue
                key = (-r, sum(d))
                if best is None or key < best[0]:
                    best = (key, dict(zip(cols, rows)))
        if best is not None:
            return best[1]
    return {}


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(0, 6))
def test_association_matches_permutation_oracle(seed, n, m):
    rng = np.random.default_rng(seed)
    prev = rng.uniform(0, 4, (n, 3))
    dets = rng.uniform(0, 4, (m, 3))
    tracks = [Track(i, [p]) for i, p in enumerate(prev)]
    res = associate(tracks, dets, gate=1.5)
    want = _brute_assign(prev, dets, 1.5)
    got = {d: t for d, t in res.assignment.items() if t < n}
    assert got == want


@given(st.integers(0, 2**31))
def test_association_ignores_detection_order(seed):
    rng = np.random.default_rng(seed)
    prev = rng.uniform(0, 10, (5, 3))
    dets = prev + rng.normal(scale=0.1, size=prev.shape)
    tracks = [Track(i, [p]) for i, p in enumerate(prev)]
    perm = rng.permutation(5)
    a = associate(tracks, dets).assignment
    b = associate(tracks, dets[perm]).assignment
    assert {k: a[perm[k]] for k in range(5)} == b


# MOT metrics ---------------------------------------------------------------------

def test_perfect_tracking():
    frames = [{0: [0, 0, t], 1: [5, 0, t]} for t in range(10)]
    rep = compute_mot(frames, frames)
    assert (rep.mota, rep.idf1, rep.id_switches) == (1.0, 1.0, 0)


def test_missing_frames():
    gt = [{0: [0, 0, 0.1 * t]} for t in range(10)]
    pred = [{7: [0, 0, 0.1 * t]} if t not in (3, 6) else {} for t in range(10)]
    rep = compute_mot(gt, pred)
    assert rep.fn == 2 and rep.fp == 0 and rep.id_switches == 0
    assert rep.mota == pytest.approx(0.8, abs=1e-15)


def test_id_swap():
    gt = [{0: [0, 0, 0], 1: [5, 0, 0]} for _ in range(10)]
    pred = [{1: [0, 0, 0], 2: [5, 0, 0]} if t < 5 else {2: [0, 0, 0], 1: [5, 0, 0]} for t in range(10)]
    rep = compute_mot(gt, pred)
    assert rep.id_switches == 2 and rep.fp == 0 and rep.fn == 0
    assert rep.mota == pytest.approx(0.9, abs=1e-15)
    assert rep.idf1 == pytest.approx(0.5)


def _fuzz_frames(rng, frames=8):
    gt, pred = [], []
    for _ in range(frames):
        g = {i: rng.uniform(0, 3, 3) for i in range(rng.integers(0, 5))}
        p = {}
        for i, x in g.items():
            if rng.uniform() < 0.8:
                p[int(rng.integers(0, 6))] = x + rng.normal(scale=0.2, size=3)
        for _ in range(rng.integers(0, 2)):
            p[int(rng.integers(6, 9))] = rng.uniform(0, 3, 3)
        gt.append(g)
        pred.append(p)
    return gt, pred


def _oracle_mot(gt, pred, dist):
    fp = fn = ids = total = 0
    last = {}
    for g, p in zip(gt, pred):
        gids, pids = sorted(g), sorted(p)
        total += len(gids)
        match = _brute_assign(np.array([g[i] for i in gids]).reshape(-1, 3),
                              np.array([p[i] for i in pids]).reshape(-1, 3), dist)
        for pj, gi in match.items():
            gid, pid = gids[gi], pids[pj]
            if gid in last and last[gid] != pid:
                ids += 1
            last[gid] = pid
        fn += len(gids) - len(match)
        fp += len(pids) - len(match)
    return fp, fn, ids, total


@settings(max_examples=60)
@given(st.integers(0, 2**31))
def test_mot_matches_brute_force_and_identity(seed):
    gt, pred = _fuzz_frames(np.random.default_rng(seed))
    rep = compute_mot(gt, pred)
    assert (rep.fp, rep.fn, rep.id_switches, rep.gt_total) == _oracle_mot(gt, pred, 0.5)
    if rep.gt_total:
        assert rep.mota == 1.0 - (rep.fp + rep.fn + rep.id_switches) / rep.gt_total
    assert 0.0 <= rep.idf1 <= 1.0


def test_tracks_csv_round_trip(tmp_path):
    frames = [{0: np.array([0.1, 0.2, 0.3])}, {}, {4: np.array([1.0, 2.0, 3.0]), 2: np.zeros(3)}]
    write_tracks_csv(tmp_path / "t.csv", frames)
    back = read_tracks_csv(tmp_path / "t.csv", 3)
    assert [sorted(f) for f in back] == [[0], [], [2, 4]]
    np.testing.assert_array_equal(back[2][4], frames[2][4])
    with pytest.raises(ValueError):
        compute_mot(frames, frames[:1])
