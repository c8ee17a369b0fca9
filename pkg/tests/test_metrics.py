import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparkle_mocap.body import Pose, random_pose
from sparkle_mocap.metrics import FIELDS, EvalReport, angle_error, evaluate_sequence, mpjpe


def test_mpjpe_examples():
    gt = np.random.default_rng(0).normal(size=(24, 3))
    assert mpjpe(gt, gt) == 0.0
    assert mpjpe(gt + [0.1, 0, 0], gt) == pytest.approx(100.0)
    assert mpjpe(gt + [0.1, 0, 0], gt, "local") == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        mpjpe(gt, gt[:5])
    with pytest.raises(ValueError):
        mpjpe(gt, gt, "procrustes")


@given(st.integers(0, 2**31))
def test_mpjpe_oracle_and_local_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 30, 3))
    want = sum(np.sqrt(sum((a[i, k] - b[i, k]) ** 2 for k in range(3))) for i in range(30)) / 30 * 1000
    assert mpjpe(a, b) == pytest.approx(want, rel=1e-12)
    u, v = rng.normal(size=(2, 3))
    assert mpjpe(a + u, b + v, "local") == pytest.approx(mpjpe(a, b, "local"), rel=1e-9, abs=1e-9)
    assert mpjpe(a, b) >= 0


def test_angle_error_examples():
    t = random_pose(np.random.default_rng(1), 1.0).theta
    assert angle_error(t, t) == pytest.approx(0.0, abs=1e-6)
    a, b = np.zeros((24, 3)), np.zeros((24, 3))
    b[7] = [0, np.pi / 2, 0]
    assert angle_error(a, b) == pytest.approx(3.75, abs=1e-9)
    u = random_pose(np.random.default_rng(2), 1.0).theta
    assert angle_error(t, u) == pytest.approx(angle_error(u, t), rel=1e-9)


def test_sequence_examples(template):
    rng = np.random.default_rng(3)
    gts = [random_pose(rng, 0.8, root=True, trans_scale=0.5) for _ in range(4)]
    rep = evaluate_sequence(gts, gts, template)
    assert all(v == pytest.approx(0.0, abs=1e-6) for v in rep.summary().values())
    moved = [Pose(g.theta, g.beta, g.trans + [0.0, 0.05, 0.0]) for g in gts]
    rep = evaluate_sequence(moved, gts, template)
    assert rep.j_err_g == pytest.approx(50.0) and rep.v_err_g == pytest.approx(50.0)
    assert rep.j_err_l == pytest.approx(0.0, abs=1e-9) and rep.v_err_l == pytest.approx(0.0, abs=1e-9)
    noisy = [random_pose(rng, 0.8, root=True, trans_scale=0.5) for _ in range(4)]
    rep = evaluate_sequence(noisy, gts, template)
    for k in FIELDS:
        assert getattr(rep, k) == pytest.approx(np.mean(rep.per_frame[k]), rel=1e-12)
        assert len(rep.per_frame[k]) == 4
    with pytest.raises(ValueError):
        evaluate_sequence(gts[:2], gts, template)


def test_report_outputs(tmp_path):
    rep = EvalReport.from_series({k: [1.0, 3.0] for k in FIELDS})
    assert rep.j_err_g == 2.0
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("frame,") and lines[-1].startswith("mean,") and len(lines) == 4
