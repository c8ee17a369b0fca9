"""Dataset synthesis and the end-to-end commands behind the CLI.

A dataset is a directory::

    manifest.json          file registry with content hashes
    config.json            the run configuration that produced it
    template.json          body template (surface, anchors)
    gt/poses.json          ground-truth pose per frame
    views/v0/frame_000000.ply ...
    labels/v0/frame_000000.csv ...   (cmd_label)
    fit/j2a.json, fit/anchors.json   (cmd_fit)
    scene/frame_000000.ply, scene/gt_tracks.csv   (when scene.persons > 0)

Every command is a pure function of the dataset bytes, the config and the
seed. Frame work runs on a thread pool but results are gathered in frame
order, so outputs do not depend on the worker count.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import __version__
from .body import NUM_BETAS, NUM_JOINTS, BodyTemplate, Pose, forward_kinematics, make_default_template, random_pose
from .cloud import PointCloud, SensorModel, frame_filename, occlude_indices, read_ply, simulate_scan, write_ply
from .config import RunConfig
from .labels import LabelSet, generate_labels
from .metrics import FIELDS, evaluate_sequence
from .multiview import ViewPrediction, fuse_sparkle
from .solver import SolverConfig, solve
from .sparkle import EstimatorConfig, J2AMapping, calibration, estimate_sparkle, fit_j2a, temporal_smooth
from .track import Tracker, compute_mot, read_tracks_csv, segment_persons, write_tracks_csv

MANIFEST_FORMAT = "sparkle-mocap/manifest"
POSES_FORMAT = "sparkle-mocap/poses"
SCENE_DT = 0.1


def derive_seed(seed: int, *tags) -> int:
    """Independent 63-bit stream seed for a (seed, tag...) pair."""
    key = json.dumps([int(seed)] + [str(t) for t in tags]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def view_ring(n: int) -> list:
    """n horizontal view directions evenly spaced around the vertical axis."""
    if n < 1:
        raise ValueError("need at least one view")
    a = 2 * np.pi * np.arange(n) / n
    dirs = np.stack([np.sin(a), np.zeros(n), -np.cos(a)], axis=1)
    dirs[np.abs(dirs) < 1e-15] = 0.0
    return dirs.tolist()


# -- manifest ----------------------------------------------------------------

@dataclass
class Manifest:
    root: Path
    frames: int = 0
    views: int = 0
    config_hash: str = ""
    tool_version: str = __version__
    files: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.root / "manifest.json"

    def register(self, *paths) -> None:
        for p in paths:
            rel = Path(p).resolve().relative_to(self.root.resolve()).as_posix()
            self.files[rel] = sha256_file(p)

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
            "frames": self.frames,
            "views": self.views,
            "files": dict(sorted(self.files.items())),
            "stages": dict(sorted(self.stages.items())),
        }

    def save(self) -> None:
        write_json(self.path, self.to_dict())

    @classmethod
    def load(cls, root) -> "Manifest":
        root = Path(root)
        p = root / "manifest.json"
        if not p.is_file():
            raise FileNotFoundError(f"{root}: no manifest.json (not a dataset)")
        d = json.loads(p.read_text())
        if d.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{p}: not a dataset manifest")
        m = cls(root, d["frames"], d["views"], d["config_hash"], d["tool_version"], d["files"], d.get("stages", {}))
        missing = [f for f in m.files if not (root / f).is_file()]
        if missing:
            raise FileNotFoundError(f"{root}: manifest lists missing files: {', '.join(missing[:5])}")
        return m

    def verify(self) -> list:
        """Files whose bytes no longer match the registered hash (or are gone)."""
        bad = []
        for rel, h in sorted(self.files.items()):
            f = self.root / rel
            if not f.is_file():
                bad.append({"file": rel, "problem": "missing"})
            elif sha256_file(f) != h:
                bad.append({"file": rel, "problem": "hash mismatch"})
        return bad


# -- motion synthesis --------------------------------------------------------

def _clip_norm(v: np.ndarray, max_norm: float) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v * np.minimum(1.0, max_norm / np.maximum(n, 1e-300))


def _random_rotvecs(rng, shape, max_angle: float) -> np.ndarray:
    axis = rng.normal(size=tuple(shape) + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    return axis * rng.uniform(0.0, max_angle, size=tuple(shape) + (1,))


def synthesize_motion(cfg: RunConfig) -> list:
    """Smooth random motion: per-joint axis-angle cubic splines through seeded
    keyframes, magnitudes clipped to ``max_angle``; the root wanders smoothly
    inside a square of half-width ``zone_half_extent`` on the ground plane."""
    seq = cfg.sequence
    rng = np.random.default_rng(derive_seed(cfg.seed, "motion"))
    n = seq.frames
    knots = seq.keyframe_every * np.arange(max(2, -(-(n - 1) // seq.keyframe_every) + 1))
    k = len(knots)
    key_theta = _random_rotvecs(rng, (k, NUM_JOINTS), seq.max_angle)
    key_trans = rng.uniform(-seq.zone_half_extent, seq.zone_half_extent, size=(k, 3))
    key_trans[:, 1] = 0.0
    beta = rng.normal(scale=1.0, size=NUM_BETAS) * seq.beta_sigma
    t = np.arange(n, dtype=float)
    theta = _clip_norm(CubicSpline(knots, key_theta, axis=0)(t), seq.max_angle)
    trans = np.clip(CubicSpline(knots, key_trans, axis=0)(t), -seq.zone_half_extent, seq.zone_half_extent)
    return [Pose(theta[i], beta, trans[i]) for i in range(n)]


def sensor_for(cfg: RunConfig, view: int, frame: int) -> SensorModel:
    s = cfg.sensor
    return SensorModel(tuple(cfg.views[view]), s.noise_sigma, s.dropout, s.density_ref_dist,
                       derive_seed(cfg.seed, "scan", view, frame), s.cull)


def synthesize_scene(cfg: RunConfig, template: BodyTemplate):
    """Walkers on parallel lanes inside the activity zone.

    Returns per-frame clouds and per-frame ground truth {id: root position}.
    Lanes are ``spacing`` apart along x and walkers bounce between the zone's
    z limits, so tracks never cross.
    """
    sc = cfg.scene
    rng = np.random.default_rng(derive_seed(cfg.seed, "scene"))
    lo, hi = np.asarray(sc.zone_min, float), np.asarray(sc.zone_max, float)
    center = 0.5 * (lo + hi)
    margin = 1.0
    zlo, zhi = lo[2] + margin, hi[2] - margin
    x = center[0] + (np.arange(sc.persons) - (sc.persons - 1) / 2.0) * sc.spacing
    z = rng.uniform(zlo, zhi, size=sc.persons)
    direction = rng.choice([-1.0, 1.0], size=sc.persons)
    clouds, gt = [], []
    for t in range(cfg.sequence.frames):
        pts, frame_gt = [], {}
        for i in range(sc.persons):
            pos = np.array([x[i], center[1], z[i]])
            body = forward_kinematics(template, Pose(trans=pos))
            sensor = SensorModel(tuple(cfg.views[0]), cfg.sensor.noise_sigma, 0.0, cfg.sensor.density_ref_dist,
                                 derive_seed(cfg.seed, "scene", i, t), cfg.sensor.cull)
            c = simulate_scan(body, sensor, sc.points_per_person, t, surface_joint=template.surface_joint)
            pts.append(c.points)
            frame_gt[i] = pos
        clouds.append(PointCloud(np.concatenate(pts) if pts else np.zeros((0, 3)), t))
        gt.append(frame_gt)
        step = sc.speed * SCENE_DT * direction
        z = z + step
        flip = (z > zhi) | (z < zlo)
        direction = np.where(flip, -direction, direction)
        z = np.clip(z, zlo, zhi)
    return clouds, gt


# -- dataset access ----------------------------------------------------------

def write_poses(path, poses) -> None:
    write_json(path, {"format": POSES_FORMAT, "poses": [p.to_dict() for p in poses]})


def read_poses(path) -> list:
    d = json.loads(Path(path).read_text())
    if d.get("format") != POSES_FORMAT:
        raise ValueError(f"{path}: not a pose list")
    return [Pose.from_dict(p) for p in d["poses"]]


@dataclass
class Dataset:
    root: Path
    manifest: Manifest
    config: RunConfig
    template: BodyTemplate
    gt: list

    @classmethod
    def open(cls, root) -> "Dataset":
        from .config import config_from_dict

        root = Path(root)
        m = Manifest.load(root)
        cfg = config_from_dict(json.loads((root / "config.json").read_text()))
        return cls(root, m, cfg, BodyTemplate.load(root / "template.json"), read_poses(root / "gt" / "poses.json"))

    @property
    def frames(self) -> int:
        return self.manifest.frames

    def cloud_path(self, view: int, t: int) -> Path:
        return self.root / "views" / f"v{view}" / frame_filename(t)

    def label_path(self, view: int, t: int) -> Path:
        return self.root / "labels" / f"v{view}" / frame_filename(t, "csv")

    def read_cloud(self, view: int, t: int):
        p = self.cloud_path(view, t)
        if not p.is_file():
            return None
        c = read_ply(p, view)
        c.frame = t
        return c

    def read_labels(self, view: int, t: int):
        p = self.label_path(view, t)
        return LabelSet.read_csv(p) if p.is_file() else None

    def oracle_labels(self, c: PointCloud, t: int, cfg: RunConfig) -> LabelSet:
        tm = self.template
        body = forward_kinematics(tm, self.gt[t])
        return generate_labels(c, body.surface, tm.surface_joint, body.anchors, tm.anchor_joint,
                               cfg.labels.k, cfg.labels.bg_dist, tm.tree.parent)


def _map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _registry(ds: Dataset, out: Path) -> Manifest:
    """Outputs inside the dataset go to its manifest; elsewhere they get their own."""
    try:
        out.resolve().relative_to(ds.root.resolve())
        return ds.manifest
    except ValueError:
        return Manifest(out, ds.manifest.frames, ds.manifest.views, ds.manifest.config_hash)


# -- commands ----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out, threads: int = 1) -> Manifest:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tm = make_default_template(cfg.template.surface_count, cfg.template.seed)
    poses = synthesize_motion(cfg)
    m = Manifest(out, len(poses), len(cfg.views), cfg.hash())
    write_json(out / "config.json", cfg.to_dict())
    tm.save(out / "template.json")
    write_poses(out / "gt" / "poses.json", poses)
    m.register(out / "config.json", out / "template.json", out / "gt" / "poses.json")
    for v in range(len(cfg.views)):
        (out / "views" / f"v{v}").mkdir(parents=True, exist_ok=True)

    def scan(t):
        body = forward_kinematics(tm, poses[t])
        paths = []
        for v in range(len(cfg.views)):
            c = simulate_scan(body, sensor_for(cfg, v, t), cfg.sensor.target_count, t, v,
                              surface_joint=tm.surface_joint)
            p = out / "views" / f"v{v}" / frame_filename(t)
            write_ply(p, c)
            paths.append(p)
        return paths

    for paths in _map(scan, range(len(poses)), threads):
        m.register(*paths)
    if cfg.scene.persons > 0:
        clouds, gt = synthesize_scene(cfg, tm)
        (out / "scene").mkdir(exist_ok=True)
        for t, c in enumerate(clouds):
            write_ply(out / "scene" / frame_filename(t), c)
            m.register(out / "scene" / frame_filename(t))
        write_tracks_csv(out / "scene" / "gt_tracks.csv", gt)
        m.register(out / "scene" / "gt_tracks.csv")
    m.stages["simulate"] = cfg.hash()
    m.save()
    return m


def cmd_label(root, cfg: RunConfig, threads: int = 1) -> Manifest:
    ds = Dataset.open(root)

    def label(t):
        paths = []
        for v in range(ds.manifest.views):
            c = ds.read_cloud(v, t)
            if c is None:
                continue
            p = ds.label_path(v, t)
            p.parent.mkdir(parents=True, exist_ok=True)
            ds.oracle_labels(c, t, cfg).write_csv(p)
            paths.append(p)
        return paths

    for paths in _map(label, range(ds.frames), threads):
        ds.manifest.register(*paths)
    ds.manifest.stages["label"] = cfg.hash()
    ds.manifest.save()
    return ds.manifest


def fit_mapping(tm: BodyTemplate, cfg: RunConfig) -> J2AMapping:
    """J2A from seeded random training poses (independent of the sequence)."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "fit"))
    joints, anchors = [], []
    for _ in range(cfg.fit.poses):
        p = random_pose(rng, cfg.fit.max_angle, root=True, trans_scale=1.0)
        p.beta = rng.normal(size=NUM_BETAS) * cfg.sequence.beta_sigma
        st = forward_kinematics(tm, p)
        joints.append(st.joints)
        anchors.append(st.anchors)
    return fit_j2a(joints, anchors, cfg.fit.ridge)


def cmd_fit(root, cfg: RunConfig) -> J2AMapping:
    ds = Dataset.open(root)
    m = fit_mapping(ds.template, cfg)
    tm = ds.template
    write_json(ds.root / "fit" / "j2a.json", m.to_dict())
    write_json(ds.root / "fit" / "anchors.json", {
        "anchor_vertex": tm.anchor_vertex.tolist(),
        "anchor_joint": tm.anchor_joint.tolist(),
        "a_tem": tm.a_tem.tolist(),
    })
    ds.manifest.register(ds.root / "fit" / "j2a.json", ds.root / "fit" / "anchors.json")
    ds.manifest.stages["fit"] = cfg.hash()
    ds.manifest.save()
    return m


def load_mapping(ds: Dataset, cfg: RunConfig) -> J2AMapping:
    p = ds.root / "fit" / "j2a.json"
    if p.is_file():
        return J2AMapping.from_dict(json.loads(p.read_text()))
    return fit_mapping(ds.template, cfg)


@dataclass
class Reconstruction:
    frames: list           # frame indices that were solved
    sparkles: list
    results: list
    failures: dict         # frame -> reason


def reconstruct(tm: BodyTemplate, m: J2AMapping, obs: list, cfg: RunConfig, refine: bool = True,
                threads: int = 1) -> Reconstruction:
    """Per-frame Sparkle estimation (fused over views), temporal smoothing, solving.

    ``obs[t]`` is a list of (view_id, cloud, labels) or None for a missing
    frame. With calibrated offsets, ``estimator.orient_passes`` extra rounds
    re-estimate every frame with the offsets rotated by the previous round's
    solved joint orientations.
    """
    ecfg = EstimatorConfig(gain=cfg.estimator.gain, trim=cfg.estimator.trim)
    scfg = SolverConfig(**dataclasses.asdict(cfg.solver))
    calib = calibration(tm) if cfg.estimator.calibrate else False
    failures = {t: "no observation" for t, o in enumerate(obs) if not o}
    frames = [t for t, o in enumerate(obs) if o]
    world = dict.fromkeys(frames)
    passes = 1 + (cfg.estimator.orient_passes if calib is not False else 0)
    sparkles, results = [], []
    for _ in range(passes):
        def estimate(t):
            preds, errors = [], []
            for v, c, lab in obs[t]:
                try:
                    preds.append(ViewPrediction(estimate_sparkle(c, lab, tm, m, ecfg, calib, world[t]), v))
                except ValueError as e:
                    errors.append(f"view {v}: {e}")
            if not preds:
                return None, "; ".join(errors)
            return (preds[0].sparkle if len(preds) == 1 else fuse_sparkle(preds)), None

        est = _map(estimate, frames, threads)
        for t, (s, err) in zip(frames, est):
            if s is None:
                failures[t] = err
        keep = [i for i, (s, _) in enumerate(est) if s is not None]
        frames = [frames[i] for i in keep]
        sparkles = [est[i][0] for i in keep]
        if cfg.estimator.lambda_s > 0 and len(sparkles) > 1:
            sparkles = temporal_smooth(sparkles, cfg.estimator.lambda_s, tm)
        results = _map(lambda s: solve(tm, s, scfg, refine), sparkles, threads)
        for t, r in zip(frames, results):
            world[t] = forward_kinematics(tm, r.pose).world_rots
    return Reconstruction(frames, sparkles, results, dict(sorted(failures.items())))


def _gather(ds: Dataset, cfg: RunConfig, views, oracle: bool, threads: int):
    """Per-frame observations for the given views plus per-frame problems."""
    def load(t):
        got, problems = [], []
        for v in views:
            c = ds.read_cloud(v, t)
            if c is None:
                problems.append(f"view {v}: cloud file missing")
                continue
            lab = ds.oracle_labels(c, t, cfg) if oracle else ds.read_labels(v, t)
            if lab is None:
                problems.append(f"view {v}: labels missing (run label or use oracle labels)")
            elif len(lab) != len(c):
                problems.append(f"view {v}: label count {len(lab)} does not match cloud size {len(c)}")
            else:
                got.append((v, c, lab))
        return got, problems

    loaded = _map(load, range(ds.frames), threads)
    obs = [g or None for g, _ in loaded]
    problems = {t: "; ".join(p) for t, (g, p) in enumerate(loaded) if p}
    return obs, problems


def _write_reconstruction(ds: Dataset, rec: Reconstruction, out: Path, problems: dict, stage: str,
                          cfg: RunConfig) -> dict:
    reg = _registry(ds, out)
    paths = []
    for t, s, r in zip(rec.frames, rec.sparkles, rec.results):
        p = out / "sparkles" / frame_filename(t, "json")
        write_json(p, s.to_dict())
        q = out / "results" / frame_filename(t, "json")
        write_json(q, r.to_dict())
        paths += [p, q]
    report = evaluate_sequence([r.pose for r in rec.results], [ds.gt[t] for t in rec.frames], ds.template)
    missing = {str(t): problems.get(t, rec.failures.get(t, "")) for t in sorted(set(problems) | set(rec.failures))}
    summary = {
        **report.to_dict(),
        "solved_frames": rec.frames,
        "missing": missing,
        "mean_initial_cost": float(np.mean([r.initial_cost for r in rec.results])) if rec.results else 0.0,
        "mean_final_cost": float(np.mean([r.final_cost for r in rec.results])) if rec.results else 0.0,
    }
    write_json(out / "report.json", summary)
    report.write_csv(out / "report.csv")
    paths += [out / "report.json", out / "report.csv"]
    reg.register(*paths)
    reg.stages[stage] = cfg.hash()
    reg.save()
    return summary


def cmd_solve(root, cfg: RunConfig, out=None, view: int = 0, oracle: bool = False, refine: bool = True,
              threads: int = 1) -> dict:
    ds = Dataset.open(root)
    if not 0 <= view < ds.manifest.views:
        raise ValueError(f"view {view} not in dataset (has {ds.manifest.views})")
    out = Path(out) if out is not None else ds.root / "solve"
    obs, problems = _gather(ds, cfg, [view], oracle, threads)
    rec = reconstruct(ds.template, load_mapping(ds, cfg), obs, cfg, refine, threads)
    return _write_reconstruction(ds, rec, out, problems, "solve", cfg)


def cmd_fuse(root, cfg: RunConfig, out=None, oracle: bool = False, refine: bool = True, threads: int = 1) -> dict:
    ds = Dataset.open(root)
    if ds.manifest.views < 2:
        raise ValueError("fuse needs a dataset with at least two views")
    out = Path(out) if out is not None else ds.root / "fuse"
    obs, problems = _gather(ds, cfg, range(ds.manifest.views), oracle, threads)
    rec = reconstruct(ds.template, load_mapping(ds, cfg), obs, cfg, refine, threads)
    return _write_reconstruction(ds, rec, out, problems, "fuse", cfg)


def cmd_track(root, cfg: RunConfig, out=None) -> dict:
    ds = Dataset.open(root)
    gt_path = ds.root / "scene" / "gt_tracks.csv"
    if not gt_path.is_file():
        raise FileNotFoundError(f"{ds.root}: no scene in dataset (simulate with scene.persons > 0)")
    out = Path(out) if out is not None else ds.root / "track"
    sc = cfg.scene
    tracker = Tracker(sc.gate, sc.max_miss)
    pred = []
    for t in range(ds.frames):
        c = read_ply(ds.root / "scene" / frame_filename(t))
        cents = [cen for _, cen in segment_persons(c, sc.zone_min, sc.zone_max, sc.radius, sc.min_pts)]
        assignment = tracker.step(cents)
        pred.append({tid: cents[di] for di, tid in assignment.items()})
    rep = compute_mot(read_tracks_csv(gt_path, ds.frames), pred, sc.match_dist)
    out.mkdir(parents=True, exist_ok=True)
    write_tracks_csv(out / "tracks.csv", pred)
    write_json(out / "mot.json", rep.to_dict())
    reg = _registry(ds, out)
    reg.register(out / "tracks.csv", out / "mot.json")
    reg.stages["track"] = cfg.hash()
    reg.save()
    return rep.to_dict()


def make_occluded_sibling(ds: Dataset, dest, ratio: float, seed: int) -> Manifest:
    """Copy of ``ds`` whose clouds (and labels, if any) lose ``ratio`` of their points."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    m = Manifest(dest, ds.manifest.frames, ds.manifest.views, ds.manifest.config_hash)
    for rel in ("config.json", "template.json", "gt/poses.json", "fit/j2a.json", "fit/anchors.json"):
        if (ds.root / rel).is_file():
            (dest / rel).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(ds.root / rel, dest / rel)
            m.register(dest / rel)
    for v in range(ds.manifest.views):
        for t in range(ds.frames):
            c = ds.read_cloud(v, t)
            if c is None:
                continue
            keep = occlude_indices(len(c), ratio, derive_seed(seed, "occlude", f"{ratio:.6f}", v, t))
            p = dest / "views" / f"v{v}" / frame_filename(t)
            p.parent.mkdir(parents=True, exist_ok=True)
            write_ply(p, c.subset(keep))
            m.register(p)
            lab = ds.read_labels(v, t)
            if lab is not None:
                q = dest / "labels" / f"v{v}" / frame_filename(t, "csv")
                q.parent.mkdir(parents=True, exist_ok=True)
                lab.subset(keep).write_csv(q)
                m.register(q)
    m.stages["occlude"] = f"{ratio:.6f}"
    m.save()
    return m


OCCLUSION_COLUMNS = ("ratio",) + FIELDS


def cmd_ablate_occlusion(root, cfg: RunConfig, out=None, oracle: bool = False, refine: bool = True,
                         threads: int = 1) -> list:
    """Solve occluded copies of the dataset at each ratio; one CSV row per ratio."""
    ds = Dataset.open(root)
    out = Path(out) if out is not None else ds.root / "ablate_occlusion"
    rows = []
    for r in sorted(cfg.occlusion_ratios):
        sib = out / f"ratio_{r:.2f}"
        make_occluded_sibling(ds, sib, r, cfg.seed)
        rep = cmd_solve(sib, cfg, oracle=oracle, refine=refine, threads=threads)
        rows.append([float(r)] + [rep[k] for k in FIELDS])
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(OCCLUSION_COLUMNS)] + [",".join(repr(float(x)) for x in row) for row in rows]
    (out / "occlusion.csv").write_text("\n".join(lines) + "\n")
    ds = Dataset.open(root)
    reg = _registry(ds, out)
    reg.register(out / "occlusion.csv")
    reg.stages["ablate_occlusion"] = cfg.hash()
    reg.save()
    return rows


def cmd_eval(root, results_dir=None) -> dict:
    """Re-score saved solve results against the ground truth."""
    ds = Dataset.open(root)
    results_dir = Path(results_dir) if results_dir is not None else ds.root / "solve"
    frames, preds = [], []
    for t in range(ds.frames):
        p = results_dir / "results" / frame_filename(t, "json")
        if p.is_file():
            frames.append(t)
            preds.append(Pose.from_dict(json.loads(p.read_text())["pose"]))
    if not frames:
        raise FileNotFoundError(f"{results_dir}: no per-frame results to evaluate")
    report = evaluate_sequence(preds, [ds.gt[t] for t in frames], ds.template)
    summary = {**report.to_dict(), "evaluated_frames": frames}
    write_json(results_dir / "eval.json", summary)
    report.write_csv(results_dir / "eval.csv")
    reg = _registry(ds, results_dir)
    reg.register(results_dir / "eval.json", results_dir / "eval.csv")
    reg.save()
    return summary


def verify(root) -> list:
    p = Path(root) / "manifest.json"
    if not p.is_file():
        raise FileNotFoundError(f"{root}: no manifest.json")
    d = json.loads(p.read_text())
    m = Manifest(Path(root), d["frames"], d["views"], d["config_hash"], d["tool_version"], d["files"])
    return m.verify()
