"""Joint + anchor representation and its geometric estimation from labeled clouds."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solveh_banded
from scipy.stats import trim_mean

from .body import NUM_ANCHORS, NUM_JOINTS, PARENTS, BodyTemplate
from .cloud import PointCloud
from .geom3 import procrustes_rotation
from .labels import JOINT_BG, LabelSet

SPARKLE_FORMAT = "sparkle-mocap/sparkle"
J2A_FORMAT = "sparkle-mocap/j2a"


@dataclass
class Sparkle:
    joints: np.ndarray
    anchors: np.ndarray
    trans: np.ndarray
    global_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    joint_conf: np.ndarray = field(default_factory=lambda: np.ones(NUM_JOINTS))
    anchor_conf: np.ndarray = field(default_factory=lambda: np.ones(NUM_ANCHORS))

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float).reshape(-1, 3)
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(-1, 3)
        self.trans = np.asarray(self.trans, dtype=float).reshape(3)
        self.global_rot = np.asarray(self.global_rot, dtype=float).reshape(3, 3)
        self.joint_conf = np.asarray(self.joint_conf, dtype=float).reshape(len(self.joints))
        self.anchor_conf = np.asarray(self.anchor_conf, dtype=float).reshape(len(self.anchors))
        for name in ("joints", "anchors", "trans", "global_rot"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"Sparkle.{name} contains non-finite values")
        for name in ("joint_conf", "anchor_conf"):
            v = getattr(self, name)
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"Sparkle.{name} must lie in [0, 1]")

    @classmethod
    def from_state(cls, state, trans=None) -> "Sparkle":
        """Exact, fully confident Sparkle of a posed body."""
        t = state.joints[0] if trans is None else trans
        return cls(state.joints.copy(), state.anchors.copy(), t, state.global_rot.copy())

    def to_dict(self) -> dict:
        return {
            "format": SPARKLE_FORMAT,
            "joints": self.joints.tolist(),
            "anchors": self.anchors.tolist(),
            "trans": self.trans.tolist(),
            "global_rot": self.global_rot.tolist(),
            "joint_conf": self.joint_conf.tolist(),
            "anchor_conf": self.anchor_conf.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sparkle":
        if d.get("format") != SPARKLE_FORMAT:
            raise ValueError("not a Sparkle document")
        return cls(d["joints"], d["anchors"], d["trans"], d["global_rot"], d["joint_conf"], d["anchor_conf"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Sparkle":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class J2AMapping:
    w: np.ndarray
    residual: float = 0.0
    frames: int = 0

    def to_dict(self) -> dict:
        return {"format": J2A_FORMAT, "w": self.w.tolist(), "residual": self.residual, "frames": self.frames}

    @classmethod
    def from_dict(cls, d: dict) -> "J2AMapping":
        if d.get("format") != J2A_FORMAT:
            raise ValueError("not a J2A mapping document")
        return cls(np.asarray(d["w"], dtype=float), float(d["residual"]), int(d["frames"]))


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    l2: float = 0.5
    l3: float = 1.0
    l4: float = 1.0
    l5: float = 0.5
    l6: float = 1.0
    l7: float = 0.5

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative")


@dataclass(frozen=True)
class EstimatorConfig:
    gain: float = 0.5
    trim: float = 0.2
    min_support: int = 3
    blend_full: int = 20
    n_ref: float = 10.0
    conf_scale: float = 0.1


def root_rotation(template: BodyTemplate, joints) -> np.ndarray:
    """Procrustes rotation taking the template's root-adjacent bones onto observed ones."""
    kids = template.tree.children(0)
    src = template.j_tem[kids] - template.j_tem[0]
    dst = np.asarray(joints)[kids] - np.asarray(joints)[0]
    return procrustes_rotation(src, dst)


# -- anchor selection and the joint->anchor prior ---------------------------

def select_anchors_pca(pose_samples: Sequence, k: int = NUM_ANCHORS, seed: int = 0) -> np.ndarray:
    """Pick k surface points whose trajectories best span the dominant motion.

    Rows of the centred (points x samples*3) trajectory matrix are embedded in
    its top-k left singular subspace; a greedy pivoted Gram-Schmidt then picks
    the rows of largest residual norm, which greedily maximizes the volume
    spanned by the selection.
    """
    if len(pose_samples) < 50:
        raise ValueError("select_anchors_pca needs at least 50 pose samples")
    surf = np.stack([np.asarray(getattr(s, "surface", s), dtype=float) for s in pose_samples], axis=1)
    n_pts = surf.shape[0]
    if n_pts < k:
        raise ValueError("fewer surface points than anchors requested")
    x = (surf - surf.mean(axis=1, keepdims=True)).reshape(n_pts, -1)
    u, _, _ = np.linalg.svd(x, full_matrices=False)
    resid = u[:, :k].copy()
    priority = np.random.default_rng(seed).permutation(n_pts)
    chosen: list[int] = []
    avail = np.ones(n_pts, dtype=bool)
    for _ in range(k):
        norms = np.where(avail, np.einsum("ij,ij->i", resid, resid), -1.0)
        top = norms.max()
        ties = np.nonzero(avail & (norms >= top - 1e-12 * max(top, 1e-300)))[0]
        p = int(ties[np.argmin(priority[ties])])
        chosen.append(p)
        avail[p] = False
        nrm = np.linalg.norm(resid[p])
        if nrm > 1e-12:
            q = resid[p] / nrm
            resid -= np.outer(resid @ q, q)
    return np.array(chosen, dtype=int)


def fit_j2a(joint_frames, anchor_frames, ridge: float = 1e-8, max_cond: float = 1e15) -> J2AMapping:
    """Least-squares W with A_f ~ W J_f over all frames (ridge on the Gram matrix)."""
    jf = np.asarray(joint_frames, dtype=float)
    af = np.asarray(anchor_frames, dtype=float)
    if jf.ndim != 3 or af.ndim != 3 or len(jf) != len(af):
        raise ValueError("joint and anchor frames must be aligned (F, K, 3) arrays")
    if len(jf) < jf.shape[1]:
        raise ValueError(f"need at least {jf.shape[1]} frames, got {len(jf)}")
    gram = np.einsum("fik,fjk->ij", jf, jf) + ridge * np.eye(jf.shape[1])
    cross = np.einsum("fak,fjk->aj", af, jf)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > max_cond:
        raise np.linalg.LinAlgError(f"J2A Gram matrix is rank deficient (condition number {cond:.3e})")
    w = np.linalg.solve(gram, cross.T).T
    res = float(np.sum((af - np.einsum("aj,fjk->fak", w, jf)) ** 2))
    return J2AMapping(w, res, len(jf))


def apply_j2a(m: J2AMapping, joints) -> np.ndarray:
    return m.w @ np.asarray(joints, dtype=float)


# -- geometric joint estimation ---------------------------------------------

def joint_surface_offsets(template: BodyTemplate) -> np.ndarray:
    """Mean (surface point - joint) per joint label on the template."""
    off = np.zeros((template.tree.n, 3))
    rel = template.surface - template.j_tem[template.surface_joint]
    for j in range(template.tree.n):
        m = template.surface_joint == j
        if m.any():
            off[j] = rel[m].mean(axis=0)
    return off


def anchor_surface_offsets(template: BodyTemplate) -> np.ndarray:
    """Mean (labeled surface point - anchor) per anchor on the template."""
    from .labels import point_anchor_labels

    lab = point_anchor_labels(PointCloud(template.surface), template.surface_joint, template.a_tem,
                              template.anchor_joint, template.tree.parent)
    off = np.zeros((NUM_ANCHORS, 3))
    for a in range(NUM_ANCHORS):
        m = (lab == a) & (template.surface_joint == template.anchor_joint[a])
        if m.any():
            off[a] = template.surface[m].mean(axis=0) - template.a_tem[a]
    return off


def estimate_joints_geometric(c: PointCloud, labels: LabelSet, template: BodyTemplate, offsets=None):
    """Label-centroid joints shifted by calibrated surface offsets.

    Returns ``(J_init, T_init, support)``. Joints with no labeled points take
    their parent's estimate plus the template bone vector.
    """
    jl = labels.joint_label
    fg = jl != JOINT_BG
    if len(c) == 0 or not fg.any():
        raise ValueError("no foreground points to estimate joints from")
    offsets = joint_surface_offsets(template) if offsets is None else np.asarray(offsets)
    n = template.tree.n
    support = np.bincount(jl[fg], minlength=n)[:n]
    t_init = c.points[fg].mean(axis=0)
    est = np.zeros((n, 3))
    for j in range(n):
        if support[j]:
            est[j] = c.points[jl == j].mean(axis=0) - offsets[j]
    bones = template.bone_vectors
    if support[0] == 0:
        # anchor an unsupported root on the best-supported joint, walking its chain
        ref = int(np.argmax(support))
        path = [ref]
        while path[-1] != 0:
            path.append(int(template.tree.parent[path[-1]]))
        est[0] = est[ref] - sum(bones[p] for p in path[:-1])
    for j in range(1, n):
        if support[j] == 0:
            est[j] = est[template.tree.parent[j]] + bones[j]
    return est, t_init, support


def _trimmed_mean(v: np.ndarray, trim: float) -> np.ndarray:
    return trim_mean(v, trim / 2.0, axis=0)


def refine_joints_offsets(c: PointCloud, labels: LabelSet, j_init, t_init, offsets=None,
                          cfg: EstimatorConfig = EstimatorConfig(), parent=PARENTS):
    """Per-joint residual update J_op = J_init + dJ_j, T_op = T_init + dJ_0.

    dJ_j is ``gain`` times the trimmed mean of the joint's points relative to
    the current joint (minus the calibrated surface offset). Sparse joints
    borrow the residuals of their parent and children.
    """
    j_init = np.asarray(j_init, dtype=float)
    t_init = np.asarray(t_init, dtype=float)
    n = len(j_init)
    offsets = np.zeros((n, 3)) if offsets is None else np.asarray(offsets, dtype=float)
    centered = c.points - t_init
    jc = j_init - t_init
    jl = labels.joint_label
    local = [centered[jl == j] - jc[j] - offsets[j] for j in range(n)]
    delta = np.zeros((n, 3))
    for j in range(n):
        pts = local[j]
        if len(pts) < cfg.min_support:
            nb = [int(q) for q in np.nonzero(parent == j)[0]]
            if parent[j] >= 0:
                nb.append(int(parent[j]))
            pts = np.concatenate([pts] + [local[q] for q in nb])
        if len(pts):
            delta[j] = cfg.gain * _trimmed_mean(pts, cfg.trim)
    return j_init + delta, t_init + delta[0]


# -- anchors -----------------------------------------------------------------

def estimate_anchors(j_op, m: J2AMapping, c: PointCloud, labels: LabelSet, offsets=None,
                     cfg: EstimatorConfig = EstimatorConfig(), anchor_joint=None) -> np.ndarray:
    """Blend the J2A prior with per-anchor label centroids (weight min(1, n/20)).

    With ``anchor_joint`` only points whose joint label matches the anchor's
    joint count as support; points borrowed through the empty-joint fallback
    lie on another rigid part and would drag the centroid with pose.
    """
    a = apply_j2a(m, j_op)
    al = labels.anchor_label
    for k in range(len(a)):
        own = al == k
        if anchor_joint is not None:
            own &= labels.joint_label == anchor_joint[k]
        pts = c.points[own]
        if len(pts) >= cfg.min_support:
            mu = min(1.0, len(pts) / cfg.blend_full)
            obs = pts.mean(axis=0) - (0.0 if offsets is None else offsets[k])
            a[k] = (1.0 - mu) * a[k] + mu * obs
    return a


def _support_confidence(points, label_arr, targets, n_ref, scale):
    conf = np.zeros(len(targets))
    for k in range(len(targets)):
        pts = points[label_arr == k]
        if len(pts):
            dbar = np.linalg.norm(pts - targets[k], axis=1).mean()
            conf[k] = min(1.0, len(pts) / n_ref) * np.exp(-dbar / scale)
    return conf


def anchor_confidence(c: PointCloud, labels: LabelSet, a_op, n_ref: float = 10.0, s: float = 0.1) -> np.ndarray:
    return _support_confidence(c.points, labels.anchor_label, np.asarray(a_op), n_ref, s)


def joint_confidence(c: PointCloud, labels: LabelSet, j_op, n_ref: float = 10.0, s: float = 0.1) -> np.ndarray:
    """Same declared form as the anchor confidence, over joint labels."""
    return _support_confidence(c.points, labels.joint_label, np.asarray(j_op), n_ref, s)


def calibration(template: BodyTemplate):
    """Per-joint and per-anchor surface offsets used to de-bias label centroids."""
    return joint_surface_offsets(template), anchor_surface_offsets(template)


def rotate_calibration(template: BodyTemplate, calib, world_rots):
    """Carry template-frame offsets into a posed frame given per-joint world rotations."""
    joff, aoff = calib
    g = np.asarray(world_rots, dtype=float)
    return (np.einsum("jik,jk->ji", g, joff),
            np.einsum("aik,ak->ai", g[template.anchor_joint], aoff))


def estimate_sparkle(c: PointCloud, labels: LabelSet, template: BodyTemplate, m: J2AMapping,
                     cfg: EstimatorConfig = EstimatorConfig(), calib=None, world_rots=None) -> Sparkle:
    """Full per-frame estimate: joints, refinement, anchors, confidences, root rotation.

    ``calib`` is the pair returned by :func:`calibration`; pass ``False`` to
    use raw label centroids. ``world_rots`` (24, 3, 3), typically from a
    previous solve of the same frame, rotates the offsets into the pose.
    """
    if calib is None:
        calib = calibration(template)
    if calib is False:
        joff, aoff = np.zeros((template.tree.n, 3)), None
    else:
        joff, aoff = calib
        if world_rots is not None:
            joff, aoff = rotate_calibration(template, (joff, aoff), world_rots)
    j_init, t_init, _ = estimate_joints_geometric(c, labels, template, joff)
    j_op, t_op = refine_joints_offsets(c, labels, j_init, t_init, joff, cfg, template.tree.parent)
    a_op = estimate_anchors(j_op, m, c, labels, aoff, cfg, template.anchor_joint)
    return Sparkle(
        j_op, a_op, t_op, root_rotation(template, j_op),
        joint_confidence(c, labels, j_op, cfg.n_ref, cfg.conf_scale),
        anchor_confidence(c, labels, a_op, cfg.n_ref, cfg.conf_scale),
    )


# -- temporal smoothing ------------------------------------------------------

def _second_difference_bands(n: int) -> np.ndarray:
    """Upper-band storage (3, n) of D^T D for the second-difference operator D."""
    d = np.zeros((max(n - 2, 0), n))
    for t in range(n - 2):
        d[t, t:t + 3] = (1.0, -2.0, 1.0)
    m = d.T @ d
    ab = np.zeros((3, n))
    for u in range(3):
        ab[2 - u, u:] = np.diagonal(m, u)
    return ab


def smooth_trajectory(x_obs, conf, lambda_s: float, floor: float = 0.05) -> np.ndarray:
    """argmin sum c_t |x_t - x_obs_t|^2 + lambda_s sum |x_{t+1} - 2 x_t + x_{t-1}|^2."""
    x_obs = np.asarray(x_obs, dtype=float)
    c = np.maximum(np.asarray(conf, dtype=float), floor)
    n = len(x_obs)
    if n < 3 or lambda_s == 0:
        return x_obs.copy()
    ab = lambda_s * _second_difference_bands(n)
    ab[2] += c
    return solveh_banded(ab, c[:, None] * x_obs)


def smoothing_objective(x, x_obs, conf, lambda_s: float, floor: float = 0.05) -> float:
    x = np.asarray(x, dtype=float)
    c = np.maximum(np.asarray(conf, dtype=float), floor)
    data = float(np.sum(c[:, None] * (x - x_obs) ** 2))
    acc = x[2:] - 2 * x[1:-1] + x[:-2]
    return data + lambda_s * float(np.sum(acc ** 2))


def temporal_smooth(seq: Sequence[Sparkle], lambda_s: float, template: BodyTemplate,
                    project_bones: bool = True) -> list[Sparkle]:
    """Smooth every keypoint trajectory, then restore template bone lengths."""
    if len(seq) <= 1:
        return [replace(s) for s in seq]
    joints = np.stack([s.joints for s in seq])
    anchors = np.stack([s.anchors for s in seq])
    jc = np.stack([s.joint_conf for s in seq])
    ac = np.stack([s.anchor_conf for s in seq])
    trans = np.stack([s.trans for s in seq])
    js = np.stack([smooth_trajectory(joints[:, k], jc[:, k], lambda_s) for k in range(joints.shape[1])], 1)
    as_ = np.stack([smooth_trajectory(anchors[:, k], ac[:, k], lambda_s) for k in range(anchors.shape[1])], 1)
    ts = smooth_trajectory(trans, jc.mean(axis=1), lambda_s)
    if project_bones:
        js, as_ = _project_bone_lengths(js, as_, template)
    return [
        Sparkle(js[t], as_[t], ts[t], root_rotation(template, js[t]), s.joint_conf, s.anchor_conf)
        for t, s in enumerate(seq)
    ]


def _project_bone_lengths(joints, anchors, template: BodyTemplate):
    """Place each child at template length along its smoothed bone direction;
    anchors follow their joint's displacement."""
    parent = template.tree.parent
    lengths = template.bone_lengths
    out = joints.copy()
    for j in range(1, template.tree.n):
        p = parent[j]
        d = joints[:, j] - joints[:, p]
        nrm = np.linalg.norm(d, axis=1, keepdims=True)
        unit = np.where(nrm > 1e-12, d / np.where(nrm > 1e-12, nrm, 1.0), template.bone_vectors[j] / lengths[j - 1])
        out[:, j] = out[:, p] + lengths[j - 1] * unit
    shift = out - joints
    return out, anchors + shift[:, template.anchor_joint]


# -- losses ------------------------------------------------------------------

def _mse(a, b) -> float:
    return float(np.mean((np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) ** 2))


def _cross_entropy(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        return 0.0
    p = s[np.arange(len(labels)), labels] / s.sum(axis=1)
    return float(-np.mean(np.log(p)))


def loss_pst(j_op, j_gt, label_scores, labels_gt, t_op, t_gt, w: LossWeights = LossWeights()) -> float:
    return w.l1 * _mse(j_op, j_gt) + w.l2 * _cross_entropy(label_scores, labels_gt) + w.l3 * _mse(t_op, t_gt)


def loss_sae(a_op, a_gt, anchor_scores, anchor_labels_gt, w: LossWeights = LossWeights()) -> float:
    return w.l4 * _mse(a_op, a_gt) + w.l5 * _cross_entropy(anchor_scores, anchor_labels_gt)


def loss_sss(theta_op, theta_gt, beta, beta_gt, w: LossWeights = LossWeights()) -> float:
    return w.l6 * _mse(theta_op, theta_gt) + w.l7 * _mse(beta, beta_gt)
