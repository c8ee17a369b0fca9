"""Synthetic 24-joint humanoid: kinematic tree, template, shape, forward kinematics.

The surface is a union of capsules sampled around the bones. Every surface
point is bound rigidly to its nearest template joint (no blend skinning).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geom3 import rotvec_to_matrix

NUM_JOINTS = 24
NUM_ANCHORS = 32
NUM_BETAS = 10
TEMPLATE_FORMAT = "sparkle-mocap/template"
TEMPLATE_VERSION = 1

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)
PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
)

# T-pose joint positions, pelvis at origin; +x is the body's left, +y up, +z forward.
_J_TEM = np.array([
    [0.000, 0.000, 0.000],
    [0.060, -0.090, 0.000],
    [-0.060, -0.090, 0.000],
    [0.000, 0.110, -0.010],
    [0.100, -0.470, 0.005],
    [-0.100, -0.470, 0.005],
    [0.000, 0.240, 0.000],
    [0.090, -0.880, -0.040],
    [-0.090, -0.880, -0.040],
    [0.000, 0.300, 0.010],
    [0.110, -0.940, 0.080],
    [-0.110, -0.940, 0.080],
    [0.000, 0.510, -0.010],
    [0.080, 0.420, 0.000],
    [-0.080, 0.420, 0.000],
    [0.000, 0.580, 0.040],
    [0.170, 0.450, -0.010],
    [-0.170, 0.450, -0.010],
    [0.430, 0.450, -0.030],
    [-0.430, 0.450, -0.030],
    [0.680, 0.450, -0.030],
    [-0.680, 0.450, -0.030],
    [0.760, 0.450, -0.040],
    [-0.760, 0.450, -0.040],
])

# Capsule radius of the bone ending at each joint (index = child joint).
_BONE_RADIUS = {
    1: 0.085, 2: 0.085, 3: 0.120, 4: 0.075, 5: 0.075, 6: 0.125, 7: 0.055, 8: 0.055,
    9: 0.125, 10: 0.045, 11: 0.045, 12: 0.090, 13: 0.060, 14: 0.060, 15: 0.050,
    16: 0.055, 17: 0.055, 18: 0.050, 19: 0.050, 20: 0.040, 21: 0.040, 22: 0.035, 23: 0.035,
}
# Extra end segments for leaves: (joint, end offset, radius).
_END_SEGMENTS = (
    (10, (0.0, 0.0, 0.08), 0.040),
    (11, (0.0, 0.0, 0.08), 0.040),
    (15, (0.0, 0.12, 0.0), 0.095),
    (22, (0.08, 0.0, 0.0), 0.030),
    (23, (-0.08, 0.0, 0.0), 0.030),
)

SHAPE_GROUP_NAMES = (
    "torso", "neck_head", "left_upper_arm", "right_upper_arm", "left_forearm_hand",
    "right_forearm_hand", "left_thigh", "right_thigh", "left_shin_foot", "right_shin_foot",
)
# Shape group of the bone ending at each joint; the root has no bone.
SHAPE_GROUP_OF_JOINT = np.array(
    [-1, 0, 0, 0, 6, 7, 0, 8, 9, 0, 8, 9, 1, 0, 0, 1, 0, 0, 2, 3, 4, 5, 4, 5]
)


@dataclass(frozen=True)
class KinematicTree:
    parent: np.ndarray = field(default_factory=lambda: PARENTS.copy())
    names: tuple = JOINT_NAMES

    def __post_init__(self):
        p = self.parent
        if len(p) != len(self.names):
            raise ValueError("parent and names lengths differ")
        if p[0] != -1 or np.count_nonzero(p < 0) != 1:
            raise ValueError("joint 0 must be the unique root")
        if np.any(p[1:] >= np.arange(1, len(p))):
            raise ValueError("parents must precede children")

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def bone_of_joint(self) -> np.ndarray:
        """Bone index for each joint; -1 for the root. Bone b ends at joint b+1."""
        return np.arange(self.n) - 1

    def children(self, j: int) -> list[int]:
        return [int(c) for c in np.nonzero(self.parent == j)[0]]

    def neighbors(self, j: int) -> list[int]:
        out = self.children(j)
        if self.parent[j] >= 0:
            out.insert(0, int(self.parent[j]))
        return out


SMPL_TREE = KinematicTree()


@dataclass(frozen=True)
class BodyTemplate:
    j_tem: np.ndarray
    surface: np.ndarray
    surface_joint: np.ndarray
    anchor_vertex: np.ndarray
    tree: KinematicTree = SMPL_TREE

    @property
    def a_tem(self) -> np.ndarray:
        return self.surface[self.anchor_vertex]

    @property
    def anchor_joint(self) -> np.ndarray:
        return self.surface_joint[self.anchor_vertex]

    @property
    def bone_vectors(self) -> np.ndarray:
        """(24, 3) vectors parent->joint; row 0 is the root position."""
        v = self.j_tem.copy()
        v[1:] -= self.j_tem[self.tree.parent[1:]]
        return v

    @property
    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.bone_vectors[1:], axis=1)

    def with_anchors(self, anchor_vertex) -> "BodyTemplate":
        return replace(self, anchor_vertex=np.asarray(anchor_vertex, dtype=int))

    def to_dict(self) -> dict:
        return {
            "format": TEMPLATE_FORMAT,
            "version": TEMPLATE_VERSION,
            "parent": self.tree.parent.tolist(),
            "names": list(self.tree.names),
            "j_tem": self.j_tem.tolist(),
            "a_tem": self.a_tem.tolist(),
            "surface": self.surface.tolist(),
            "surface_joint": self.surface_joint.tolist(),
            "anchor_joint": self.anchor_joint.tolist(),
            "anchor_vertex": self.anchor_vertex.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BodyTemplate":
        if d.get("format") != TEMPLATE_FORMAT or d.get("version") != TEMPLATE_VERSION:
            raise ValueError(f"unsupported template document {d.get('format')!r} v{d.get('version')!r}")
        tree = KinematicTree(np.asarray(d["parent"], dtype=int), tuple(d["names"]))
        t = cls(
            j_tem=np.asarray(d["j_tem"], dtype=float),
            surface=np.asarray(d["surface"], dtype=float),
            surface_joint=np.asarray(d["surface_joint"], dtype=int),
            anchor_vertex=np.asarray(d["anchor_vertex"], dtype=int),
            tree=tree,
        )
        if not np.array_equal(t.anchor_joint, np.asarray(d["anchor_joint"], dtype=int)):
            raise ValueError("anchor_joint inconsistent with surface_joint[anchor_vertex]")
        return t

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "BodyTemplate":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Pose:
    theta: np.ndarray = field(default_factory=lambda: np.zeros((NUM_JOINTS, 3)))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(NUM_BETAS))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(NUM_JOINTS, 3)
        self.beta = np.asarray(self.beta, dtype=float).reshape(NUM_BETAS)
        self.trans = np.asarray(self.trans, dtype=float).reshape(3)

    def validate(self) -> "Pose":
        if np.any(np.linalg.norm(self.theta, axis=1) >= np.pi + 1e-6):
            raise ValueError("axis-angle magnitude must be below pi")
        check_beta(self.beta)
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.trans))):
            raise ValueError("pose contains non-finite values")
        return self

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta.ravel(), self.beta, self.trans])

    @classmethod
    def from_vector(cls, x) -> "Pose":
        x = np.asarray(x, dtype=float)
        return cls(x[:72], x[72:82], x[82:85])

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "beta": self.beta.tolist(), "trans": self.trans.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["theta"], d["beta"], d["trans"])


@dataclass
class BodyState:
    joints: np.ndarray
    anchors: np.ndarray
    surface: np.ndarray
    global_rot: np.ndarray
    world_rots: np.ndarray


def check_beta(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (NUM_BETAS,):
        raise ValueError(f"beta must have {NUM_BETAS} entries")
    if np.any(np.abs(beta) > 3.0) or not np.all(np.isfinite(beta)):
        raise ValueError("beta components must lie in [-3, 3]")
    return beta


def _segments(j_tem):
    segs = [(j_tem[PARENTS[j]], j_tem[j], r) for j, r in _BONE_RADIUS.items()]
    segs += [(j_tem[j], j_tem[j] + np.array(off), r) for j, off, r in _END_SEGMENTS]
    return segs


def _sample_capsule(rng, a, b, r, n):
    axis = b - a
    length = np.linalg.norm(axis)
    u = axis / length
    p = np.cross(u, [1.0, 0.0, 0.0])
    if np.linalg.norm(p) < 1e-6:
        p = np.cross(u, [0.0, 1.0, 0.0])
    p /= np.linalg.norm(p)
    q = np.cross(u, p)
    area_cyl = 2 * np.pi * r * length
    area_caps = 4 * np.pi * r * r
    on_cyl = rng.random(n) < area_cyl / (area_cyl + area_caps)
    phi = rng.random(n) * 2 * np.pi
    radial = np.cos(phi)[:, None] * p + np.sin(phi)[:, None] * q
    t = rng.random(n) * length
    out = a + t[:, None] * u + r * radial
    # caps: uniform directions on the sphere, hemisphere chooses the end
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    along = d @ u
    cap = np.where((along >= 0)[:, None], b, a) + r * d
    return np.where(on_cyl[:, None], out, cap)


def _dist_to_segment(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def _sample_surface(j_tem, count, rng):
    segs = _segments(j_tem)
    areas = np.array([2 * np.pi * r * np.linalg.norm(b - a) + 4 * np.pi * r * r for a, b, r in segs])
    chunks = []
    have = 0
    while have < count:
        n_each = rng.multinomial(count * 3, areas / areas.sum())
        pts = np.concatenate([_sample_capsule(rng, a, b, r, k) for (a, b, r), k in zip(segs, n_each)])
        pts = pts[rng.permutation(len(pts))]
        inside = np.zeros(len(pts), dtype=bool)
        for a, b, r in segs:
            inside |= _dist_to_segment(pts, a, b) < r - 1e-9
        pts = pts[~inside]
        chunks.append(pts)
        have += len(pts)
    return np.concatenate(chunks)[:count]


def random_pose(rng, max_angle: float = 0.8, root: bool = False, trans_scale: float = 0.0) -> Pose:
    axes = rng.normal(size=(NUM_JOINTS, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    theta = axes * rng.uniform(-max_angle, max_angle, size=(NUM_JOINTS, 1))
    if not root:
        theta[0] = 0.0
    return Pose(theta, np.zeros(NUM_BETAS), rng.normal(size=3) * trans_scale)


def make_default_template(surface_count: int = 1024, seed: int = 0, pose_samples: int = 64) -> BodyTemplate:
    """Deterministic capsule humanoid with PCA-selected anchors."""
    from .labels import vertex_joint_match
    from .sparkle import select_anchors_pca

    if surface_count < 256:
        raise ValueError("surface_count must be at least 256")
    rng = np.random.default_rng(seed)
    surface = _sample_surface(_J_TEM, surface_count, rng)
    surface_joint = vertex_joint_match(surface, _J_TEM)
    base = BodyTemplate(_J_TEM.copy(), surface, surface_joint, np.arange(NUM_ANCHORS))
    states = [forward_kinematics(base, random_pose(rng)) for _ in range(pose_samples)]
    anchors = select_anchors_pca(states, NUM_ANCHORS, seed=seed)
    return base.with_anchors(anchors)


def apply_shape(t: BodyTemplate, beta) -> BodyTemplate:
    """Scale each bone group by exp(0.1 * beta_g); surface moves with its joint."""
    beta = check_beta(beta)
    if not np.any(beta):
        return t
    scale = np.ones(t.tree.n)
    scale[1:] = np.exp(0.1 * beta[SHAPE_GROUP_OF_JOINT[1:]])
    bones = t.bone_vectors * scale[:, None]
    joints = np.empty_like(t.j_tem)
    joints[0] = t.j_tem[0]
    for j in range(1, t.tree.n):
        joints[j] = joints[t.tree.parent[j]] + bones[j]
    shift = joints - t.j_tem
    return replace(t, j_tem=joints, surface=t.surface + shift[t.surface_joint])


def world_rotations(parent, local):
    """Accumulate local rotations (..., 24, 3, 3) along the tree."""
    g = np.empty_like(local)
    g[..., 0, :, :] = local[..., 0, :, :]
    for j in range(1, len(parent)):
        g[..., j, :, :] = g[..., parent[j], :, :] @ local[..., j, :, :]
    return g


def forward_kinematics(t: BodyTemplate, p: Pose) -> BodyState:
    shaped = apply_shape(t, p.beta)
    parent = t.tree.parent
    g = world_rotations(parent, rotvec_to_matrix(p.theta))
    bones = shaped.bone_vectors
    joints = np.empty_like(shaped.j_tem)
    joints[0] = shaped.j_tem[0] + p.trans
    for j in range(1, t.tree.n):
        joints[j] = joints[parent[j]] + g[parent[j]] @ bones[j]
    sj = t.surface_joint
    local = shaped.surface - shaped.j_tem[sj]
    surface = joints[sj] + np.einsum("nij,nj->ni", g[sj], local)
    return BodyState(joints, surface[t.anchor_vertex].copy(), surface, g[0].copy(), g)


def fk_keypoints_batch(t: BodyTemplate, theta, beta, trans):
    """Joints and anchors for a batch of parameter sets.

    theta (B, 24, 3), beta (B, 10), trans (B, 3) -> joints (B, 24, 3), anchors (B, 32, 3).
    Skips surface evaluation; used by the solver's finite-difference Jacobian.
    """
    parent = t.tree.parent
    theta = np.asarray(theta, dtype=float)
    b = theta.shape[0]
    g = world_rotations(parent, rotvec_to_matrix(theta))
    scale = np.ones((b, t.tree.n))
    scale[:, 1:] = np.exp(0.1 * np.asarray(beta)[:, SHAPE_GROUP_OF_JOINT[1:]])
    bones = t.bone_vectors[None] * scale[..., None]
    joints = np.empty((b, t.tree.n, 3))
    joints[:, 0] = t.j_tem[0] + np.asarray(trans)
    for j in range(1, t.tree.n):
        joints[:, j] = joints[:, parent[j]] + np.einsum("bik,bk->bi", g[:, parent[j]], bones[:, j])
    aj = t.anchor_joint
    off = t.a_tem - t.j_tem[aj]
    anchors = joints[:, aj] + np.einsum("baik,ak->bai", g[:, aj], off)
    return joints, anchors
