"""Pose solver: per-joint swing-twist initialization, then damped Gauss-Newton refinement."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .body import NUM_BETAS, NUM_JOINTS, BodyTemplate, Pose, fk_keypoints_batch
from .geom3 import DEFAULT_EPS, matrix_to_rotvec, procrustes_rotation, solve_bone_rotation
from .sparkle import Sparkle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 50
    damping_init: float = 1e-3
    tol_cost: float = 1e-10
    fd_step: float = 1e-5
    joint_weight: float = 1.0
    anchor_weight: float = 0.5
    beta_frozen: bool = False
    beta_freeze_conf: float = 0.2
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        for k in ("damping_init", "tol_cost", "fd_step", "joint_weight", "anchor_weight", "eps"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")


@dataclass
class SolveResult:
    pose: Pose
    per_bone: list
    init_pose: Pose
    final_cost: float
    iterations: int
    degenerate_bones: list
    initial_cost: float = 0.0
    cost_history: list = field(default_factory=list)
    beta_frozen: bool = False

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "init_pose": self.init_pose.to_dict(),
            "final_cost": self.final_cost,
            "initial_cost": self.initial_cost,
            "iterations": self.iterations,
            "beta_frozen": self.beta_frozen,
            "degenerate_bones": list(self.degenerate_bones),
            "per_bone": [None if b is None else b.to_dict() for b in self.per_bone],
            "cost_history": list(self.cost_history),
        }


# -- geometric initialization ------------------------------------------------

def _joint_references(template: BodyTemplate, j: int):
    """Primary direction source and twist references for joint j.

    Returns (primary, refs) where each entry is ('joint', idx) or ('anchor', idx).
    Non-leaf joints use their first child bone; leaves use their first anchor.
    """
    kids = template.tree.children(j)
    anchors = [int(a) for a in np.nonzero(template.anchor_joint == j)[0]]
    refs = [("joint", c) for c in kids] + [("anchor", a) for a in anchors]
    if not refs:
        return None, []
    return refs[0], refs[1:]


def observable_dofs(template: BodyTemplate, eps: float = 1e-6):
    """Per joint: (swing observable, twist observable) under exact anchor evidence."""
    out = []
    for j in range(template.tree.n):
        if j == 0:
            out.append((True, True))
            continue
        prim, refs = _joint_references(template, j)
        if prim is None:
            out.append((False, False))
            continue
        u = _template_vec(template, j, prim)
        u = u / np.linalg.norm(u)
        tw = any(np.linalg.norm(_template_vec(template, j, r) - (_template_vec(template, j, r) @ u) * u) > eps
                 for r in refs)
        out.append((True, tw))
    return out


def _template_vec(template, j, ref):
    kind, i = ref
    src = template.j_tem[i] if kind == "joint" else template.a_tem[i]
    return src - template.j_tem[j]


def init_pose_swing_twist(template: BodyTemplate, s: Sparkle, eps: float = DEFAULT_EPS, conf_min: float = 0.0):
    """Closed-form pose from a Sparkle.

    The root rotation is the Procrustes fit of the root-adjacent bones. Every
    other joint is solved in its parent's accumulated frame: swing aligns its
    primary bone (or, for leaves, its first anchor), twist aligns the remaining
    child bones and the joint's anchors. Anchors at or below ``conf_min``
    confidence are ignored.

    Returns ``(pose, per_bone, degenerate)``.
    """
    tree = template.tree
    jobs, aobs = s.joints, s.anchors
    theta = np.zeros((tree.n, 3))
    world = np.zeros((tree.n, 3, 3))
    kids0 = tree.children(0)
    r0 = procrustes_rotation(template.j_tem[kids0] - template.j_tem[0], jobs[kids0] - jobs[0])
    world[0] = r0
    theta[0] = matrix_to_rotvec(r0)
    per_bone: list = [None] * (tree.n - 1)
    degenerate: list[int] = []
    for j in range(1, tree.n):
        gp = world[tree.parent[j]]
        prim, refs = _joint_references(template, j)
        refs = [r for r in refs if r[0] == "joint" or s.anchor_conf[r[1]] > conf_min]
        if prim is not None and prim[0] == "anchor" and s.anchor_conf[prim[1]] <= conf_min:
            prim, refs = (refs[0], refs[1:]) if refs else (None, [])

        def obs(ref):
            kind, i = ref
            return gp.T @ ((jobs[i] if kind == "joint" else aobs[i]) - jobs[j])

        if prim is None:
            world[j] = gp
            degenerate.append(j)
            continue
        v_tem = _template_vec(template, j, prim)
        v_obs = obs(prim)
        if np.linalg.norm(v_obs) <= eps or np.linalg.norm(v_tem) <= eps:
            world[j] = gp
            degenerate.append(j)
            continue
        a_tem = np.array([_template_vec(template, j, r) for r in refs]).reshape(-1, 3)
        a_obs = np.array([obs(r) for r in refs]).reshape(-1, 3)
        st = solve_bone_rotation(v_tem, v_obs, a_tem, a_obs, eps)
        per_bone[j - 1] = st
        if st.swing_degenerate or st.twist_degenerate:
            degenerate.append(j)
        r = st.rotation
        theta[j] = matrix_to_rotvec(r)
        world[j] = gp @ r
    pose = Pose(theta, np.zeros(NUM_BETAS), s.trans.copy())
    return pose, per_bone, degenerate


# -- objective ---------------------------------------------------------------

def _weights(s: Sparkle, cfg: SolverConfig):
    return np.sqrt(cfg.joint_weight * s.joint_conf), np.sqrt(cfg.anchor_weight * s.anchor_conf)


def residuals_batch(x, template: BodyTemplate, s: Sparkle, cfg: SolverConfig) -> np.ndarray:
    """Weighted residual vectors for a batch of parameter vectors (B, 85)."""
    x = np.atleast_2d(x)
    b = len(x)
    joints, anchors = fk_keypoints_batch(template, x[:, :72].reshape(b, NUM_JOINTS, 3), x[:, 72:82], x[:, 82:85])
    wj, wa = _weights(s, cfg)
    rj = (joints - s.joints) * wj[None, :, None]
    ra = (anchors - s.anchors) * wa[None, :, None]
    return np.concatenate([rj.reshape(b, -1), ra.reshape(b, -1)], axis=1)


def cost(pose: Pose, template: BodyTemplate, s: Sparkle, cfg: SolverConfig = SolverConfig()) -> float:
    r = residuals_batch(pose.to_vector()[None], template, s, cfg)[0]
    return float(r @ r)


def jacobian(x, template: BodyTemplate, s: Sparkle, cfg: SolverConfig, free=None):
    """Central-difference Jacobian of the residuals w.r.t. the free parameters."""
    x = np.asarray(x, dtype=float)
    free = np.arange(len(x)) if free is None else np.asarray(free)
    h = cfg.fd_step
    batch = np.repeat(x[None], 2 * len(free) + 1, axis=0)
    k = np.arange(len(free))
    batch[1 + 2 * k, free] += h
    batch[2 + 2 * k, free] -= h
    r = residuals_batch(batch, template, s, cfg)
    jac = (r[1::2] - r[2::2]).T / (2 * h)
    return r[0], jac


def _wrap_rotvecs(x):
    th = x[:72].reshape(NUM_JOINTS, 3)
    n = np.linalg.norm(th, axis=1)
    big = n > np.pi
    if big.any():
        th[big] *= (1.0 - 2.0 * np.pi / n[big])[:, None]
    x[:72] = th.ravel()
    return x


def refine_pose(theta_init: Pose, template: BodyTemplate, s: Sparkle, cfg: SolverConfig = SolverConfig(),
                per_bone=None, degenerate=None) -> SolveResult:
    """Levenberg-damped Gauss-Newton over (theta, beta, trans) with a numeric Jacobian."""
    frozen = cfg.beta_frozen or float(np.mean(s.anchor_conf)) < cfg.beta_freeze_conf
    free = np.r_[0:72, 82:85] if frozen else np.arange(85)
    x = theta_init.to_vector().copy()
    r, jac = jacobian(x, template, s, cfg, free)
    c0 = float(r @ r)
    cur = c0
    lam = cfg.damping_init
    history = [c0]
    it = 0
    # below tol_cost no step can gain more than tol_cost
    while it < cfg.max_iter and cur >= cfg.tol_cost:
        it += 1
        jtj = jac.T @ jac
        g = jac.T @ r
        try:
            step = np.linalg.solve(jtj + lam * np.eye(len(free)), -g)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        xn = x.copy()
        xn[free] += step
        xn = _wrap_rotvecs(xn)
        xn[72:82] = np.clip(xn[72:82], -3.0, 3.0)
        rn = residuals_batch(xn[None], template, s, cfg)[0]
        cn = float(rn @ rn)
        if not np.isfinite(cn):
            log.warning("non-finite cost at iteration %d; returning best-so-far", it)
            break
        if cn < cur:
            done = cur - cn < cfg.tol_cost
            x, cur = xn, cn
            history.append(cn)
            lam = max(lam / 10, 1e-12)
            if done:
                break
            r, jac = jacobian(x, template, s, cfg, free)
        else:
            lam *= 10
            if lam > 1e12:
                break
    return SolveResult(
        pose=Pose.from_vector(x), per_bone=per_bone or [None] * (NUM_JOINTS - 1), init_pose=theta_init,
        final_cost=cur, iterations=it, degenerate_bones=list(degenerate or []), initial_cost=c0,
        cost_history=history, beta_frozen=frozen,
    )


def solve(template: BodyTemplate, s: Sparkle, cfg: SolverConfig = SolverConfig(), refine: bool = True) -> SolveResult:
    init, per_bone, degenerate = init_pose_swing_twist(template, s, cfg.eps)
    if not refine:
        c = cost(init, template, s, cfg)
        return SolveResult(init, per_bone, init, c, 0, degenerate, c, [c])
    return refine_pose(init, template, s, cfg, per_bone, degenerate)
