"""Rotation algebra on SO(3): exponentiation, log map, swing/twist solvers, averaging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_EPS = 1e-8


class AxisAngle(NamedTuple):
    axis: np.ndarray
    angle: float


@dataclass(frozen=True)
class SwingTwist:
    swing: np.ndarray
    twist: np.ndarray
    n_sw: np.ndarray
    alpha_sw: float
    n_tw: np.ndarray
    alpha_tw: float
    swing_degenerate: bool
    twist_degenerate: bool
    twist_confidence: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        return self.swing @ self.twist

    def to_dict(self) -> dict:
        return {
            "n_sw": self.n_sw.tolist(),
            "alpha_sw": float(self.alpha_sw),
            "n_tw": self.n_tw.tolist(),
            "alpha_tw": float(self.alpha_tw),
            "swing_degenerate": bool(self.swing_degenerate),
            "twist_degenerate": bool(self.twist_degenerate),
            "twist_confidence": float(self.twist_confidence),
        }


def hat(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) * 0.5


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return bool(np.abs(m @ m.T - np.eye(3)).max() < tol and abs(np.linalg.det(m) - 1.0) < tol)


def rodrigues(axis, angle: float) -> np.ndarray:
    """Rotation by ``angle`` radians about the unit vector ``axis``."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,):
        raise ValueError(f"axis must be a 3-vector, got shape {axis.shape}")
    n = np.linalg.norm(axis)
    if not (1.0 - 1e-9 <= n <= 1.0 + 1e-9):
        raise ValueError(f"axis must be unit length, got norm {n!r}")
    k = hat(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotvec_to_matrix(rotvecs) -> np.ndarray:
    """Batched exponential map: (..., 3) axis-angle vectors to (..., 3, 3) matrices."""
    rv = np.asarray(rotvecs, dtype=float)
    theta = np.linalg.norm(rv, axis=-1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    n = rv / safe[..., None]
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [np.stack([zero, -z, y], -1), np.stack([z, zero, -x], -1), np.stack([-y, x, zero], -1)], -2
    )
    s = np.where(small, 0.0, np.sin(theta))[..., None, None]
    c = np.where(small, 0.0, 1.0 - np.cos(theta))[..., None, None]
    return np.eye(3) + s * k + c * (k @ k)


def _canonical_sign(axis: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(axis)))
    return -axis if axis[i] < 0 else axis


def to_axis_angle(r) -> AxisAngle:
    """Log map. Identity yields axis (1,0,0); an exact half-turn uses the
    largest-magnitude-component-positive sign rule."""
    r = np.asarray(r, dtype=float)
    w = vee(r)
    s = np.linalg.norm(w)
    c = (np.trace(r) - 1.0) * 0.5
    angle = float(np.arctan2(s, c))
    if angle < 1e-15:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
    if c > -0.5:
        return AxisAngle(w / s, angle)
    # near pi the antisymmetric part is ill-conditioned; read the axis off n n^T
    b = 0.5 * (r + r.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.linalg.norm(b[:, i])
    d = float(axis @ w)
    if s > 1e-13 and d != 0.0:
        axis = axis if d > 0 else -axis
    else:
        axis = _canonical_sign(axis)
        angle = np.pi
    return AxisAngle(axis, angle)


def matrix_to_rotvec(r) -> np.ndarray:
    aa = to_axis_angle(r)
    return aa.axis * aa.angle


def _perpendicular(v: np.ndarray) -> np.ndarray:
    u = v / np.linalg.norm(v)
    for e in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        p = e - (e @ u) * u
        pn = np.linalg.norm(p)
        if pn > 1e-6:
            return p / pn
    raise AssertionError("unreachable: (1,0,0) and (0,1,0) both parallel to v")


def swing_from_vectors(v_tem, v_obs, eps: float = DEFAULT_EPS):
    """Minimal rotation taking the direction of ``v_tem`` onto ``v_obs``.

    Returns ``(R, n_sw, alpha_sw, degenerate)``. When the vectors are
    (anti-)parallel the axis is not defined by the cross product; the aligned
    case returns identity and the opposed case a half-turn about a fixed
    perpendicular of ``v_tem``.
    """
    v_tem = np.asarray(v_tem, dtype=float)
    v_obs = np.asarray(v_obs, dtype=float)
    lt, lo = np.linalg.norm(v_tem), np.linalg.norm(v_obs)
    if lt <= eps or lo <= eps:
        raise ValueError("swing_from_vectors: zero-length bone vector")
    cross = np.cross(v_tem, v_obs)
    cn = np.linalg.norm(cross)
    dot = float(v_tem @ v_obs)
    if cn <= eps * lt * lo:
        perp = _perpendicular(v_tem)
        if dot > 0:
            return np.eye(3), perp, 0.0, True
        return rodrigues(perp, np.pi), perp, float(np.pi), True
    n = cross / cn
    alpha = float(np.arctan2(cn, dot))
    return rodrigues(n, alpha), n, alpha, False


def twist_from_anchors(n_tw, a_tem: Sequence, a_obs: Sequence, eps: float = DEFAULT_EPS):
    """Rotation about ``n_tw`` best aligning projected anchor vectors.

    Returns ``(R, alpha_tw, confidence, degenerate)``. The angle is the
    circular mean of per-anchor signed angles weighted by the shorter of the
    two projected lengths.
    """
    n = np.asarray(n_tw, dtype=float)
    a_tem = np.asarray(a_tem, dtype=float).reshape(-1, 3)
    a_obs = np.asarray(a_obs, dtype=float).reshape(-1, 3)
    if len(a_tem) != len(a_obs):
        raise ValueError(f"anchor list lengths differ: {len(a_tem)} vs {len(a_obs)}")
    if len(a_tem) == 0:
        return np.eye(3), 0.0, 0.0, True
    pt = a_tem - np.outer(a_tem @ n, n)
    po = a_obs - np.outer(a_obs @ n, n)
    lt = np.linalg.norm(pt, axis=1)
    lo = np.linalg.norm(po, axis=1)
    w = np.minimum(lt, lo)
    keep = (lt > eps) & (lo > eps)
    total = float(w.sum())
    if not keep.any():
        return np.eye(3), 0.0, 0.0, True
    sin_k = np.cross(pt[keep], po[keep]) @ n
    cos_k = np.einsum("ij,ij->i", pt[keep], po[keep])
    ang = np.arctan2(sin_k, cos_k)
    wk = w[keep]
    alpha = float(np.arctan2(wk @ np.sin(ang), wk @ np.cos(ang)))
    conf = float(wk.sum() / total) if total > 0 else 0.0
    return rodrigues(n, alpha), alpha, conf, False


def solve_bone_rotation(v_tem, v_obs, a_tem, a_obs, eps: float = DEFAULT_EPS) -> SwingTwist:
    """Swing-twist rotation R = swing @ twist mapping a template bone and its
    anchor offsets onto observed ones.

    Observed anchors are pulled back through the swing so the twist is
    measured about the template bone axis.
    """
    v_tem = np.asarray(v_tem, dtype=float)
    swing, n_sw, alpha_sw, sw_deg = swing_from_vectors(v_tem, v_obs, eps)
    n_tw = v_tem / np.linalg.norm(v_tem)
    a_obs = np.asarray(a_obs, dtype=float).reshape(-1, 3)
    unswung = a_obs @ swing  # rows of swing^T a
    twist, alpha_tw, conf, tw_deg = twist_from_anchors(n_tw, a_tem, unswung, eps)
    return SwingTwist(swing, twist, n_sw, alpha_sw, n_tw, alpha_tw, sw_deg, tw_deg, conf)


def project_to_so3(m) -> np.ndarray:
    """Closest rotation in Frobenius norm (polar factor with det correction)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def chordal_mean(rotations: Sequence, weights: Sequence | None = None) -> np.ndarray:
    rots = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    if len(rots) == 0:
        raise ValueError("chordal_mean: empty rotation list")
    w = np.ones(len(rots)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(rots),):
        raise ValueError("chordal_mean: weights must match rotations")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("chordal_mean: weights must be non-negative with at least one positive")
    m = np.einsum("i,ijk->jk", w / w.sum(), rots)
    return project_to_so3(m)


def procrustes_rotation(src, dst, weights=None) -> np.ndarray:
    """Rotation R minimizing sum w_i |R src_i - dst_i|^2 (no translation)."""
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=float)
    h = (dst * w[:, None]).T @ src
    return project_to_so3(h)


def geodesic_angle_deg(r1, r2) -> float:
    r = np.asarray(r1, dtype=float).T @ np.asarray(r2, dtype=float)
    c = np.clip((np.trace(r) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def geodesic_angle(r1, r2) -> float:
    """Radians; atan2 form, accurate near zero (acos loses digits there)."""
    r = np.asarray(r1, dtype=float).T @ np.asarray(r2, dtype=float)
    return float(np.arctan2(np.linalg.norm(vee(r)), (np.trace(r) - 1.0) * 0.5))
