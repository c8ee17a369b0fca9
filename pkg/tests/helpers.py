import numpy as np
from hypothesis import strategies as st

from sparkle_mocap.geom3 import rodrigues


def unit_vectors():
    return (st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3)
            .map(np.array)
            .filter(lambda v: np.linalg.norm(v) > 0.1)
            .map(lambda v: v / np.linalg.norm(v)))


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng):
    return rodrigues(random_unit(rng), rng.uniform(0, np.pi))


def expm_series(k, terms=30):
    """Matrix exponential by truncated power series."""
    out = np.eye(3)
    term = np.eye(3)
    for n in range(1, terms):
        term = term @ k / n
        out = out + term
    return out


def observable_pose(template, rng, max_swing=1.2, max_twist=2.5, trans_scale=0.5):
    """Random local rotations exciting only the DOF the anchors can observe.

    Each bone gets R = swing @ twist: a swing about an axis perpendicular to
    its template reference direction and, where observable, a twist about it.
    Returns (theta as rotation matrices, trans).
    """
    from sparkle_mocap.solver import _joint_references, _template_vec, observable_dofs

    obs = observable_dofs(template)
    rots = np.zeros((template.tree.n, 3, 3))
    rots[0] = random_rotation(rng)
    for j in range(1, template.tree.n):
        prim, _ = _joint_references(template, j)
        if prim is None:
            rots[j] = np.eye(3)
            continue
        u = _template_vec(template, j, prim)
        u = u / np.linalg.norm(u)
        perp = np.cross(u, random_unit(rng))
        swing = rodrigues(perp / np.linalg.norm(perp), rng.uniform(0, max_swing))
        twist = rodrigues(u, rng.uniform(-max_twist, max_twist)) if obs[j][1] else np.eye(3)
        rots[j] = swing @ twist
    return rots, rng.uniform(-trans_scale, trans_scale, 3)


# acceptance lines, printed in the terminal summary by conftest
ACCEPTANCE = {}


def record(key, ok, detail):
    ACCEPTANCE[key] = f"{key} {'PASS' if ok else 'FAIL'}  {detail}"
    return ok
