import numpy as np
from hypothesis import strategies as st

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def sphere_points(draw):
    v = np.array([draw(finite) for _ in range(4)])
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0.0, 0.0, 0.0])
    v = v / np.linalg.norm(v)
    return np.array([v[0] + 1j * v[1], v[2] + 1j * v[3]])


@st.composite
def ball_points(draw, rmin=0.05, rmax=0.95):
    z = draw(sphere_points())
    r = draw(st.floats(rmin, rmax))
    return r * z


@st.composite
def distinct_pairs(draw, min_dist=1e-2):
    z = draw(sphere_points())
    w = draw(sphere_points())
    if np.linalg.norm(z - w) < min_dist:
        w = -z
    return z, w
