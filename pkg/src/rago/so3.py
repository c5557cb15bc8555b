"""Rotation arithmetic on SO(3).

Rotations are plain ``(3, 3)`` float arrays; most helpers also accept a
stack ``(..., 3, 3)``. Quaternions only appear inside Haar sampling.
"""

import math

import numpy as np

from .errors import DegenerateInput

ORTH6D_EPS = 1e-12

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def quat_to_matrix(q):
    """Convert unit quaternions ``(w, x, y, z)`` of shape ``(..., 4)`` to matrices."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def random_rotations(n, rng):
    """Draw ``n`` Haar-uniform rotations as an ``(n, 3, 3)`` array."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return quat_to_matrix(q)


def random_rotation(rng):
    """Draw one Haar-uniform rotation.

    A normalized 4D Gaussian is uniform on the unit 3-sphere, which maps to
    the Haar measure on SO(3).
    """
    return random_rotations(1, rng)[0]


def _skew(w):
    k = np.zeros(w.shape[:-1] + (3, 3))
    k[..., 0, 1], k[..., 0, 2], k[..., 1, 2] = -w[..., 2], w[..., 1], -w[..., 0]
    k[..., 1, 0], k[..., 2, 0], k[..., 2, 1] = w[..., 2], -w[..., 1], w[..., 0]
    return k


def exp_map(rotvec):
    """Rodrigues map from axis-angle vectors ``(..., 3)`` (radians) to matrices."""
    w = np.asarray(rotvec, dtype=float)
    if w.shape == (3,):
        return _exp_single(w)
    t = np.sqrt(np.sum(w * w, axis=-1))
    small = t < 1e-4
    ts = np.where(small, 1.0, t)
    # Taylor series below 1e-4 rad, where the closed forms lose digits
    a = np.where(small, 1.0 - t * t / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t * t / 24.0, (1.0 - np.cos(ts)) / (ts * ts))
    k = _skew(w)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def _exp_single(w):
    x, y, z = w
    t = math.sqrt(x * x + y * y + z * z)
    if t < 1e-4:
        a, b = 1.0 - t * t / 6.0, 0.5 - t * t / 24.0
    else:
        a, b = math.sin(t) / t, (1.0 - math.cos(t)) / (t * t)
    return np.array([
        [1.0 - b * (y * y + z * z), b * x * y - a * z, b * x * z + a * y],
        [b * x * y + a * z, 1.0 - b * (x * x + z * z), b * y * z - a * x],
        [b * x * z - a * y, b * y * z + a * x, 1.0 - b * (x * x + y * y)],
    ])


def log_map(r):
    """Axis-angle vector (radians) of rotations ``(..., 3, 3)``, angle in [0, pi]."""
    m = np.asarray(r, dtype=float)
    s = np.empty(m.shape[:-1])
    s[..., 0] = m[..., 2, 1] - m[..., 1, 2]
    s[..., 1] = m[..., 0, 2] - m[..., 2, 0]
    s[..., 2] = m[..., 1, 0] - m[..., 0, 1]
    sin_t = 0.5 * np.sqrt(np.sum(s * s, axis=-1))
    cos_t = np.minimum(np.maximum((m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2] - 1.0) / 2.0, -1.0), 1.0)
    t = np.arctan2(sin_t, cos_t)
    small = sin_t < 1e-8
    scale = np.where(small, 0.5 + t * t / 12.0, t / (2.0 * np.where(small, 1.0, sin_t)))
    out = scale[..., None] * s
    # near pi the skew part vanishes; read the axis off the symmetric part
    flip = (cos_t < 0.0) & (sin_t < 0.1)
    if flip.any():
        mf, cf, sf, tf = m[flip], cos_t[flip], s[flip], t[flip]
        b = 0.5 * (mf + np.swapaxes(mf, -1, -2)) - cf[:, None, None] * np.eye(3)
        diag = np.diagonal(b, axis1=-2, axis2=-1)
        j = np.argmax(diag, axis=-1)
        rows = np.arange(len(j))
        axis = b[rows, :, j] / np.sqrt(diag[rows, j] * (1.0 - cf))[:, None]
        sign = np.where(np.einsum("ij,ij->i", axis, sf) < 0.0, -1.0, 1.0)
        out[flip] = (sign * tf)[:, None] * axis
    return out


def axis_angle(axis, angle_deg):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return exp_map(axis * np.deg2rad(angle_deg))


def rot_x(angle_deg):
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_deg):
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_deg):
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_perturbation(sigma_deg, rng):
    """Rotation about a uniform random axis by an angle drawn from |N(0, sigma^2)|."""
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be non-negative")
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = abs(rng.normal(0.0, sigma_deg)) if sigma_deg > 0 else 0.0
    return exp_map(axis * np.deg2rad(angle))


def compose(*rs):
    out = np.eye(3)
    for r in rs:
        out = out @ r
    return out


def transpose(r):
    return np.swapaxes(r, -1, -2)


def geodesic_deg(a, b):
    """Angle in degrees of ``a^T b``; broadcasts over leading axes.

    Evaluated as ``atan2(|skew part|, (tr - 1) / 2)``, which equals the usual
    ``arccos((tr - 1) / 2)`` on SO(3) but keeps full precision near 0 and 180.
    """
    m = np.swapaxes(a, -1, -2) @ b
    tr = m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2]
    sx = m[..., 2, 1] - m[..., 1, 2]
    sy = m[..., 0, 2] - m[..., 2, 0]
    sz = m[..., 1, 0] - m[..., 0, 1]
    sin_part = 0.5 * np.sqrt(sx * sx + sy * sy + sz * sz)
    cos_part = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return np.degrees(np.arctan2(sin_part, cos_part))


def entrywise_l1(a, b):
    """Sum of absolute entrywise differences over the last two axes."""
    return np.abs(np.asarray(a) - np.asarray(b)).sum(axis=(-1, -2))


def orth6d_to_rotation(v):
    """Gram-Schmidt map from 6 numbers (two columns) to a rotation.

    Accepts ``(6,)`` or ``(..., 6)``. Raises DegenerateInput when the first
    vector vanishes or the second is parallel to it.
    """
    v = np.asarray(v, dtype=float)
    a, b = v[..., 0:3], v[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na <= ORTH6D_EPS):
        raise DegenerateInput("first Orth6D column has (near) zero norm")
    c1 = a / na
    u = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(nu <= ORTH6D_EPS):
        raise DegenerateInput("Orth6D columns are (near) parallel")
    c2 = u / nu
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def rotation_to_orth6d(r):
    r = np.asarray(r, dtype=float)
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def project_to_so3(m):
    """Nearest rotation in Frobenius norm (SVD polar factor with det fix).

    Raises DegenerateInput when ``m`` has rank below two, where the nearest
    rotation is not unique.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise DegenerateInput("matrix has non-finite entries")
    u, s, vt = np.linalg.svd(m)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateInput("matrix is numerically singular")
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def is_rotation(r, tol=1e-9):
    r = np.asarray(r, dtype=float)
    ortho = np.linalg.norm(np.swapaxes(r, -1, -2) @ r - np.eye(3), axis=(-1, -2))
    det = np.linalg.det(r)
    return bool(np.all(ortho < tol) and np.all(np.abs(det - 1.0) < tol))
