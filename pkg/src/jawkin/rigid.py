"""Rigid-body transform algebra, frame construction and Kabsch registration.

Conventions
-----------
A :class:`RigidTransform` labelled ``parent -> child`` is the homogeneous
matrix ``^{parent}T_{child}``: it maps coordinates expressed in ``child`` into
``parent``::

    p_parent = R @ p_child + t

Composition follows the matrix product, ``^{X}T_{Y} @ ^{Y}T_{Z} = ^{X}T_{Z}``.
Lengths are millimetres, angles are degrees unless a name says ``rad``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateGeometryError, FrameMismatchError, NumericalFailureError

ORTHO_TOL = 1e-9
EPS_DIST = 1e-6  # mm
EPS_AREA = 1e-9  # mm^2


class FrameId(str, enum.Enum):
    """Coordinate systems that appear in the tracking chain."""

    O_OMOCAP = "O_OMoCap"
    O_VM = "O_VM"
    CS_MTA = "CS_MTA"
    CS_CRA = "CS_CRA"
    CS_DP = "CS_DP"
    CS_MAND_ANAT = "CS_Mand_Anat"
    CS_MAX_ANAT = "CS_Max_Anat"

    def __str__(self) -> str:
        return self.value


Frame = Optional[FrameId]


def as_point(p: ArrayLike) -> NDArray[np.float64]:
    """Return ``p`` as a finite float64 3-vector."""
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {np.shape(p)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite components: {arr}")
    return arr


def as_points(pts: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point set has non-finite components")
    return arr


def _orthonormality_error(r: NDArray[np.float64]) -> float:
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def nearest_rotation(m: ArrayLike) -> NDArray[np.float64]:
    """Project a 3x3 matrix onto SO(3) (closest rotation in Frobenius norm)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _frozen(a: NDArray[np.float64]) -> NDArray[np.float64]:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid transform ``^{parent}T_{child}``.

    ``parent`` and ``child`` may be ``None`` for unlabelled transforms, which
    chain with anything.
    """

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]
    parent: Frame = None
    child: Frame = None

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform has non-finite entries")
        err = _orthonormality_error(r)
        if err >= ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I|_F = {err:.3g})")
        if np.linalg.det(r) <= 0.0:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    # construction -------------------------------------------------------

    @classmethod
    def identity(cls, parent: Frame = None, child: Frame = None) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3), parent, child)

    @classmethod
    def from_matrix(
        cls,
        matrix: ArrayLike,
        parent: Frame = None,
        child: Frame = None,
        orthonormalize: bool = False,
    ) -> RigidTransform:
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"matrix must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row of a homogeneous transform must be [0, 0, 0, 1]")
        r = nearest_rotation(m[:3, :3]) if orthonormalize else m[:3, :3]
        return cls(r, m[:3, 3], parent, child)

    @classmethod
    def from_rotvec(
        cls, rotvec_rad: ArrayLike, translation: ArrayLike = (0.0, 0.0, 0.0),
        parent: Frame = None, child: Frame = None,
    ) -> RigidTransform:
        return cls(so3_exp(rotvec_rad), translation, parent, child)

    @classmethod
    def from_axis_angle(
        cls, axis: ArrayLike, angle_deg: float, translation: ArrayLike = (0.0, 0.0, 0.0),
        parent: Frame = None, child: Frame = None,
    ) -> RigidTransform:
        axis = as_point(axis)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis must be non-zero")
        return cls(so3_exp(axis / n * math.radians(angle_deg)), translation, parent, child)

    # views ---------------------------------------------------------------

    @property
    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Map point(s) from ``child`` coordinates into ``parent`` coordinates."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def relabel(self, parent: Frame = None, child: Frame = None) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation, parent, child)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __repr__(self) -> str:
        rv = np.degrees(so3_log(self.rotation))
        return (
            f"RigidTransform({self.parent}->{self.child}, "
            f"rotvec_deg={np.array2string(rv, precision=4)}, "
            f"t_mm={np.array2string(self.translation, precision=4)})"
        )


def _chain(outer: Frame, inner: Frame) -> None:
    if outer is not None and inner is not None and outer != inner:
        raise FrameMismatchError(f"cannot compose ...->{outer} with {inner}->...")


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Matrix product ``a @ b`` (``^{X}T_{Y} . ^{Y}T_{Z}``)."""
    _chain(a.child, b.parent)
    r = a.rotation @ b.rotation
    if _orthonormality_error(r) > ORTHO_TOL:
        r = nearest_rotation(r)
    t = a.rotation @ b.translation + a.translation
    return RigidTransform(r, t, a.parent, b.child)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation, t.child, t.parent)


# SO(3) maps ---------------------------------------------------------------


def hat(w: ArrayLike) -> NDArray[np.float64]:
    x, y, z = np.asarray(w, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(rotvec: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues' formula."""
    w = np.asarray(rotvec, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(w))
    k = hat(w)
    if theta < 1e-8:
        # second-order Taylor terms; error O(theta^3) ~ 1e-24
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (math.sin(theta) / theta) * k
        + ((1.0 - math.cos(theta)) / theta**2) * (k @ k)
    )


def rotation_angle_rad(r: ArrayLike) -> float:
    """Rotation angle of ``r`` in [0, pi].

    Uses ``atan2(|vee(R - R^T)|/2, (tr R - 1)/2)``, which equals
    ``arccos((tr R - 1)/2)`` but keeps full precision near 0 and pi.
    """
    r = np.asarray(r, dtype=np.float64)
    c = 0.5 * (np.trace(r) - 1.0)
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = 0.5 * float(np.linalg.norm(v))
    return math.atan2(s, c)


def so3_log(r: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector (radians) of a rotation matrix, with angle in [0, pi]."""
    r = np.asarray(r, dtype=np.float64)
    theta = rotation_angle_rad(r)
    v = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < 1e-8:
        return v
    if theta < math.pi - 1e-4:
        return v * (theta / math.sin(theta))
    # near pi the antisymmetric part vanishes; sym(R) = c I + (1 - c) n n^T
    c = math.cos(theta)
    b = (0.5 * (r + r.T) - c * np.eye(3)) / (1.0 - c)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / math.sqrt(max(b[i, i], 1e-300))
    axis /= np.linalg.norm(axis)
    if np.dot(axis, v) < 0.0:
        axis = -axis
    return axis * theta


def geodesic_angle(a: RigidTransform, b: RigidTransform) -> float:
    """Angle (degrees) of the relative rotation ``Ra^T Rb``, in [0, 180]."""
    return math.degrees(rotation_angle_rad(a.rotation.T @ b.rotation))


def interpolate_pose(a: RigidTransform, b: RigidTransform, s: float) -> RigidTransform:
    """Point on the geodesic from ``a`` (s=0) to ``b`` (s=1).

    Translation is interpolated linearly, rotation at constant angular rate.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation fraction must lie in [0, 1], got {s}")
    _chain(a.parent, b.parent)
    _chain(a.child, b.child)
    parent = a.parent if a.parent is not None else b.parent
    child = a.child if a.child is not None else b.child
    if s == 0.0:
        return RigidTransform(a.rotation, a.translation, parent, child)
    if s == 1.0:
        return RigidTransform(b.rotation, b.translation, parent, child)
    delta = so3_log(a.rotation.T @ b.rotation)
    r = a.rotation @ so3_exp(s * delta)
    t = (1.0 - s) * a.translation + s * b.translation
    return RigidTransform(r, t, parent, child)


# frames from points --------------------------------------------------------


def frame_from_three_points(
    p1: ArrayLike, p2: ArrayLike, p3: ArrayLike,
    parent: Frame = None, child: Frame = None,
) -> RigidTransform:
    """Right-handed frame spanned by a point triad.

    Origin at ``p1``, x along ``p2 - p1``, z along ``(p2 - p1) x (p3 - p1)``
    and ``y = z x x``. The returned transform maps local (frame) coordinates
    into the coordinates the points are given in.
    """
    a, b, c = as_point(p1), as_point(p2), as_point(p3)
    e1, e2 = b - a, c - a
    if min(np.linalg.norm(e1), np.linalg.norm(e2), np.linalg.norm(c - b)) < EPS_DIST:
        raise DegenerateGeometryError("triad points coincide")
    n = np.cross(e1, e2)
    if 0.5 * np.linalg.norm(n) < EPS_AREA:
        raise DegenerateGeometryError("triad points are collinear")
    x = e1 / np.linalg.norm(e1)
    z = n / np.linalg.norm(n)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), a, parent, child)


# registration --------------------------------------------------------------


def kabsch_fit(
    source: ArrayLike, target: ArrayLike,
    parent: Frame = None, child: Frame = None,
) -> Tuple[RigidTransform, float]:
    """Least-squares proper rigid transform with ``target ~ T.apply(source)``.

    Returns the transform and the RMS residual (mm) of the fit.
    """
    src, dst = as_points(source), as_points(target)
    if src.shape != dst.shape:
        raise DegenerateGeometryError(
            f"point sets differ in size: {src.shape[0]} vs {dst.shape[0]}"
        )
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 correspondences, got {n}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    scale = max(float(np.abs(a).max()), EPS_DIST)
    try:
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[1] < 1e-12 * max(scale, 1.0) or sv[1] * sv[0] < EPS_AREA:
            raise DegenerateGeometryError("source points are collinear")
        u, _, vt = np.linalg.svd(a.T @ b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc
    d = 1.0 if np.linalg.det(vt.T @ u.T) >= 0.0 else -1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = mu_d - r @ mu_s
    resid = dst - (src @ r.T + t)
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    return RigidTransform(r, t, parent, child), rms


def rms_residual(transform: RigidTransform, source: ArrayLike, target: ArrayLike) -> float:
    resid = as_points(target) - transform.apply(as_points(source))
    return float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))


def random_rotation(rng: np.random.Generator) -> NDArray[np.float64]:
    """Uniformly distributed rotation (normalised random quaternion)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(
    rng: np.random.Generator, translation_scale: float = 100.0,
    parent: Frame = None, child: Frame = None,
) -> RigidTransform:
    r = nearest_rotation(random_rotation(rng))
    return RigidTransform(r, rng.normal(scale=translation_scale, size=3), parent, child)


def stack_matrices(transforms: Sequence[Optional[RigidTransform]]) -> NDArray[np.float64]:
    """(N, 4, 4) array; missing transforms become NaN blocks."""
    out = np.full((len(transforms), 4, 4), np.nan)
    for i, t in enumerate(transforms):
        if t is not None:
            out[i] = t.matrix
    return out
