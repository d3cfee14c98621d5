"""Euler angle / rotation matrix conversions, angle binning, and the
geodesic metric on rotations.

Conventions used throughout the package:

- A pose is three Euler angles: azimuth ``az`` in [-pi, pi), elevation
  ``el`` in [-pi/2, pi/2], cyclorotation ``cy`` in [-pi, pi).
- The rotation built from a pose is ``R = Rz(cy) @ Rx(el) @ Ry(az)``,
  i.e. extrinsic rotation about Y, then X, then Z.
- Rotation matrices are 3x3 row-major, orthonormal, det +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# |cos(el)| below this uses the gimbal-lock branch of rotation_to_euler.
_GIMBAL_EPS = 1e-9

AZIMUTH = "azimuth"
ELEVATION = "elevation"
CYCLO = "cyclo"
FULL_CIRCLE_ANGLES = (AZIMUTH, CYCLO)


def wrap_angle(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (angle + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class EulerPose:
    """Viewpoint as (azimuth, elevation, cyclorotation) in radians."""

    az: float
    el: float
    cy: float

    def normalized(self) -> "EulerPose":
        """Wrap azimuth/cyclorotation into [-pi, pi), clamp elevation to
        [-pi/2, pi/2]."""
        el = min(max(self.el, -HALF_PI), HALF_PI)
        return EulerPose(wrap_angle(self.az), el, wrap_angle(self.cy))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.az, self.el, self.cy)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def validate_rotation(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Check orthonormality and det +1; returns the matrix as float64.

    Raises ValueError if the matrix is not a proper rotation within tol.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        raise ValueError("matrix is not orthonormal within tolerance")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1 within tolerance")
    return r


def euler_to_rotation(pose: EulerPose) -> np.ndarray:
    """Build the rotation matrix Rz(cy) @ Rx(el) @ Ry(az) for a pose."""
    if not all(math.isfinite(a) for a in pose.as_tuple()):
        raise ValueError("pose angles must be finite")
    return rot_z(pose.cy) @ rot_x(pose.el) @ rot_y(pose.az)


def rotation_to_euler(r: np.ndarray) -> EulerPose:
    """Invert euler_to_rotation.

    At gimbal lock (|elevation| = pi/2, where azimuth and cyclorotation
    are not separately observable) returns the representative with
    cyclorotation 0.
    """
    r = validate_rotation(r)
    # Under Rz(cy) Rx(el) Ry(az): r[2] = (-cos(el) sin(az), sin(el), cos(el) cos(az))
    cos_el = math.hypot(r[2, 0], r[2, 2])
    el = math.atan2(r[2, 1], cos_el)
    if cos_el < _GIMBAL_EPS:
        # r[0] = (cos(az +/- cy), 0, sin(az +/- cy)); pick cy = 0.
        return EulerPose(wrap_angle(math.atan2(r[0, 2], r[0, 0])), el, 0.0)
    az = math.atan2(-r[2, 0], r[2, 2])
    cy = math.atan2(-r[0, 1], r[1, 1])
    return EulerPose(wrap_angle(az), el, wrap_angle(cy))


_SQRT8 = math.sqrt(8.0)


def geodesic_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic distance between two rotations, in [0, pi].

    Equals the Frobenius norm of the relative rotation's matrix logarithm
    divided by sqrt(2). Computed as atan2 of the relative rotation's sine
    (from its antisymmetric part) and cosine (from its trace), which is
    well conditioned at both ends of [0, pi]; arccos of the trace alone
    loses half the significant digits near zero.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    q = r1.T @ r2
    cos = (q[0, 0] + q[1, 1] + q[2, 2] - 1.0) / 2.0
    sin = np.linalg.norm(q - q.T) / _SQRT8
    return math.atan2(sin, cos)


def geodesic_distance_many(r: np.ndarray, rs: np.ndarray) -> np.ndarray:
    """Geodesic distances from one rotation to a stack of shape (n, 3, 3)."""
    q = np.einsum("ji,njk->nik", np.asarray(r, dtype=float), np.asarray(rs, dtype=float))
    cos = (np.trace(q, axis1=1, axis2=2) - 1.0) / 2.0
    sin = np.linalg.norm(q - np.swapaxes(q, 1, 2), axis=(1, 2)) / _SQRT8
    return np.arctan2(sin, cos)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation, sampled via a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class BinningScheme:
    """Equal-width binning of the three pose angles.

    Azimuth and cyclorotation are full-circle angles: bin ``b`` covers
    [-pi + b*2pi/n, -pi + (b+1)*2pi/n). Elevation is a half-circle angle
    binned over [-pi/2, pi/2] with the same bin count; its last bin is
    closed at pi/2.
    """

    n_bins: int = 21

    def __post_init__(self) -> None:
        if self.n_bins < 1:
            raise ValueError("n_bins must be a positive integer")

    def edges(self, angle: str) -> np.ndarray:
        if angle in FULL_CIRCLE_ANGLES:
            return np.linspace(-math.pi, math.pi, self.n_bins + 1)
        if angle == ELEVATION:
            return np.linspace(-HALF_PI, HALF_PI, self.n_bins + 1)
        raise ValueError(f"unknown angle name: {angle!r}")

    def width(self, angle: str) -> float:
        if angle in FULL_CIRCLE_ANGLES:
            return TWO_PI / self.n_bins
        if angle == ELEVATION:
            return math.pi / self.n_bins
        raise ValueError(f"unknown angle name: {angle!r}")

    def centers(self, angle: str) -> np.ndarray:
        e = self.edges(angle)
        return 0.5 * (e[:-1] + e[1:])

    def bin_center(self, index: int, angle: str) -> float:
        if not 0 <= index < self.n_bins:
            raise ValueError("bin index out of range")
        lo = -math.pi if angle in FULL_CIRCLE_ANGLES else -HALF_PI
        return lo + (index + 0.5) * self.width(angle)

    def bin_pose(self, pose: EulerPose) -> tuple[int, int, int]:
        return (
            bin_angle(pose.az, self, AZIMUTH),
            bin_angle(pose.el, self, ELEVATION),
            bin_angle(pose.cy, self, CYCLO),
        )

    def pose_of_bins(self, b_az: int, b_el: int, b_cy: int) -> EulerPose:
        return EulerPose(
            self.bin_center(b_az, AZIMUTH),
            self.bin_center(b_el, ELEVATION),
            self.bin_center(b_cy, CYCLO),
        )


def bin_angle(angle: float, scheme: BinningScheme, angle_name: str = AZIMUTH) -> int:
    """Map an angle to its bin index in [0, n_bins).

    Full-circle angles are wrapped into [-pi, pi) first; elevation is
    clamped to [-pi/2, pi/2], with the closed right edge falling in the
    last bin.
    """
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    width = scheme.width(angle_name)
    if angle_name in FULL_CIRCLE_ANGLES:
        a = wrap_angle(angle)
        b = int((a + math.pi) // width)
    else:
        a = min(max(angle, -HALF_PI), HALF_PI)
        b = int((a + HALF_PI) // width)
    return min(max(b, 0), scheme.n_bins - 1)
