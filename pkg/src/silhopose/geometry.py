"""Quaternions, rigid transforms and the pinhole camera.

Conventions used throughout the package:

- Quaternions are stored as (w, x, y, z) and always unit norm.
- ``quat_mul(a, b)`` is the Hamilton product; as a rotation it applies ``b``
  first, then ``a`` (same as the matrix product ``R(a) @ R(b)``).
- Camera frame: x right, y down, z forward. Pixel coordinates follow the
  OpenCV convention, pixel centres sit on integer coordinates.
- Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Quaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not n > 1e-12 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        # Leave already-unit input untouched so exact operations stay exact.
        if abs(n - 1.0) <= 1e-15:
            n = 1.0
        for name in ("w", "x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)) / n)

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        a = np.asarray(a, dtype=float)
        return cls(a[0], a[1], a[2], a[3])

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_matrix(cls, m) -> "Quaternion":
        # Shepperd's method: branch on the largest diagonal term for stability.
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            return cls(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            return cls((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        if m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            return cls((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        return cls((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Quaternion":
        """Uniformly distributed rotation (normalized 4D Gaussian)."""
        return cls.from_array(rng.normal(size=4))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def as_tuple(self) -> tuple:
        return (self.w, self.x, self.y, self.z)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_mul(self, other)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        return 2.0 * math.atan2(math.sqrt(self.x**2 + self.y**2 + self.z**2), abs(self.w))

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def rotate(self, v) -> np.ndarray:
        """Rotate a 3-vector or an (N, 3) array of points."""
        v = np.asarray(v, dtype=float)
        return v @ self.to_matrix().T


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Compose rotations: ``b`` is applied first, then ``a``."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        # Terms paired so that q^-1 * q cancels exactly.
        (a.w * b.x + a.x * b.w) + (a.y * b.z - a.z * b.y),
        (a.w * b.y + a.y * b.w) + (a.z * b.x - a.x * b.z),
        (a.w * b.z + a.z * b.w) + (a.x * b.y - a.y * b.x),
    )


def quat_angle(a: Quaternion, b: Quaternion) -> float:
    """Geodesic distance between two rotations, in [0, pi].

    Invariant to the sign of either argument. Computed with atan2 on the
    relative rotation, which keeps precision near zero where ``acos`` of
    the dot product loses half the digits.
    """
    return quat_mul(a.conjugate(), b).angle()


def rot_x(angle: float) -> Quaternion:
    return Quaternion.from_axis_angle((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> Quaternion:
    return Quaternion.from_axis_angle((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> Quaternion:
    return Quaternion.from_axis_angle((0.0, 0.0, 1.0), angle)


@dataclass(frozen=True)
class RigidTransform:
    rotation: Quaternion = Quaternion()
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3:
            raise ValueError("translation must be a 3-vector")
        object.__setattr__(self, "translation", t)

    @classmethod
    def translate(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(Quaternion.identity(), (x, y, z))

    def apply(self, p) -> np.ndarray:
        return self.rotation.rotate(p) + np.asarray(self.translation)

    def inverse(self) -> "RigidTransform":
        inv = self.rotation.conjugate()
        return RigidTransform(inv, tuple(-inv.rotate(self.translation)))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: ``other`` is applied first."""
        return RigidTransform(
            quat_mul(self.rotation, other.rotation),
            tuple(self.rotation.rotate(other.translation) + np.asarray(self.translation)),
        )

    __matmul__ = compose

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.to_matrix()
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with square pixels (single focal length)."""

    f: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("sensor width and height must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]])

    @property
    def min_fov(self) -> float:
        """Smallest field of view, set by the shorter sensor side."""
        return 2.0 * math.atan(min(self.width, self.height) / (2.0 * self.f))

    @property
    def crop_side(self) -> int:
        return min(self.width, self.height)

    def crop(self, resolution: int) -> "CameraIntrinsics":
        """Intrinsics of the square crop of side ``min(width, height)``
        centred on the principal point, resampled to ``resolution`` pixels."""
        scale = resolution / self.crop_side
        c = (resolution - 1) / 2.0
        return CameraIntrinsics(self.f * scale, c, c, resolution, resolution)

    def to_dict(self) -> dict:
        return {"f": self.f, "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["f"]), float(d["cx"]), float(d["cy"]), int(d["width"]), int(d["height"]))


# Camera of the YCB-Video recordings (Asus Xtion); its narrow field of view
# keeps the render-distance fit guarantee valid (see mesh.render_distance).
DEFAULT_CAMERA = CameraIntrinsics(f=1066.778, cx=312.9869, cy=241.3109, width=640, height=480)


@dataclass(frozen=True)
class Roi:
    bx: float
    by: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate ROI: w={self.w}, h={self.h}")

    def as_list(self) -> list:
        return [self.bx, self.by, self.w, self.h]


def project_points(K: CameraIntrinsics, T: RigidTransform, v) -> np.ndarray:
    """Project (N, 3) object-frame points to (N, 2) pixel coordinates."""
    p = T.apply(np.atleast_2d(v))
    if np.any(p[:, 2] <= 0):
        raise ValueError("point behind camera")
    return np.column_stack([K.f * p[:, 0] / p[:, 2] + K.cx, K.f * p[:, 1] / p[:, 2] + K.cy])


def project_point(K: CameraIntrinsics, T: RigidTransform, v) -> np.ndarray:
    """gamma = K T v, dehomogenized."""
    return project_points(K, T, np.asarray(v, dtype=float).reshape(1, 3))[0]
