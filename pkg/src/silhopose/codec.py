"""Translation code (ROI-relative centre + range) and apparent orientation.

The translation of a detection is carried as the object-centre pixel,
expressed relative to the ROI and squashed through a sigmoid, plus the
range (centre-to-camera distance). Decoding recovers pixel offsets from
the principal point, then the camera-frame translation by similar
triangles; the range is preserved exactly, whatever the offset.

Orientation is predicted as it *appears* in a crop around the object. The
true orientation is that apparent orientation carried along the viewing
ray: a pan about camera y by ``atan(X/Z)`` applied after a tilt about
camera x by ``-atan(Y/Z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Quaternion, Roi, quat_mul, rot_x, rot_y

QLOSS_EPS = math.exp(-4.0)


@dataclass(frozen=True)
class TranslationCode:
    nx: float
    ny: float
    range: float

    def __post_init__(self):
        if not (0.0 < self.nx < 1.0 and 0.0 < self.ny < 1.0):
            raise ValueError(f"normalized centre must lie in (0, 1), got ({self.nx}, {self.ny})")
        if not self.range > 0:
            raise ValueError("range must be positive")

    def as_list(self) -> list:
        return [self.nx, self.ny, self.range]


@dataclass(frozen=True)
class Translation:
    X: float
    Y: float
    Z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.Z])

    @property
    def range(self) -> float:
        return math.sqrt(self.X**2 + self.Y**2 + self.Z**2)


def logit(n: float) -> float:
    if not 0.0 < n < 1.0:
        raise ValueError(f"logit undefined at {n}")
    return -math.log(1.0 / n - 1.0)


def sigmoid(r: float) -> float:
    if r >= 0:
        return 1.0 / (1.0 + math.exp(-r))
    e = math.exp(r)
    return e / (1.0 + e)


def decode_center(code: TranslationCode, roi: Roi, K: CameraIntrinsics) -> tuple:
    """Object-centre pixel offsets (px, py) from the principal point."""
    rx = logit(code.nx)
    ry = logit(code.ny)
    return roi.bx + rx * roi.w - K.cx, roi.by + ry * roi.h - K.cy


def decode_translation(px: float, py: float, range_: float, f: float) -> Translation:
    if not (range_ > 0 and f > 0):
        raise ValueError("range and focal length must be positive")
    Z = range_ * f / math.sqrt(px * px + py * py + f * f)
    return Translation(Z * px / f, Z * py / f, Z)


def encode_translation(t: Translation, roi: Roi, K: CameraIntrinsics) -> TranslationCode:
    """Exact inverse of ``decode_center`` followed by ``decode_translation``."""
    if not t.Z > 0:
        raise ValueError("translation must be in front of the camera")
    if not (roi.w > 0 and roi.h > 0):
        raise ValueError("degenerate ROI")
    px = K.f * t.X / t.Z
    py = K.f * t.Y / t.Z
    rx = (px + K.cx - roi.bx) / roi.w
    ry = (py + K.cy - roi.by) / roi.h
    return TranslationCode(sigmoid(rx), sigmoid(ry), t.range)


def orientation_correction(t: Translation) -> tuple:
    """(pan, tilt) in radians: (atan(X/Z), -atan(Y/Z))."""
    if not t.Z > 0:
        raise ValueError("translation must be in front of the camera")
    return math.atan(t.X / t.Z), -math.atan(t.Y / t.Z)


def ray_rotation(t: Translation) -> Quaternion:
    """Rotation carrying the centred (apparent) frame onto the viewing ray of ``t``."""
    pan, tilt = orientation_correction(t)
    return quat_mul(rot_y(pan), rot_x(tilt))


def apparent_to_true(q_apparent: Quaternion, t: Translation) -> Quaternion:
    return quat_mul(ray_rotation(t), q_apparent)


def true_to_apparent(q_true: Quaternion, t: Translation) -> Quaternion:
    return quat_mul(ray_rotation(t).conjugate(), q_true)


def qloss(q_pred: Quaternion, q: Quaternion, eps: float = QLOSS_EPS) -> float:
    """log(eps + 1 - |q_pred . q|); bottoms out at log(eps) for q_pred = ±q."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    a, b = q_pred.as_array(), q.as_array()
    # 1 - |a.b| written as min |a -+ b|^2 / 2: exactly zero when a = ±b.
    gap = min(np.sum((a - b) ** 2), np.sum((a + b) ** 2)) / 2.0
    return math.log(eps + gap)
