"""Viewpoint banks: silhouettes rendered at the class render distance."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Quaternion, quat_mul, rot_x, rot_z
from .mesh import RENDER_MARGIN, TriangleMesh, icosphere_points, render_distance
from .raster import DEFAULT_RESOLUTION, SilhouetteMask, rasterize_silhouette, read_pgm, write_pgm

MANIFEST_NAME = "bank.json"


class ViewpointBank:
    """Immutable set of (orientation, silhouette) templates for one class.

    ``mesh`` and ``camera`` are kept when known so the estimator can
    re-render candidates during refinement.
    """

    def __init__(self, class_id, distance, quaternions, masks, camera=None, mesh=None):
        q = np.array(quaternions, dtype=float).reshape(-1, 4)
        m = np.array(masks, dtype=bool)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("bank masks must be an (N, R, R) array")
        if len(q) != len(m):
            raise ValueError("one quaternion per mask required")
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            q /= norms
        q.flags.writeable = False
        m.flags.writeable = False
        self.class_id = str(class_id)
        self.distance = float(distance)
        self.quaternions = q
        self.masks = m
        self.camera = camera
        self.mesh = mesh
        self._flat = None

    def __len__(self):
        return len(self.masks)

    @property
    def resolution(self) -> int:
        return self.masks.shape[1]

    def quaternion(self, i: int) -> Quaternion:
        return Quaternion.from_array(self.quaternions[i])

    def mask(self, i: int) -> SilhouetteMask:
        return SilhouetteMask(self.masks[i])

    @property
    def entries(self) -> list:
        return [(self.quaternion(i), self.mask(i)) for i in range(len(self))]

    def flat(self) -> np.ndarray:
        """(N, R*R) float32 view used for batched intersection counts."""
        if self._flat is None:
            # Publish counts before the flag field; eval threads share banks.
            flat = self.masks.reshape(len(self), -1).astype(np.float32)
            self._counts = flat.sum(axis=1)
            self._flat = flat
        return self._flat

    def scores(self, sil: SilhouetteMask) -> np.ndarray:
        """IoU of ``sil`` against every template."""
        if sil.shape != self.masks.shape[1:]:
            raise ValueError(f"silhouette {sil.shape} does not match bank resolution {self.resolution}")
        flat = self.flat()
        s = sil.bits.reshape(-1).astype(np.float32)
        inter = (flat @ s).astype(np.float64)
        union = self._counts.astype(np.float64) + s.sum() - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)


def _render_all(mesh, K, distance, quats, resolution):
    return np.stack([rasterize_silhouette(mesh, q, K, distance, resolution).bits for q in quats])


def grid_orientations(azimuth_step: float = 60.0, elevations=(-30.0, 30.0)) -> list:
    """Elevation ∘ azimuth: azimuth about object +z, then elevation about camera x."""
    if azimuth_step <= 0 or abs(360.0 / azimuth_step - round(360.0 / azimuth_step)) > 1e-9:
        raise ValueError("azimuth step must divide 360")
    n_az = int(round(360.0 / azimuth_step))
    return [
        quat_mul(rot_x(math.radians(el)), rot_z(math.radians(k * azimuth_step)))
        for el in elevations
        for k in range(n_az)
    ]


def generate_bank(
    mesh: TriangleMesh,
    K: CameraIntrinsics,
    azimuth_step: float = 60.0,
    elevations=(-30.0, 30.0),
    resolution: int = DEFAULT_RESOLUTION,
    class_id: str = "object",
    margin: float = RENDER_MARGIN,
) -> ViewpointBank:
    """Azimuth/elevation grid; the defaults give the 12-view set."""
    r = render_distance(mesh.extent, K.min_fov, margin)
    quats = grid_orientations(azimuth_step, elevations)
    return ViewpointBank(
        class_id, r, [q.as_array() for q in quats], _render_all(mesh, K, r, quats, resolution), K, mesh
    )


def _align_to_camera(d: np.ndarray) -> Quaternion:
    # Minimal rotation taking object-frame direction d onto -z (towards the camera).
    target = np.array([0.0, 0.0, -1.0])
    c = float(d @ target)
    if c < -1 + 1e-12:
        return rot_x(math.pi)
    axis = np.cross(d, target)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return Quaternion.identity()
    return Quaternion.from_axis_angle(axis / s, math.atan2(s, c))


def sphere_orientations(level: int = 2, inplane: int = 24) -> list:
    """View directions from a subdivided icosahedron times evenly spaced
    in-plane rotations about the optical axis (162 x 24 = 3888 at defaults)."""
    dirs, _ = icosphere_points(level)
    spins = [rot_z(2 * math.pi * k / inplane) for k in range(inplane)]
    return [quat_mul(s, _align_to_camera(d)) for d in dirs for s in spins]


def generate_sphere_bank(
    mesh: TriangleMesh,
    K: CameraIntrinsics,
    level: int = 2,
    inplane: int = 24,
    resolution: int = DEFAULT_RESOLUTION,
    class_id: str = "object",
    margin: float = RENDER_MARGIN,
) -> ViewpointBank:
    r = render_distance(mesh.extent, K.min_fov, margin)
    quats = sphere_orientations(level, inplane)
    return ViewpointBank(
        class_id, r, [q.as_array() for q in quats], _render_all(mesh, K, r, quats, resolution), K, mesh
    )


# ---------------------------------------------------------------- disk format


def save_bank(bank: ViewpointBank, out_dir) -> Path:
    """Write ``<class>_<index>.pgm`` masks plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(len(bank)):
        name = f"{bank.class_id}_{i:04d}.pgm"
        write_pgm(out / name, bank.mask(i))
        entries.append({"quaternion": [float(c) for c in bank.quaternions[i]], "mask": name})
    manifest = {
        "class_id": bank.class_id,
        "render_distance": bank.distance,
        "resolution": bank.resolution,
        "camera": bank.camera.to_dict() if bank.camera is not None else None,
        "entries": entries,
    }
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def load_bank(path, mesh: TriangleMesh | None = None) -> ViewpointBank:
    """Load a bank from its manifest (or the directory holding it)."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = json.loads(path.read_text(encoding="utf-8"))
    masks = [read_pgm(path.parent / e["mask"]).bits for e in data["entries"]]
    if any(m.shape != (data["resolution"],) * 2 for m in masks):
        raise ValueError(f"{path}: mask resolution differs from manifest")
    camera = CameraIntrinsics.from_dict(data["camera"]) if data.get("camera") else None
    return ViewpointBank(
        data["class_id"], data["render_distance"], [e["quaternion"] for e in data["entries"]], masks, camera, mesh
    )
