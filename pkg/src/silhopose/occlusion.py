"""Occlusion masks for synthetic scenes and model-vertex visibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import Translation, ray_rotation, true_to_apparent
from .geometry import CameraIntrinsics, Quaternion, RigidTransform
from .mesh import TriangleMesh, render_distance
from .raster import (
    DEFAULT_RESOLUTION,
    RENDER_RESOLUTION,
    SilhouetteMask,
    downsample,
    render_mask,
    render_inverse_depth,
    supersampling,
)

# Same grid and semantics as a silhouette: the visible part only.
OcclusionMask = SilhouetteMask


@dataclass(frozen=True, eq=False)
class SceneObject:
    mesh: TriangleMesh
    pose: RigidTransform
    class_id: str = ""

    @property
    def translation(self) -> Translation:
        return Translation(*self.pose.translation)


@dataclass(frozen=True, eq=False)
class VisibilityReport:
    visible: np.ndarray  # (N,) bool per vertex

    @property
    def fraction(self) -> float:
        return float(np.mean(self.visible)) if len(self.visible) else 0.0


def occluder_inverse_depth(occluders, K: CameraIntrinsics) -> np.ndarray:
    buf = np.zeros((K.height, K.width))
    for obj in occluders:
        render_inverse_depth(obj.mesh, obj.pose, K, buf)
    return buf


def scene_masks(
    target: SceneObject,
    occluders,
    K: CameraIntrinsics,
    resolution: int = DEFAULT_RESOLUTION,
    distance: float | None = None,
    render_resolution: int = RENDER_RESOLUTION,
) -> tuple:
    """Unoccluded silhouette and occlusion mask of ``target``, both in the
    centred frame (apparent orientation, render distance on the optical axis).

    Each covered pixel of the centred render is lifted to its surface point,
    carried back into the real scene along the viewing ray and tested
    against the occluders' z-buffer in the real camera. Points that leave
    the sensor count as hidden, so a target fully out of frame gets an
    all-zero (``degenerate``) occlusion mask.
    """
    r = distance if distance is not None else render_distance(target.mesh.extent, K.min_fov)
    t = target.translation
    q_app = true_to_apparent(target.pose.rotation, t)

    ss = supersampling(resolution, render_resolution)
    Kc = K.crop(resolution * ss)
    centred = render_inverse_depth(target.mesh, RigidTransform(q_app, (0.0, 0.0, r)), Kc)
    covered = centred > 0

    rows, cols = np.nonzero(covered)
    z = 1.0 / centred[rows, cols]
    pts = np.column_stack([(cols - Kc.cx) / Kc.f * z, (rows - Kc.cy) / Kc.f * z, z - r])
    real = ray_rotation(t).rotate(pts) + t.as_array()

    u = np.floor(K.f * real[:, 0] / real[:, 2] + K.cx + 0.5).astype(np.int64)
    v = np.floor(K.f * real[:, 1] / real[:, 2] + K.cy + 0.5).astype(np.int64)
    inside = (real[:, 2] > 0) & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    seen = np.zeros(len(z), dtype=bool)
    if occluders:
        occ_buf = occluder_inverse_depth(occluders, K)
        seen[inside] = occ_buf[v[inside], u[inside]] < 1.0 / real[inside, 2]
    else:
        seen = inside
    visible = np.zeros_like(covered)
    visible[rows[seen], cols[seen]] = True
    return SilhouetteMask(downsample(covered, ss)), SilhouetteMask(downsample(visible, ss))


def mask_cells(points_px: np.ndarray, K: CameraIntrinsics, resolution: int) -> np.ndarray:
    """Map full-image pixel coordinates to (row, col) cells of a mask
    scaled up to the centred ``min(width, height)`` square. A point on a
    cell boundary belongs to the cell holding its floor coordinate."""
    scale = resolution / K.crop_side
    edge_u = (points_px[:, 0] - K.cx) * scale + resolution / 2.0
    edge_v = (points_px[:, 1] - K.cy) * scale + resolution / 2.0
    return np.column_stack([np.floor(edge_v), np.floor(edge_u)]).astype(np.int64)


def vertex_visibility(
    mesh: TriangleMesh, q_apparent: Quaternion, occ: SilhouetteMask, K: CameraIntrinsics, r: float
) -> VisibilityReport:
    """Vertices whose projection ``K T v`` (T = apparent rotation, z shift
    ``r``) falls on the occlusion mask. Self-occlusion is ignored.

    Rim vertices can project just outside the discretized silhouette; those
    take the value of any mask cell in their 3x3 neighbourhood. Projections
    beyond that count as occluded.
    """
    cam = RigidTransform(q_apparent, (0.0, 0.0, r)).apply(mesh.vertices)
    if np.any(cam[:, 2] <= 0):
        raise ValueError("vertex behind camera")
    gamma = (K.K @ cam.T).T
    px = gamma[:, :2] / gamma[:, 2:3]
    res_h, res_w = occ.shape
    cells = mask_cells(px, K, res_w)
    sil = render_mask(mesh, RigidTransform(q_apparent, (0.0, 0.0, r)), K, res_w).bits

    def lookup(bits, rc):
        ok = (rc[:, 0] >= 0) & (rc[:, 0] < res_h) & (rc[:, 1] >= 0) & (rc[:, 1] < res_w)
        out = np.zeros(len(rc), dtype=bool)
        out[ok] = bits[rc[ok, 0], rc[ok, 1]]
        return out

    on_sil = lookup(sil, cells)
    visible = lookup(occ.bits, cells)
    rim = ~on_sil
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            visible[rim] |= lookup(occ.bits, cells[rim] + (dr, dc))
    return VisibilityReport(visible)
