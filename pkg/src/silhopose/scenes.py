"""Synthetic scenes: random target pose, optional occluders, ground-truth
masks, ROIs and translation codes."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import Translation, encode_translation
from .geometry import CameraIntrinsics, Quaternion, RigidTransform, Roi, project_points
from .mesh import TriangleMesh, render_distance
from .occlusion import SceneObject, scene_masks
from .raster import DEFAULT_RESOLUTION

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 100
RANGE_LIMITS = (0.6, 1.2)  # metres from the camera centre
IMAGE_MARGIN = 0.15  # fraction of the sensor kept clear when aiming the target


@dataclass
class Scene:
    index: int
    target: SceneObject
    occluders: list
    roi: Roi
    pred_roi: Roi
    distance: float
    silhouette: object = None
    occlusion: object = None


def tight_roi(mesh: TriangleMesh, pose: RigidTransform, K: CameraIntrinsics) -> Roi:
    px = project_points(K, pose, mesh.vertices)
    lo, hi = px.min(axis=0), px.max(axis=0)
    return Roi(float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))


def jitter_roi(roi: Roi, sigma: float, rng: np.random.Generator) -> Roi:
    """Gaussian noise on both corners; keeps at least one pixel of size."""
    if sigma <= 0:
        return roi
    x0, y0, x1, y1 = np.array([roi.bx, roi.by, roi.bx + roi.w, roi.by + roi.h]) + rng.normal(0, sigma, 4)
    x1, y1 = max(x1, x0 + 1.0), max(y1, y0 + 1.0)
    return Roi(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def roi_iou(a: Roi, b: Roi) -> float:
    ix = max(0.0, min(a.bx + a.w, b.bx + b.w) - max(a.bx, b.bx))
    iy = max(0.0, min(a.by + a.h, b.by + b.h) - max(a.by, b.by))
    inter = ix * iy
    return inter / (a.w * a.h + b.w * b.h - inter)


def _in_frame(mesh, pose, K) -> bool:
    try:
        px = project_points(K, pose, mesh.vertices)
    except ValueError:
        return False
    return bool(np.all(px >= 0) and np.all(px[:, 0] <= K.width - 1) and np.all(px[:, 1] <= K.height - 1))


def _radius(mesh: TriangleMesh) -> float:
    return float(np.linalg.norm(mesh.vertices, axis=1).max())


def sample_scene(
    index: int,
    classes: dict,
    K: CameraIntrinsics,
    rng: np.random.Generator,
    n_occluders: int = 0,
    jitter: float = 0.0,
) -> Scene | None:
    """Rejection-sample one scene; ``classes`` maps class id -> mesh.

    Returns None when no valid placement is found in ``MAX_ATTEMPTS`` tries.
    """
    ids = sorted(classes)
    for _ in range(MAX_ATTEMPTS):
        cid = ids[rng.integers(len(ids))]
        mesh = classes[cid]
        q = Quaternion.random(rng)
        rho = rng.uniform(*RANGE_LIMITS)
        u = rng.uniform(IMAGE_MARGIN, 1 - IMAGE_MARGIN) * K.width
        v = rng.uniform(IMAGE_MARGIN, 1 - IMAGE_MARGIN) * K.height
        ray = np.array([(u - K.cx) / K.f, (v - K.cy) / K.f, 1.0])
        t = ray / np.linalg.norm(ray) * rho
        pose = RigidTransform(q, tuple(t))
        if not _in_frame(mesh, pose, K):
            continue
        target = SceneObject(mesh, pose, cid)
        occluders = []
        r_t = _radius(mesh)
        for _ in range(n_occluders):
            oid = ids[rng.integers(len(ids))]
            omesh = classes[oid]
            r_o = _radius(omesh)
            depth = rng.uniform(0.45, 0.8) * t[2]
            lateral = rng.normal(0.0, 0.6 * r_t * depth / t[2], 2)
            c = np.array([t[0] * depth / t[2] + lateral[0], t[1] * depth / t[2] + lateral[1], depth])
            if np.linalg.norm(c - t) <= r_t + r_o or c[2] - r_o <= 0.05:
                break
            occluders.append(SceneObject(omesh, RigidTransform(Quaternion.random(rng), tuple(c)), oid))
        if len(occluders) != n_occluders:
            continue
        roi = tight_roi(mesh, pose, K)
        pred = jitter_roi(roi, jitter, rng)
        r = render_distance(mesh.extent, K.min_fov)
        return Scene(index, target, occluders, roi, pred, r)
    log.warning("scene %d: no valid placement after %d attempts, skipped", index, MAX_ATTEMPTS)
    return None


def render_scene(scene: Scene, K: CameraIntrinsics, resolution: int = DEFAULT_RESOLUTION) -> Scene:
    scene.silhouette, scene.occlusion = scene_masks(scene.target, scene.occluders, K, resolution, scene.distance)
    return scene


def _pose_dict(obj: SceneObject, mesh_path: str) -> dict:
    return {
        "class_id": obj.class_id,
        "mesh": mesh_path,
        "rotation": list(obj.pose.rotation.as_tuple()),
        "translation": list(obj.pose.translation),
    }


def scene_record(scene: Scene, K: CameraIntrinsics, mesh_paths: dict, sil_name: str, occ_name: str) -> dict:
    t = Translation(*scene.target.pose.translation)
    return {
        "scene": scene.index,
        "camera": K.to_dict(),
        "objects": [_pose_dict(o, mesh_paths[o.class_id]) for o in [scene.target, *scene.occluders]],
        "target": 0,
        "render_distance": scene.distance,
        "roi": scene.roi.as_list(),
        "pred_roi": scene.pred_roi.as_list(),
        "code": encode_translation(t, scene.roi, K).as_list(),
        "pred_code": encode_translation(t, scene.pred_roi, K).as_list(),
        "silhouette": sil_name,
        "occlusion": occ_name,
        "occlusion_empty": bool(scene.occlusion.degenerate),
    }


def pose_from_record(obj: dict) -> RigidTransform:
    return RigidTransform(Quaternion.from_array(obj["rotation"]), tuple(obj["translation"]))


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
