"""Software z-buffer rasterizer, binary silhouettes and mask I/O.

A pixel is covered by a triangle iff its centre lies inside the projected
triangle. Centres exactly on an edge are resolved by a half-open rule on the
edge direction (after orienting every triangle counter-clockwise in pixel
space), so two triangles sharing an edge never both claim a pixel on it.
Silhouettes are rendered at a supersampled resolution and reduced by
block-averaging with a >= 50 % coverage threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

from .geometry import CameraIntrinsics, Quaternion, RigidTransform, Roi
from .mesh import TriangleMesh

DEFAULT_RESOLUTION = 64
RENDER_RESOLUTION = 256


@numba.njit(cache=True, nogil=True)
def _owns_edge(ax, ay, bx, by):
    dy = by - ay
    return dy > 0 or (dy == 0 and bx - ax < 0)


@numba.njit(cache=True, nogil=True)
def _zbuffer(u, v, invz, tris, buf):
    """Rasterize into ``buf`` holding 1/depth (0 = empty, larger = nearer)."""
    height, width = buf.shape
    for k in range(tris.shape[0]):
        a, b, c = tris[k, 0], tris[k, 1], tris[k, 2]
        x0, y0, z0 = u[a], v[a], invz[a]
        x1, y1, z1 = u[b], v[b], invz[b]
        x2, y2, z2 = u[c], v[c], invz[c]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            x1, y1, z1, x2, y2, z2 = x2, y2, z2, x1, y1, z1
            area = -area
        j0 = max(0, int(math.ceil(min(x0, x1, x2))))
        j1 = min(width - 1, int(math.floor(max(x0, x1, x2))))
        i0 = max(0, int(math.ceil(min(y0, y1, y2))))
        i1 = min(height - 1, int(math.floor(max(y0, y1, y2))))
        if j0 > j1 or i0 > i1:
            continue
        own0 = _owns_edge(x1, y1, x2, y2)
        own1 = _owns_edge(x2, y2, x0, y0)
        own2 = _owns_edge(x0, y0, x1, y1)
        inv_area = 1.0 / area
        for i in range(i0, i1 + 1):
            py = float(i)
            for j in range(j0, j1 + 1):
                px = float(j)
                e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                if e0 < 0.0 or (e0 == 0.0 and not own0):
                    continue
                e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                if e1 < 0.0 or (e1 == 0.0 and not own1):
                    continue
                e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                if e2 < 0.0 or (e2 == 0.0 and not own2):
                    continue
                iz = (e0 * z0 + e1 * z1 + e2 * z2) * inv_area
                if iz > buf[i, j]:
                    buf[i, j] = iz


@dataclass(frozen=True, eq=False)
class DepthMap:
    depth: np.ndarray  # (H, W) metres, inf where empty

    @property
    def occupancy(self) -> np.ndarray:
        return np.isfinite(self.depth)

    @property
    def shape(self) -> tuple:
        return self.depth.shape


@dataclass(frozen=True, eq=False)
class SilhouetteMask:
    bits: np.ndarray  # (H, W) bool, row-major

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError("mask must be 2-D")
        if b.dtype != bool:
            if not np.isin(b, (0, 1)).all():
                raise ValueError("mask cells must be 0 or 1")
            b = b.astype(bool)
        b = np.ascontiguousarray(b)
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def resolution(self) -> int:
        h, w = self.bits.shape
        if h != w:
            raise ValueError(f"mask is not square: {w}x{h}")
        return h

    @property
    def shape(self) -> tuple:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def degenerate(self) -> bool:
        """True for an all-zero mask (nothing projected onto a pixel)."""
        return not self.bits.any()

    def __eq__(self, other):
        if not isinstance(other, SilhouetteMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None


def mask_iou(a: SilhouetteMask, b: SilhouetteMask) -> float:
    """Intersection over union; two empty masks score 1.0."""
    if a.shape != b.shape:
        raise ValueError(f"mask resolution mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def _camera_points(mesh: TriangleMesh, pose: RigidTransform) -> np.ndarray:
    p = pose.apply(mesh.vertices)
    if np.any(p[:, 2] <= 0):
        raise ValueError("mesh extends behind the camera")
    return p


def render_inverse_depth(mesh: TriangleMesh, pose: RigidTransform, K: CameraIntrinsics, buf=None) -> np.ndarray:
    """Z-buffer pass returning 1/depth; pass ``buf`` to composite several meshes."""
    p = _camera_points(mesh, pose)
    invz = 1.0 / p[:, 2]
    u = K.f * p[:, 0] * invz + K.cx
    v = K.f * p[:, 1] * invz + K.cy
    if buf is None:
        buf = np.zeros((K.height, K.width))
    _zbuffer(u, v, invz, mesh.triangles, buf)
    return buf


def _to_depth(buf: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(buf > 0, 1.0 / np.where(buf > 0, buf, 1.0), np.inf)


def render_depth(mesh: TriangleMesh, pose: RigidTransform, K: CameraIntrinsics, resolution=None) -> DepthMap:
    """Nearest-surface depth per pixel over the full sensor of ``K``.

    ``resolution`` optionally rescales the sensor to (width, height); the
    aspect ratio must be preserved.
    """
    if resolution is not None:
        width, height = resolution
        scale = width / K.width
        if abs(height / K.height - scale) > 1e-9:
            raise ValueError("resolution must preserve the sensor aspect ratio")
        K = CameraIntrinsics(K.f * scale, (K.cx + 0.5) * scale - 0.5, (K.cy + 0.5) * scale - 0.5, width, height)
    return DepthMap(_to_depth(render_inverse_depth(mesh, pose, K)))


def downsample(occ: np.ndarray, factor: int) -> np.ndarray:
    """Block-average reduction with a >= 50 % coverage threshold."""
    if factor == 1:
        return occ.copy()
    h, w = occ.shape
    blocks = occ.reshape(h // factor, factor, w // factor, factor)
    return blocks.sum(axis=(1, 3)) * 2 >= factor * factor


def supersampling(resolution: int, render_resolution: int = RENDER_RESOLUTION) -> int:
    return max(1, -(-render_resolution // resolution))


def render_mask(
    mesh: TriangleMesh,
    pose: RigidTransform,
    K: CameraIntrinsics,
    resolution: int = DEFAULT_RESOLUTION,
    render_resolution: int = RENDER_RESOLUTION,
) -> SilhouetteMask:
    """Silhouette of ``mesh`` at ``pose`` inside the centred square crop of ``K``."""
    if resolution < 8:
        raise ValueError("mask resolution must be at least 8")
    ss = supersampling(resolution, render_resolution)
    buf = render_inverse_depth(mesh, pose, K.crop(resolution * ss))
    return SilhouetteMask(downsample(buf > 0, ss))


def rasterize_silhouette(
    mesh: TriangleMesh,
    orientation: Quaternion,
    K: CameraIntrinsics,
    distance: float,
    resolution: int = DEFAULT_RESOLUTION,
    render_resolution: int = RENDER_RESOLUTION,
) -> SilhouetteMask:
    """Unoccluded silhouette of the mesh centred on the optical axis at ``distance``.

    A mesh too small or too far to cover any pixel yields an all-zero mask
    whose ``degenerate`` flag is set.
    """
    if not distance > 0:
        raise ValueError("render distance must be positive")
    pose = RigidTransform(orientation, (0.0, 0.0, distance))
    return render_mask(mesh, pose, K, resolution, render_resolution)


def crop_resize_mask(full_mask, roi: Roi, out_resolution: int) -> SilhouetteMask:
    """Crop ``roi`` from a mask (zero outside) and resample it bilinearly to
    ``out_resolution`` squared, thresholding the interpolated field at 0.5.

    ROI bounds use the same continuous pixel frame as projection: pixel k
    is centred on coordinate k, so a full ``W x H`` image is the ROI
    ``(-0.5, -0.5, W, H)``.
    """
    bits = full_mask.bits if isinstance(full_mask, SilhouetteMask) else np.asarray(full_mask, dtype=bool)
    steps = (np.arange(out_resolution) + 0.5) / out_resolution
    xs = roi.bx + steps * roi.w
    ys = roi.by + steps * roi.h
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    field = ndimage.map_coordinates(bits.astype(float), [yy, xx], order=1, mode="constant", cval=0.0)
    return SilhouetteMask(field >= 0.5)


# ---------------------------------------------------------------- PGM I/O


def encode_pgm(mask: SilhouetteMask) -> bytes:
    h, w = mask.shape
    header = b"P5\n%d %d\n255\n" % (w, h)
    return header + (mask.bits.astype(np.uint8) * 255).tobytes()


def decode_pgm(data: bytes, source: str = "<bytes>") -> SilhouetteMask:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{source}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or tokens[3] != b"255":
        raise ValueError(f"{source}: expected an 8-bit binary PGM (P5, maxval 255)")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    if not np.isin(pixels, (0, 255)).all():
        raise ValueError(f"{source}: mask pixels must be exactly 0 or 255")
    return SilhouetteMask(pixels.reshape(h, w) == 255)


def write_pgm(path, mask: SilhouetteMask) -> None:
    Path(path).write_bytes(encode_pgm(mask))


def read_pgm(path) -> SilhouetteMask:
    return decode_pgm(Path(path).read_bytes(), source=str(path))
