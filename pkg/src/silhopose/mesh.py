"""Triangle meshes: OBJ subset I/O, primitive generators, render distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

# Margin factor on the bounding-box diagonal.
RENDER_MARGIN = 1.05


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (N, 3) float, metres
    triangles: np.ndarray  # (M, 3) int

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def extent(self) -> tuple:
        e = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return tuple(float(c) for c in e)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.extent))

    def transformed(self, rotation=None, scale: float = 1.0, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        v = self.vertices if rotation is None else rotation.rotate(self.vertices)
        return TriangleMesh(v * scale + np.asarray(offset, dtype=float), self.triangles)

    def centered(self) -> "TriangleMesh":
        """Shift so the bounding-box centre is the origin."""
        mid = (self.vertices.max(axis=0) + self.vertices.min(axis=0)) / 2
        return TriangleMesh(self.vertices - mid, self.triangles)


def render_distance(extent, min_fov: float, margin: float = RENDER_MARGIN) -> float:
    """Distance at which an object of bounding-box ``extent`` (w, h, d) is
    rendered so its silhouette fits the frame in every orientation.

    The fit is guaranteed for meshes centred on their bounding box when
    ``tan(min_fov / 2) <= sqrt(margin**2 - 1)``, about 35.5 degrees of field of
    view at the default margin; wider cameras can clip near-side corners
    because of perspective magnification.
    """
    w, h, d = (float(c) for c in extent)
    if min(w, h, d) <= 0:
        raise ValueError(f"extent must be positive, got {extent}")
    if not 0 < min_fov < math.pi:
        raise ValueError(f"field of view must lie in (0, pi), got {min_fov}")
    return margin * math.sqrt(w * w + h * h + d * d) / (2.0 * math.tan(min_fov / 2.0))


# ---------------------------------------------------------------- OBJ I/O


def parse_obj(text: str, source: str = "<string>") -> TriangleMesh:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated and every
    other directive is ignored. Face indices may be negative (relative)
    and may carry ``/vt/vn`` suffixes."""
    vertices = []
    triangles = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split("#", 1)[0].split()
        if not fields:
            continue
        try:
            if fields[0] == "v":
                vertices.append([float(c) for c in fields[1:4]])
                if len(vertices[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif fields[0] == "f":
                idx = []
                for token in fields[1:]:
                    i = int(token.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    triangles.append((idx[0], idx[k], idx[k + 1]))
        except ValueError as exc:
            raise MeshError(f"{source}:{lineno}: {exc}") from None
    if not vertices:
        raise MeshError(f"{source}: no vertices")
    try:
        return TriangleMesh(np.array(vertices), np.array(triangles, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshError(f"{source}: {exc}") from None


def load_obj(path) -> TriangleMesh:
    path = Path(path)
    return parse_obj(path.read_text(encoding="utf-8"), source=str(path))


def format_obj(mesh: TriangleMesh) -> str:
    lines = ["v %.9g %.9g %.9g" % tuple(v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(t + 1) for t in mesh.triangles]
    return "\n".join(lines) + "\n"


def save_obj(mesh: TriangleMesh, path) -> None:
    Path(path).write_text(format_obj(mesh), encoding="utf-8")


# ---------------------------------------------------------------- primitives


def box(w: float, h: float, d: float, subdivisions: int = 1) -> TriangleMesh:
    """Axis-aligned cuboid centred at the origin; each face is an
    ``subdivisions x subdivisions`` grid of quads."""
    n = int(subdivisions)
    half = np.array([w, h, d], dtype=float) / 2
    s = np.linspace(-1.0, 1.0, n + 1)
    uu, vv = np.meshgrid(s, s, indexing="ij")
    verts = []
    tris = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        for sign in (-1.0, 1.0):
            p = np.zeros((n + 1, n + 1, 3))
            p[..., axis] = sign
            p[..., a] = uu
            p[..., b] = vv
            base = sum(len(x) for x in verts)
            verts.append(p.reshape(-1, 3) * half)
            for i in range(n):
                for j in range(n):
                    v00 = base + i * (n + 1) + j
                    v10, v01, v11 = v00 + n + 1, v00 + 1, v00 + n + 2
                    tris += [(v00, v10, v11), (v00, v11, v01)]
    v = np.vstack(verts)
    # Merge the duplicated vertices along shared edges.
    v, inverse = np.unique(np.round(v, 12), axis=0, return_inverse=True)
    t = inverse.reshape(-1)[np.array(tris)]
    return TriangleMesh(v, t)


def cube(side: float = 1.0, subdivisions: int = 1) -> TriangleMesh:
    return box(side, side, side, subdivisions)


def cylinder(radius: float, height: float, segments: int = 64) -> TriangleMesh:
    """Closed cylinder about the z axis, centred at the origin."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    v = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i)]
        tris += [(cb, j, i), (ct, segments + i, segments + j)]
    return TriangleMesh(v, np.array(tris))


def icosphere(radius: float = 1.0, level: int = 2) -> TriangleMesh:
    """Subdivided icosahedron; level k has 10 * 4**k + 2 vertices."""
    v, t = icosphere_points(level)
    return TriangleMesh(v * radius, t)


def icosphere_points(level: int) -> tuple:
    """Unit-sphere vertices and faces of a subdivided icosahedron."""
    phi = (1 + math.sqrt(5)) / 2
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces)


def wedge(w: float, h: float, d: float) -> TriangleMesh:
    """Irregular convex hexahedron with no proper rotational symmetry,
    centred on its bounding box."""
    pts = np.array(
        [
            [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.3, -0.5], [-0.5, 0.5, -0.5],
            [-0.5, -0.5, 0.5], [0.1, -0.5, 0.5], [-0.2, 0.1, 0.5], [-0.5, 0.4, 0.5],
        ]
    )
    hull = ConvexHull(pts)
    tris = hull.simplices
    mesh = TriangleMesh(pts * np.array([w, h, d]), tris)
    return mesh.centered()
