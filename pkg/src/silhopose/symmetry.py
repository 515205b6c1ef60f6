"""Proper-rotation symmetry groups of object silhouettes.

Five kinds are supported, all expressed in the symmetry-aligned object
frame and acting on the right of an orientation (``q ∘ s``, object frame):

    none        trivial group
    plane       {I, R(a, pi)}: a mirror plane realised as the half-turn
                about the in-plane axis ``a``
    two_planes  {I, R(a1, pi), R(a2, pi), R(a1 x a2, pi)}
    axis        {R(u, theta)} for every theta
    axis_plane  {R(u, theta)} and {R(u, theta) R(a, pi)}, with a perpendicular to u
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, DEFAULT_CAMERA, Quaternion, quat_angle, quat_mul
from .mesh import TriangleMesh, render_distance
from .raster import DEFAULT_RESOLUTION, mask_iou, rasterize_silhouette

KINDS = ("none", "plane", "two_planes", "axis", "axis_plane")
_N_AXES = {"none": 0, "plane": 1, "two_planes": 2, "axis": 1, "axis_plane": 2}
_TIE_DECIMALS = 10


@dataclass(frozen=True)
class SymmetryGroup:
    kind: str = "none"
    axes: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown symmetry kind {self.kind!r}; expected one of {KINDS}")
        axes = tuple(tuple(float(c) for c in np.asarray(a, dtype=float) / np.linalg.norm(a)) for a in self.axes)
        if len(axes) != _N_AXES[self.kind]:
            raise ValueError(f"symmetry kind {self.kind!r} needs {_N_AXES[self.kind]} axes, got {len(axes)}")
        if len(axes) == 2 and abs(np.dot(axes[0], axes[1])) > 1e-9:
            raise ValueError("symmetry axes must be perpendicular")
        object.__setattr__(self, "axes", axes)

    @property
    def continuous(self) -> bool:
        return self.kind in ("axis", "axis_plane")

    @property
    def spin_axis(self) -> np.ndarray:
        return np.array(self.axes[0])

    def discrete_elements(self) -> list:
        """Finite group (or, for continuous kinds, the coset representatives
        left after removing the spin about the axis). Identity first."""
        ident = Quaternion.identity()
        if self.kind in ("none", "axis"):
            return [ident]
        if self.kind == "plane":
            return [ident, Quaternion.from_axis_angle(self.axes[0], math.pi)]
        if self.kind == "axis_plane":
            return [ident, Quaternion.from_axis_angle(self.axes[1], math.pi)]
        a = Quaternion.from_axis_angle(self.axes[0], math.pi)
        b = Quaternion.from_axis_angle(self.axes[1], math.pi)
        return [ident, a, b, quat_mul(a, b)]

    def sample_elements(self, n_spin: int = 12) -> list:
        """All elements of a discrete group; for continuous kinds the spin
        is sampled at ``n_spin`` evenly spaced angles."""
        if not self.continuous:
            return self.discrete_elements()
        spins = [Quaternion.from_axis_angle(self.axes[0], 2 * math.pi * k / n_spin) for k in range(n_spin)]
        return [quat_mul(s, d) for d in self.discrete_elements() for s in spins]

    def random_element(self, rng: np.random.Generator) -> Quaternion:
        d = self.discrete_elements()[rng.integers(len(self.discrete_elements()))]
        if not self.continuous:
            return d
        return quat_mul(Quaternion.from_axis_angle(self.axes[0], rng.uniform(0, 2 * math.pi)), d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "axes": [list(a) for a in self.axes]}

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetryGroup":
        return cls(d.get("kind", "none"), tuple(tuple(a) for a in d.get("axes", ())))


def _standard_sign(q: Quaternion) -> Quaternion:
    for c in q.as_tuple():
        if c > 0:
            return q
        if c < 0:
            return -q
    return q


def _pick(candidates) -> Quaternion:
    # Largest w is nearest to identity; rounding keeps near-ties stable
    # across floating-point noise before the lexicographic tie-break.
    cands = [_standard_sign(q) for q in candidates]
    return max(cands, key=lambda q: tuple(round(c, _TIE_DECIMALS) for c in q.as_tuple()))


def _perpendicular(u: np.ndarray) -> np.ndarray:
    e = np.eye(3)[np.argmin(np.abs(u))]
    p = np.cross(u, e)
    return p / np.linalg.norm(p)


def swing(q: Quaternion, axis) -> Quaternion:
    """Remove the twist of ``q`` about object-frame ``axis``.

    Writes ``q = swing ∘ twist`` with ``twist`` a rotation about ``axis``
    and returns ``swing``, whose rotation axis is perpendicular to ``axis``.
    """
    u = np.asarray(axis, dtype=float)
    proj = q.x * u[0] + q.y * u[1] + q.z * u[2]
    n = math.hypot(q.w, proj)
    if n < 1e-12:
        # Half-turn about an axis perpendicular to u: every spin gives another
        # such half-turn, so pin one fixed perpendicular axis.
        p = _perpendicular(u)
        return Quaternion(0.0, *p)
    twist = Quaternion(q.w / n, *(proj / n * u))
    return quat_mul(q, twist.conjugate())


def canonicalize(q: Quaternion, g: SymmetryGroup) -> Quaternion:
    """Unique representative of ``{q ∘ s : s in g}``.

    Discrete groups pick the element nearest the identity (largest w, ties
    broken lexicographically on (w, x, y, z) with w >= 0). Continuous axes
    zero the spin in closed form via swing-twist.
    """
    if g.kind == "none":
        return _standard_sign(q)
    if not g.continuous:
        return _pick(quat_mul(q, s) for s in g.discrete_elements())
    return _pick(swing(quat_mul(q, s), g.axes[0]) for s in g.discrete_elements())


def _spin_free_angle(d: Quaternion, u) -> float:
    # min over theta of angle(d ∘ R(u, theta)) = 2 atan2(|v_perp|, hypot(w, v.u))
    v = np.array([d.x, d.y, d.z])
    along = float(v @ u)
    perp = float(np.linalg.norm(v - along * np.asarray(u)))
    return 2.0 * math.atan2(perp, math.hypot(d.w, along))


def sym_angle(a: Quaternion, b: Quaternion, g: SymmetryGroup) -> float:
    """Smallest geodesic angle between ``a`` and any ``b ∘ s``, s in g."""
    if g.kind == "none":
        return quat_angle(a, b)
    if not g.continuous:
        return min(quat_angle(a, quat_mul(b, s)) for s in g.discrete_elements())
    d = quat_mul(a.conjugate(), b)
    u = g.spin_axis
    return min(_spin_free_angle(quat_mul(d, s), u) for s in g.discrete_elements())


# ---------------------------------------------------------------- validation


class SymmetryViolation(AssertionError):
    def __init__(self, message, orientation=None, element=None, iou=None):
        super().__init__(message)
        self.orientation = orientation
        self.element = element
        self.iou = iou


@dataclass
class ValidationReport:
    passed: bool
    worst_iou: float
    worst_orientation: Quaternion | None = None
    worst_element: Quaternion | None = None
    n_checks: int = 0
    threshold: float = 0.99

    def raise_for_failure(self):
        if not self.passed:
            raise SymmetryViolation(
                f"silhouette IoU {self.worst_iou:.4f} < {self.threshold} at q={self.worst_orientation.as_tuple()}, "
                f"s={self.worst_element.as_tuple()}",
                self.worst_orientation,
                self.worst_element,
                self.worst_iou,
            )
        return self


def validate_group(
    mesh: TriangleMesh,
    g: SymmetryGroup,
    n_samples: int = 20,
    K: CameraIntrinsics = DEFAULT_CAMERA,
    resolution: int = DEFAULT_RESOLUTION,
    threshold: float = 0.99,
    seed: int = 0,
    strict: bool = False,
) -> ValidationReport:
    """Check that every (sampled) group element leaves the silhouette
    unchanged: IoU(rasterize(q), rasterize(q ∘ s)) >= threshold for
    ``n_samples`` random orientations ``q``."""
    rng = np.random.default_rng(seed)
    r = render_distance(mesh.extent, K.min_fov)
    elements = g.sample_elements(7)[1:] if g.continuous else g.discrete_elements()[1:]
    if g.continuous:
        # Also probe off-grid spins so a finite subgroup cannot pass by accident.
        elements += [g.random_element(rng) for _ in range(3)]
    report = ValidationReport(True, 1.0, threshold=threshold)
    for _ in range(n_samples):
        q = Quaternion.random(rng)
        base = rasterize_silhouette(mesh, q, K, r, resolution)
        for s in elements:
            score = mask_iou(base, rasterize_silhouette(mesh, quat_mul(q, s), K, r, resolution))
            report.n_checks += 1
            if score < report.worst_iou:
                report.worst_iou = score
                report.worst_orientation, report.worst_element = q, s
    report.passed = report.worst_iou >= threshold
    if strict:
        report.raise_for_failure()
    return report


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class SymmetryAlignment:
    """Rotation taking the raw model frame to the symmetry-aligned frame."""

    correction: Quaternion = field(default_factory=Quaternion.identity)

    def apply(self, mesh: TriangleMesh) -> TriangleMesh:
        return mesh.transformed(self.correction)


def parse_symmetry_config(data: dict) -> dict:
    """``{class_id: {"kind", "axes", "alignment": [w, x, y, z]}}`` ->
    ``{class_id: (SymmetryGroup, SymmetryAlignment)}``."""
    out = {}
    for cls, entry in data.items():
        align = entry.get("alignment")
        correction = Quaternion.from_array(align) if align is not None else Quaternion.identity()
        out[cls] = (SymmetryGroup.from_dict(entry), SymmetryAlignment(correction))
    return out


def load_symmetry_config(path) -> dict:
    return parse_symmetry_config(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_symmetry_config(config: dict) -> str:
    data = {
        cls: {**g.to_dict(), "alignment": list(a.correction.as_tuple())}
        for cls, (g, a) in sorted(config.items())
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
