"""Evaluation metrics: silhouette IoU, symmetry-reduced orientation error,
translation error, ADD-S and its accuracy-threshold AUC."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Quaternion, RigidTransform
from .raster import SilhouetteMask, mask_iou
from .symmetry import SymmetryGroup, sym_angle

ADDS_MAX_THRESHOLD = 0.10
CURVE_STEPS = 100
BRUTE_FORCE_LIMIT = 5000

REPORT_COLUMNS = ("class", "n_frames", "mean_iou_unocc", "mean_iou_occ", "mean_angle_deg", "mean_trans_cm", "adds_auc")


def iou(a: SilhouetteMask, b: SilhouetteMask) -> float:
    return mask_iou(a, b)


def angular_error_deg(est: Quaternion, gt: Quaternion, g: SymmetryGroup = SymmetryGroup()) -> float:
    return math.degrees(sym_angle(est, gt, g))


def translation_error_cm(est, gt) -> float:
    a = est.as_array() if hasattr(est, "as_array") else np.asarray(est, dtype=float)
    b = gt.as_array() if hasattr(gt, "as_array") else np.asarray(gt, dtype=float)
    return float(np.linalg.norm(a - b)) * 100.0


def _nearest_brute(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    out = np.empty(len(query))
    # Chunked to bound the (n, m) distance matrix.
    for s in range(0, len(query), 1024):
        q = query[s : s + 1024]
        d2 = ((q[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
        out[s : s + 1024] = np.sqrt(d2.min(axis=1))
    return out


def nearest_distances(query: np.ndarray, ref: np.ndarray, method: str = "auto") -> np.ndarray:
    """Distance from every query point to its closest reference point."""
    if method == "auto":
        method = "brute" if len(ref) <= BRUTE_FORCE_LIMIT else "tree"
    if method == "brute":
        return _nearest_brute(query, ref)
    d, _ = cKDTree(ref).query(query, k=1)
    return d


def add_s(est: RigidTransform, gt: RigidTransform, points, method: str = "auto") -> float:
    """Mean closest-point distance between the model under ``est`` and under ``gt``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("ADD-S needs a non-empty point set")
    return float(nearest_distances(est.apply(pts), gt.apply(pts), method).mean())


def add(est: RigidTransform, gt: RigidTransform, points) -> float:
    """Mean distance between corresponding model points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return float(np.linalg.norm(est.apply(pts) - gt.apply(pts), axis=1).mean())


def model_points(mesh, max_points: int | None = None, seed: int = 0) -> np.ndarray:
    """Mesh vertices, optionally subsampled without replacement."""
    v = np.asarray(mesh.vertices)
    if max_points is None or len(v) <= max_points:
        return v
    idx = np.sort(np.random.default_rng(seed).choice(len(v), max_points, replace=False))
    return v[idx]


@dataclass(frozen=True, eq=False)
class AccuracyCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    auc: float


def accuracy_auc(errors, max_threshold: float = ADDS_MAX_THRESHOLD, n_steps: int = CURVE_STEPS) -> AccuracyCurve:
    """Fraction of errors below each threshold in [0, max_threshold] and
    the trapezoidal area under that curve divided by ``max_threshold``.

    At threshold 0 the curve takes its right limit (fraction of errors
    equal to zero), so a perfect method scores exactly 1.
    """
    e = np.sort(np.asarray(errors, dtype=float))
    if len(e) == 0:
        raise ValueError("no errors to evaluate")
    if not max_threshold > 0:
        raise ValueError("max_threshold must be positive")
    if n_steps < 2:
        raise ValueError("need at least 2 thresholds")
    thresholds = np.linspace(0.0, max_threshold, n_steps)
    acc = np.searchsorted(e, thresholds, side="left") / len(e)
    acc[0] = np.searchsorted(e, 0.0, side="right") / len(e)
    area = float(np.sum((acc[1:] + acc[:-1]) * np.diff(thresholds)) / 2.0)
    return AccuracyCurve(thresholds, acc, area / max_threshold)


# ---------------------------------------------------------------- report rows


def format_report_csv(rows) -> str:
    """RFC-4180 CSV with the fixed report columns; rows are dicts."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row[k]) for k in REPORT_COLUMNS})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


class ReportSchemaError(ValueError):
    pass


def parse_report_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text, newline=""))
    missing = [c for c in REPORT_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ReportSchemaError(f"report CSV is missing column(s): {', '.join(missing)}")
    rows = []
    for line in reader:
        row = {"class": line["class"], "n_frames": int(line["n_frames"])}
        for k in REPORT_COLUMNS[2:]:
            row[k] = float(line[k])
        rows.append(row)
    return rows
