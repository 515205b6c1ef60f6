"""Command-line harness: gen-bank, gen-scenes, eval, report.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input files, inconsistent class ids).
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .bank import generate_bank, generate_sphere_bank, load_bank, save_bank
from .codec import TranslationCode
from .estimator import assemble_pose, match_orientation
from .geometry import DEFAULT_CAMERA, CameraIntrinsics, Roi
from .mesh import MeshError, load_obj
from .raster import DEFAULT_RESOLUTION, SilhouetteMask, read_pgm, write_pgm
from .scenes import pose_from_record, read_json, render_scene, roi_iou, sample_scene, scene_record, write_json
from .symmetry import SymmetryAlignment, SymmetryGroup, dump_symmetry_config, load_symmetry_config

log = logging.getLogger("silhopose")

MANIFEST = "manifest.json"
NOISE_FLIP_FRACTION = 0.10
MAX_MODEL_POINTS = 3000


class DataError(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def _camera(path) -> CameraIntrinsics:
    if not path:
        return DEFAULT_CAMERA
    try:
        return CameraIntrinsics.from_dict(read_json(path))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"camera file {path}: {exc}") from None


def _load_mesh(path, alignment: SymmetryAlignment | None = None):
    try:
        mesh = load_obj(path)
    except OSError as exc:
        raise DataError(f"cannot read mesh {path}: {exc}") from None
    except MeshError as exc:
        raise DataError(str(exc)) from None
    return alignment.apply(mesh) if alignment is not None else mesh


def _symmetry(path) -> dict:
    if not path:
        return {}
    try:
        return load_symmetry_config(path)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"symmetry config {path}: {exc}") from None


def _mesh_args(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--mesh expects CLASS=PATH, got {item!r}")
        cid, path = item.split("=", 1)
        out[cid] = path
    return out


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _make_bank(mesh, K, args, class_id):
    if args.grid == "azel":
        return generate_bank(mesh, K, args.azimuth_step, _floats(args.elevations), args.resolution, class_id)
    return generate_sphere_bank(mesh, K, args.level, args.inplane, args.resolution, class_id)


# ---------------------------------------------------------------- gen-bank


def cmd_gen_bank(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    K = _camera(args.camera)
    sym = _symmetry(args.symmetry)
    alignment = sym[args.class_id][1] if args.class_id in sym else None
    mesh = _load_mesh(args.mesh, alignment)
    bank = _make_bank(mesh, K, args, args.class_id)
    path = save_bank(bank, args.out)
    log.info("wrote %d templates to %s", len(bank), path)
    return 0


# ---------------------------------------------------------------- gen-scenes


def cmd_gen_scenes(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    mesh_paths = _mesh_args(args.mesh)
    if not mesh_paths:
        raise UsageError("at least one --mesh CLASS=PATH is required")
    K = _camera(args.camera)
    sym = _symmetry(args.symmetry)
    out = Path(args.out)
    for sub in ("meshes", "scenes", "masks", "banks"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    config = {cid: sym.get(cid, (SymmetryGroup(), SymmetryAlignment())) for cid in mesh_paths}
    (out / "symmetry.json").write_text(dump_symmetry_config(config), encoding="utf-8")
    classes, rel_mesh = {}, {}
    for cid, src in sorted(mesh_paths.items()):
        classes[cid] = _load_mesh(src, config[cid][1])
        rel_mesh[cid] = f"meshes/{cid}.obj"
        shutil.copyfile(src, out / rel_mesh[cid])

    rng = np.random.default_rng(args.seed)
    scenes = []
    for i in range(args.n):
        scene = sample_scene(i, classes, K, rng, args.occlusion, args.jitter)
        if scene is not None:
            scenes.append(scene)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        scenes = list(pool.map(lambda s: render_scene(s, K, args.resolution), scenes))

    files = []
    for scene in scenes:
        stem = f"scene_{scene.index:04d}"
        sil_name, occ_name = f"masks/{stem}_sil.pgm", f"masks/{stem}_occ.pgm"
        write_pgm(out / sil_name, scene.silhouette)
        write_pgm(out / occ_name, scene.occlusion)
        write_json(out / "scenes" / f"{stem}.json", scene_record(scene, K, rel_mesh, sil_name, occ_name))
        files.append(f"scenes/{stem}.json")

    bank_dirs = {}
    for cid in sorted(classes):
        bank_dirs[cid] = f"banks/{cid}"
        if args.banks != "none":
            args.grid = args.banks
            save_bank(_make_bank(classes[cid], K, args, cid), out / bank_dirs[cid])

    jitter_iou = [roi_iou(s.roi, s.pred_roi) for s in scenes]
    manifest = {
        "camera": K.to_dict(),
        "seed": args.seed,
        "resolution": args.resolution,
        "occlusion": args.occlusion,
        "jitter": args.jitter,
        "symmetry": "symmetry.json",
        "classes": {cid: {"mesh": rel_mesh[cid], "bank": bank_dirs[cid]} for cid in sorted(classes)},
        "scenes": files,
        "roi_jitter_iou": {
            "mean": float(np.mean(jitter_iou)) if jitter_iou else None,
            "min": float(np.min(jitter_iou)) if jitter_iou else None,
        },
    }
    write_json(out / MANIFEST, manifest)
    log.info("wrote %d scenes to %s (ROI jitter IoU mean %s)", len(files), out, manifest["roi_jitter_iou"]["mean"])
    return 0


# ---------------------------------------------------------------- eval


class Assets:
    """Meshes, banks and symmetry groups of a dataset, validated up front."""

    def __init__(self, manifest_path):
        self.root = Path(manifest_path).parent
        try:
            self.manifest = read_json(manifest_path)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read manifest {manifest_path}: {exc}") from None
        m = self.manifest
        if not m.get("scenes"):
            raise DataError(f"manifest {manifest_path} lists no scenes")
        self.camera = CameraIntrinsics.from_dict(m["camera"])
        sym = _symmetry(self.root / m["symmetry"])
        classes = m.get("classes", {})
        missing = sorted(c for c in classes if c not in sym)
        if missing:
            raise DataError(f"symmetry config has no entry for class(es): {', '.join(missing)}")
        self.groups, self.meshes, self.points, self.banks = {}, {}, {}, {}
        absent = []
        for cid, entry in sorted(classes.items()):
            bank_dir = self.root / entry["bank"]
            if not (self.root / entry["mesh"]).is_file() or not (bank_dir / "bank.json").is_file():
                absent.append(cid)
                continue
            self.groups[cid] = sym[cid][0]
            self.meshes[cid] = _load_mesh(self.root / entry["mesh"], sym[cid][1])
            self.points[cid] = metrics.model_points(self.meshes[cid], MAX_MODEL_POINTS)
            self.banks[cid] = load_bank(bank_dir, self.meshes[cid])
        if absent:
            raise DataError(f"missing mesh or bank for class(es): {', '.join(absent)}")
        self.records = []
        for rel in m["scenes"]:
            try:
                rec = read_json(self.root / rel)
            except (OSError, ValueError) as exc:
                raise DataError(f"scene record {rel}: {exc}") from None
            cid = rec["objects"][rec["target"]]["class_id"]
            if cid not in self.banks:
                raise DataError(f"scene {rel} uses unknown class {cid!r}")
            self.records.append(rec)


def _flip(mask: SilhouetteMask, fraction: float, rng: np.random.Generator) -> SilhouetteMask:
    bits = mask.bits.copy().reshape(-1)
    idx = rng.choice(bits.size, int(round(fraction * bits.size)), replace=False)
    bits[idx] = ~bits[idx]
    return SilhouetteMask(bits.reshape(mask.shape))


def frame_metrics(rec: dict, assets: Assets) -> dict:
    """Metric values recomputed from the poses stored in an eval record."""
    cid = rec["class"]
    est, gt = pose_from_record(rec["estimate"]), pose_from_record(rec["ground_truth"])
    return {
        "angle_deg": metrics.angular_error_deg(est.rotation, gt.rotation, assets.groups[cid]),
        "trans_cm": metrics.translation_error_cm(np.array(est.translation), np.array(gt.translation)),
        "adds_m": metrics.add_s(est, gt, assets.points[cid]),
    }


def evaluate_scene(rec: dict, assets: Assets, mode: str, roi_kind: str, refine: bool, rng) -> dict:
    start = time.perf_counter()
    target = rec["objects"][rec["target"]]
    cid = target["class_id"]
    gt_sil = read_pgm(assets.root / rec["silhouette"])
    gt_occ = read_pgm(assets.root / rec["occlusion"])
    sil, occ = gt_sil, gt_occ
    if mode == "noisy-sil":
        sil, occ = _flip(gt_sil, NOISE_FLIP_FRACTION, rng), _flip(gt_occ, NOISE_FLIP_FRACTION, rng)
    match = match_orientation(sil, assets.banks[cid], assets.groups[cid], refine)
    key = "roi" if roi_kind == "gt" else "pred_roi"
    code = TranslationCode(*rec["code" if roi_kind == "gt" else "pred_code"])
    est = assemble_pose(match, code, Roi(*rec[key]), assets.camera, cid, f"{roi_kind}-roi")
    out = {
        "scene": rec["scene"],
        "class": cid,
        "estimate": {"rotation": list(est.orientation.as_tuple()), "translation": list(est.translation.as_array())},
        "ground_truth": {"rotation": target["rotation"], "translation": target["translation"]},
        "iou_unocc": metrics.iou(sil, gt_sil),
        "iou_occ": metrics.iou(occ, gt_occ),
        "match_iou": match.score,
    }
    out.update(frame_metrics(out, assets))
    out["seconds"] = time.perf_counter() - start
    return out


def summarize(records: list, max_threshold: float = metrics.ADDS_MAX_THRESHOLD) -> tuple:
    """Per-class report rows plus an ALL row, and their ADD-S curves."""
    groups = {}
    for r in records:
        groups.setdefault(r["class"], []).append(r)
    rows, curves = [], {}
    for cid in [*sorted(groups), "ALL"]:
        rs = records if cid == "ALL" else groups[cid]
        curve = metrics.accuracy_auc([r["adds_m"] for r in rs], max_threshold)
        curves[cid] = curve
        rows.append(
            {
                "class": cid,
                "n_frames": len(rs),
                "mean_iou_unocc": float(np.mean([r["iou_unocc"] for r in rs])),
                "mean_iou_occ": float(np.mean([r["iou_occ"] for r in rs])),
                "mean_angle_deg": float(np.mean([r["angle_deg"] for r in rs])),
                "mean_trans_cm": float(np.mean([r["trans_cm"] for r in rs])),
                "adds_auc": curve.auc,
            }
        )
    return rows, curves


def format_curves_csv(curves: dict) -> str:
    lines = ["class,threshold_m,accuracy"]
    for cid, c in curves.items():
        lines += [f"{cid},{t:.6f},{a:.6f}" for t, a in zip(c.thresholds, c.accuracy)]
    return "\r\n".join(lines) + "\r\n"


def output_paths(csv_path) -> tuple:
    p = Path(csv_path)
    stem = p.with_suffix("")
    return p, Path(f"{stem}.records.json"), Path(f"{stem}.curves.csv")


def cmd_eval(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    assets = Assets(args.manifest)
    seeds = np.random.SeedSequence(args.seed).spawn(len(assets.records))

    def run(i):
        return evaluate_scene(
            assets.records[i], assets, args.mode, args.roi, not args.no_refine, np.random.default_rng(seeds[i])
        )

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        records = list(pool.map(run, range(len(assets.records))))
    if not args.timing:
        for r in records:
            r.pop("seconds")
    rows, curves = summarize(records)
    csv_path, rec_path, curve_path = output_paths(args.out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(metrics.format_report_csv(rows), encoding="utf-8", newline="")
    rec_path.write_text(json.dumps(records, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    curve_path.write_text(format_curves_csv(curves), encoding="utf-8", newline="")
    all_row = rows[-1]
    log.info(
        "%d frames: mean angle %.3f deg, mean translation %.4f cm, ADD-S AUC %.4f",
        all_row["n_frames"], all_row["mean_angle_deg"], all_row["mean_trans_cm"], all_row["adds_auc"],
    )
    return 0


# ---------------------------------------------------------------- report


def render_report(csv_text: str, curves_text: str | None = None) -> str:
    """Aligned text tables in the layout of the published results."""
    rows = metrics.parse_report_csv(csv_text)
    header = ["Object", "Frames", "IoU unocc %", "IoU occ %", "Angle deg", "Trans cm", "ADD-S AUC %"]
    body = [
        [
            r["class"],
            str(r["n_frames"]),
            f"{100 * r['mean_iou_unocc']:.2f}",
            f"{100 * r['mean_iou_occ']:.2f}",
            f"{r['mean_angle_deg']:.2f}",
            f"{r['mean_trans_cm']:.2f}",
            f"{100 * r['adds_auc']:.1f}",
        ]
        for r in rows
    ]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]

    def line(cells):
        first = cells[0].ljust(widths[0])
        return "  ".join([first] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]).rstrip()

    out = [line(header), "  ".join("-" * w for w in widths)]
    out += [line(b) for b in body]
    if curves_text:
        out += ["", "ADD-S accuracy-threshold curve (class, threshold m, accuracy)"]
        out += [" ".join(ln.split(",")) for ln in curves_text.splitlines()[1:] if ln]
    return "\n".join(out) + "\n"


def cmd_report(args) -> int:
    csv_path, _, curve_path = output_paths(args.csv)
    try:
        text = csv_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {csv_path}: {exc}") from None
    curves = curve_path.read_text(encoding="utf-8") if curve_path.is_file() else None
    try:
        report = render_report(text, curves)
    except (metrics.ReportSchemaError, ValueError, KeyError) as exc:
        raise DataError(f"{csv_path}: {exc}") from None
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    else:
        sys.stdout.write(report)
    return 0


# ---------------------------------------------------------------- entry point


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of option defaults; command-line flags win")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def _bank_options(p):
    p.add_argument("--azimuth-step", type=float, default=60.0)
    p.add_argument("--elevations", default="-30,30")
    p.add_argument("--level", type=int, default=2, help="icosphere subdivision level")
    p.add_argument("--inplane", type=int, default=24, help="in-plane rotations per view direction")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--camera", help="intrinsics JSON (f, cx, cy, width, height)")
    p.add_argument("--symmetry", help="symmetry config JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="silhopose", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-bank", help="render a viewpoint bank for one class")
    _common(p)
    _bank_options(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--class-id", required=True)
    p.add_argument("--grid", choices=("azel", "sphere"), default="azel")
    p.set_defaults(func=cmd_gen_bank)

    p = sub.add_parser("gen-scenes", help="generate a synthetic dataset")
    _common(p)
    _bank_options(p)
    p.add_argument("--mesh", action="append", default=[], metavar="CLASS=PATH")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--occlusion", type=int, default=0, help="occluders placed in front of each target")
    p.add_argument("--jitter", type=float, default=5.0, help="ROI corner noise sigma in pixels")
    p.add_argument("--banks", choices=("none", "azel", "sphere"), default="sphere")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("eval", help="evaluate the estimator on a dataset")
    _common(p)
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("gt-sil", "noisy-sil"), default="gt-sil")
    p.add_argument("--roi", choices=("gt", "pred"), default="gt")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--timing", action="store_true", help="store per-frame wall time (breaks byte-identity)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="format an eval CSV as tables")
    _common(p)
    p.add_argument("csv")
    p.set_defaults(func=cmd_report)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = read_json(args.config)
        except (OSError, ValueError) as exc:
            raise DataError(f"config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except SystemExit as exc:
        # argparse: --help exits 0, bad arguments exit 1 via _Parser.error.
        return exc.code if isinstance(exc.code, int) else 1
    except UsageError as exc:
        print(f"silhopose: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"silhopose: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
