import math

import numpy as np
import pytest

from conftest import BOX_GROUP, TEST_MESHES
from silhopose.bank import ViewpointBank, generate_bank, grid_orientations
from silhopose.codec import Translation, TranslationCode, encode_translation
from silhopose.estimator import (
    REFINE_ANGLE_TOL_DEG,
    REFINE_STEPS_DEG,
    EstimationError,
    MatchResult,
    PoseEstimate,
    assemble_pose,
    binarize,
    match_orientation,
    refine,
)
from silhopose.geometry import DEFAULT_CAMERA, Quaternion, Roi, quat_angle, quat_mul, rot_x, rot_z
from silhopose.mesh import icosphere, render_distance
from silhopose.raster import SilhouetteMask, mask_iou, rasterize_silhouette
from silhopose.scenes import render_scene, sample_scene
from silhopose.symmetry import SymmetryGroup, canonicalize, sym_angle

K = DEFAULT_CAMERA
BOX = TEST_MESHES["box"]


def flip_pixels(mask, fraction, rng):
    bits = mask.bits.copy().ravel()
    idx = rng.choice(bits.size, int(round(fraction * bits.size)), replace=False)
    bits[idx] = ~bits[idx]
    return SilhouetteMask(bits.reshape(mask.shape))


def test_binarize_threshold():
    prob = np.array([[0.2, 0.5], [0.49, 0.9]])
    assert binarize(prob).bits.tolist() == [[False, True], [False, True]]
    assert binarize(prob, 0.95).count == 0


def test_empty_silhouette_is_an_error():
    bank = generate_bank(BOX, K)
    with pytest.raises(EstimationError, match="no silhouette evidence"):
        match_orientation(SilhouetteMask(np.zeros((64, 64), bool)), bank)


def test_self_match_on_every_entry():
    bank = generate_bank(TEST_MESHES["wedge"], K, 30, (-60, -30, 0, 30, 60))
    for i in range(len(bank)):
        m = match_orientation(bank.mask(i), bank, refine_result=False)
        assert m.score == 1.0
        assert bank.mask(m.index) == bank.mask(i)
        if m.index == i:
            assert quat_angle(m.best, bank.quaternion(i)) < 1e-12


def test_identical_templates_tie_to_lowest_index():
    # A perfect sphere looks the same from everywhere: every template is
    # the same disc.
    s = icosphere(0.05, 3)
    r = render_distance(s.extent, K.min_fov)
    disc = rasterize_silhouette(s, Quaternion.identity(), K, r).bits
    quats = [q.as_array() for q in grid_orientations(60, (-30, 30))]
    bank = ViewpointBank("ball", r, quats, np.repeat(disc[None], len(quats), axis=0), K, s)
    m = match_orientation(SilhouetteMask(disc), bank, refine_result=False)
    assert np.all(bank.scores(SilhouetteMask(disc)) == 1.0)
    assert m.index == 0 and m.score == 1.0
    assert [e[2] for e in m.ranked] == [0, 1, 2, 3, 4]
    assert m.best == canonicalize(bank.quaternion(0), SymmetryGroup())


def test_refine_history_is_monotone():
    bank = generate_bank(BOX, K)
    q = Quaternion.random(np.random.default_rng(5))
    sil = rasterize_silhouette(BOX, q, K, bank.distance)
    start = bank.quaternion(int(np.argmax(bank.scores(sil))))
    out, score, history = refine(sil, start, BOX, K, bank.distance)
    assert np.all(np.diff(history) > 0)
    assert score == history[-1] == mask_iou(sil, rasterize_silhouette(BOX, out, K, bank.distance))


def _oracle_error(mesh, sil, truth_az, truth_el, g, distance):
    # Brute force over a 1-degree (azimuth, elevation) grid around the truth.
    best, best_q = -1.0, None
    for daz in range(-10, 11):
        for del_ in range(-10, 11):
            q = quat_mul(rot_x(math.radians(truth_el + del_)), rot_z(math.radians(truth_az + daz)))
            s = mask_iou(sil, rasterize_silhouette(mesh, q, K, distance))
            if s > best:
                best, best_q = s, q
    return best_q


@pytest.mark.parametrize("az, el", [(22.5, 7.5), (97.5, -37.5), (202.5, 52.5)])
def test_midway_between_entries_recovers_orientation(az, el):
    bank = generate_bank(BOX, K, 15, tuple(range(-75, 90, 15)))
    truth = quat_mul(rot_x(math.radians(el)), rot_z(math.radians(az)))
    sil = rasterize_silhouette(BOX, truth, K, bank.distance)
    m = match_orientation(sil, bank, BOX_GROUP)
    err = math.degrees(sym_angle(m.best, truth, BOX_GROUP))
    oracle = _oracle_error(BOX, sil, az, el, BOX_GROUP, bank.distance)
    oracle_err = math.degrees(sym_angle(oracle, truth, BOX_GROUP))
    assert oracle_err <= 1.0
    assert err <= 5.0
    assert m.score >= 0.95


def test_end_to_end_clean_scene(box_sphere_bank):
    rng = np.random.default_rng(42)
    scene = render_scene(sample_scene(0, {"box": BOX}, K, rng), K)
    t = scene.target.translation
    code = encode_translation(t, scene.roi, K)
    m = match_orientation(scene.silhouette, box_sphere_bank, BOX_GROUP)
    est = assemble_pose(m, code, scene.roi, K, "box", "gt-roi")
    assert np.linalg.norm(est.translation.as_array() - t.as_array()) < 1e-6
    assert math.degrees(sym_angle(est.orientation, scene.target.pose.rotation, BOX_GROUP)) <= REFINE_ANGLE_TOL_DEG


def test_noisy_silhouette_degrades_gracefully(box_sphere_bank):
    # Median over 100 noise draws stays within twice the clean error plus
    # one finest refinement step (clean errors sit at the quantization floor).
    q = Quaternion.random(np.random.default_rng(2))
    sil = rasterize_silhouette(BOX, q, K, box_sphere_bank.distance)
    clean = math.degrees(sym_angle(match_orientation(sil, box_sphere_bank, BOX_GROUP).best, q, BOX_GROUP))
    rng = np.random.default_rng(100)
    errs = [
        math.degrees(sym_angle(match_orientation(flip_pixels(sil, 0.10, rng), box_sphere_bank, BOX_GROUP).best, q, BOX_GROUP))
        for _ in range(100)
    ]
    assert np.median(errs) <= 2 * clean + REFINE_STEPS_DEG[-1]


def test_centred_object_keeps_apparent_orientation():
    q = Quaternion.from_axis_angle((1, 1, 0), 0.5)
    m = MatchResult(q, 1.0, [])
    roi = Roi(K.cx, K.cy, 40, 40)  # code 0.5 decodes to the ROI corner
    est = assemble_pose(m, TranslationCode(0.5, 0.5, 0.8), roi, K)
    assert est.translation.X == 0 and est.translation.Y == 0
    assert quat_angle(est.orientation, q) == 0


def test_pose_estimate_validation():
    with pytest.raises(ValueError):
        PoseEstimate("x", Quaternion(), Translation(0, 0, 1), "guess")
    with pytest.raises(ValueError):
        PoseEstimate("x", Quaternion(), Translation(0, 0, -1))


def test_refinement_needs_mesh():
    bank = generate_bank(BOX, K)
    bare = ViewpointBank("box", bank.distance, bank.quaternions, bank.masks)
    with pytest.raises(EstimationError):
        match_orientation(bank.mask(0), bare)
    assert match_orientation(bank.mask(0), bare, refine_result=False).score == 1.0
