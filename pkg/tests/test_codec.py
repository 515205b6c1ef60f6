import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TEST_MESHES
from silhopose.codec import (
    QLOSS_EPS,
    Translation,
    TranslationCode,
    apparent_to_true,
    decode_center,
    decode_translation,
    encode_translation,
    logit,
    orientation_correction,
    qloss,
    sigmoid,
    true_to_apparent,
)
from silhopose.geometry import DEFAULT_CAMERA, CameraIntrinsics, Quaternion, Roi, quat_angle, quat_mul, rot_x, rot_y
from silhopose.mesh import render_distance
from silhopose.raster import mask_iou, rasterize_silhouette

seeds = st.integers(0, 2**32 - 1)


def random_case(rng):
    K = CameraIntrinsics(
        f=rng.uniform(200, 2000), cx=rng.uniform(100, 500), cy=rng.uniform(100, 400), width=640, height=480
    )
    roi = Roi(rng.uniform(-50, 600), rng.uniform(-50, 450), rng.uniform(5, 300), rng.uniform(5, 300))
    # Centres up to two ROI sizes outside the box.
    u = roi.bx + rng.uniform(-2, 3) * roi.w
    v = roi.by + rng.uniform(-2, 3) * roi.h
    z = rng.uniform(0.2, 5.0)
    t = Translation((u - K.cx) * z / K.f, (v - K.cy) * z / K.f, z)
    return K, roi, t


def test_logit_sigmoid_examples():
    assert logit(0.5) == 0.0
    assert f"{logit(0.62246):.4f}" == "0.5000"
    assert abs(sigmoid(logit(0.3)) - 0.3) < 1e-15
    with pytest.raises(ValueError):
        logit(1.0)


def test_decode_center_examples():
    K = CameraIntrinsics(f=500, cx=320, cy=240, width=640, height=480)
    roi = Roi(100, 50, 80, 60)
    assert decode_center(TranslationCode(0.5, 0.5, 1.0), roi, K) == (100 - 320, 50 - 240)
    px, _ = decode_center(TranslationCode(0.62246, 0.5, 1.0), roi, K)
    assert abs(px - (100 + 0.5 * 80 - 320)) < 80 * 1e-4


def test_decode_translation_examples():
    t = decode_translation(0.0, 0.0, 2.0, 500.0)
    assert (t.X, t.Y, t.Z) == (0.0, 0.0, 2.0)
    t = decode_translation(300.0, 400.0, 2.0, 500.0)
    # Oracle: Z = 2 * 500 / sqrt(500000); X, Y by similar triangles.
    assert np.allclose(t.as_array(), [0.8485281, 1.1313708, 1.4142136], atol=5e-8)
    assert abs(t.range - 2.0) < 1e-12


def test_encode_round_trips_decode_examples():
    K = CameraIntrinsics(f=500, cx=320, cy=240, width=640, height=480)
    roi = Roi(250, 300, 200, 250)
    for px, py, rng_ in [(0.0, 0.0, 2.0), (300.0, 400.0, 2.0), (-40.0, 25.0, 0.7)]:
        t = decode_translation(px, py, rng_, K.f)
        code = encode_translation(t, roi, K)
        back = decode_translation(*decode_center(code, roi, K), code.range, K.f)
        assert np.allclose(back.as_array(), t.as_array(), atol=1e-9)


@settings(max_examples=300)
@given(seeds)
def test_codec_round_trip_and_range_identity(seed):
    K, roi, t = random_case(np.random.default_rng(seed))
    code = encode_translation(t, roi, K)
    back = decode_translation(*decode_center(code, roi, K), code.range, K.f)
    assert np.allclose(back.as_array(), t.as_array(), rtol=0, atol=1e-9)
    assert abs(back.range - code.range) <= 1e-12 * code.range


def test_code_validation():
    with pytest.raises(ValueError):
        TranslationCode(0.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        TranslationCode(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        encode_translation(Translation(0, 0, -1), Roi(0, 0, 1, 1), DEFAULT_CAMERA)


def test_orientation_correction_examples():
    assert orientation_correction(Translation(0, 0, 3)) == (0.0, -0.0)
    pan, tilt = orientation_correction(Translation(1, 0, 1))
    assert abs(pan - math.pi / 4) < 1e-15 and tilt == 0
    pan, tilt = orientation_correction(Translation(0, 1, math.sqrt(3)))
    assert pan == 0 and abs(tilt + math.pi / 6) < 1e-15


def test_on_axis_orientation_unchanged():
    q = Quaternion.from_axis_angle((1, 2, 3), 1.0)
    assert quat_angle(apparent_to_true(q, Translation(0, 0, 1.5)), q) == 0.0


@settings(max_examples=300)
@given(seeds)
def test_apparent_true_round_trip(seed):
    rng = np.random.default_rng(seed)
    q = Quaternion.random(rng)
    t = Translation(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.1, 3))
    assert quat_angle(true_to_apparent(apparent_to_true(q, t), t), q) < 1e-9
    assert quat_angle(apparent_to_true(true_to_apparent(q, t), t), q) < 1e-9


def ray_aligned_reference(mesh, q_true, t, K, resolution):
    # A virtual camera panned and tilted to look straight at the object
    # centre sees the object at (0, 0, range) with this orientation.
    rv = quat_mul(rot_y(math.atan(t.X / t.Z)), rot_x(-math.asin(t.Y / t.range)))
    return rasterize_silhouette(mesh, quat_mul(rv.conjugate(), q_true), K, t.range, resolution)


def offset_translation(rng, max_deg, r):
    a = math.radians(max_deg) * math.sqrt(rng.uniform())
    phi = rng.uniform(0, 2 * math.pi)
    d = np.array([math.sin(a) * math.cos(phi), math.sin(a) * math.sin(phi), math.cos(a)])
    return Translation(*(d * r))


@pytest.mark.parametrize("name", ["box", "wedge"])
def test_apparent_silhouette_matches_ray_aligned_view(name):
    mesh = TEST_MESHES[name]
    K = DEFAULT_CAMERA
    r = render_distance(mesh.extent, K.min_fov)
    rng = np.random.default_rng(11)
    for _ in range(25):
        q = Quaternion.random(rng)
        t = offset_translation(rng, 30, r)
        ref = ray_aligned_reference(mesh, q, t, K, 256)
        app = rasterize_silhouette(mesh, true_to_apparent(q, t), K, r, 256)
        assert mask_iou(ref, app) >= 0.95


def test_qloss_values():
    q = Quaternion.from_axis_angle((0, 1, 0), 0.4)
    assert QLOSS_EPS == math.exp(-4.0)
    assert qloss(q, q) == -4.0
    assert qloss(-q, q) == -4.0
    perp = Quaternion(-q.x, q.w, -q.z, q.y)
    assert abs(q.dot(perp)) < 1e-15
    assert abs(qloss(perp, q) - 0.0181499) < 5e-8
    assert abs(qloss(perp, q) - math.log1p(math.exp(-4))) < 1e-12


@settings(max_examples=300)
@given(seeds)
def test_qloss_sign_flip_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = Quaternion.random(rng), Quaternion.random(rng)
    assert qloss(a, b) == qloss(-a, b) == qloss(a, -b)


def test_qloss_monotone_in_alignment():
    rng = np.random.default_rng(3)
    q = Quaternion.random(rng)
    preds = [Quaternion.random(rng) for _ in range(1000)]
    dots = np.array([abs(p.dot(q)) for p in preds])
    losses = np.array([qloss(p, q) for p in preds])
    order = np.argsort(dots)
    assert np.all(np.diff(losses[order]) <= 1e-12)
