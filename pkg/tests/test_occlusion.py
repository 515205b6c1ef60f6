import numpy as np
import pytest

from conftest import TEST_MESHES
from silhopose.codec import true_to_apparent
from silhopose.geometry import DEFAULT_CAMERA, Quaternion, RigidTransform
from silhopose.mesh import TriangleMesh, box, render_distance
from silhopose.occlusion import SceneObject, mask_cells, scene_masks, vertex_visibility
from silhopose.raster import SilhouetteMask, rasterize_silhouette, render_inverse_depth
from silhopose.scenes import sample_scene

K = DEFAULT_CAMERA


def quad(x0, x1, y0, y1, z):
    v = np.array([[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]], dtype=float)
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def camera_object(mesh):
    return SceneObject(mesh, RigidTransform.translate(0, 0, 0), "occluder")


def test_no_occluders_gives_full_silhouette():
    mesh = TEST_MESHES["wedge"]
    target = SceneObject(mesh, RigidTransform(Quaternion.random(np.random.default_rng(2)), (0.05, -0.03, 0.8)), "w")
    sil, occ = scene_masks(target, [], K)
    assert occ == sil and sil.count > 0


def test_silhouette_is_the_apparent_render():
    mesh = TEST_MESHES["box"]
    q = Quaternion.random(np.random.default_rng(4))
    target = SceneObject(mesh, RigidTransform(q, (0.1, 0.05, 0.9)), "box")
    sil, _ = scene_masks(target, [], K)
    r = render_distance(mesh.extent, K.min_fov)
    assert sil == rasterize_silhouette(mesh, true_to_apparent(q, target.translation), K, r)


def test_frustum_covering_occluder_hides_everything():
    target = SceneObject(TEST_MESHES["box"], RigidTransform(Quaternion.identity(), (0, 0, 0.8)), "box")
    wall = camera_object(quad(-10, 10, -10, 10, 0.1))
    sil, occ = scene_masks(target, [wall], K)
    assert sil.count > 0 and occ.count == 0 and occ.degenerate


def test_occluder_behind_target_hides_nothing():
    target = SceneObject(TEST_MESHES["box"], RigidTransform(Quaternion.identity(), (0, 0, 0.8)), "box")
    wall = camera_object(quad(-10, 10, -10, 10, 3.0))
    sil, occ = scene_masks(target, [wall], K)
    assert occ == sil


def test_half_plane_occluder_hides_half_of_symmetric_target():
    target = SceneObject(TEST_MESHES["box"], RigidTransform(Quaternion.identity(), (0, 0, 0.8)), "box")
    left = camera_object(quad(-10, 0, -10, 10, 0.4))
    sil, occ = scene_masks(target, [left], K)
    assert abs(occ.count / sil.count - 0.5) <= 0.05
    # The visible half is the right one.
    assert not occ.bits[:, : sil.shape[1] // 2 - 1].any()


def test_out_of_frame_target_is_fully_hidden():
    target = SceneObject(TEST_MESHES["box"], RigidTransform(Quaternion.identity(), (2.0, 0, 0.8)), "box")
    sil, occ = scene_masks(target, [], K)
    assert sil.count > 0 and occ.degenerate


def test_containment_and_monotonicity_on_random_scenes():
    rng = np.random.default_rng(21)
    classes = {k: TEST_MESHES[k] for k in ("box", "cylinder", "wedge")}
    checked = 0
    for i in range(30):
        scene = sample_scene(i, classes, K, rng, n_occluders=2)
        if scene is None:
            continue
        sil, occ_all = scene_masks(scene.target, scene.occluders, K)
        _, occ_one = scene_masks(scene.target, scene.occluders[:1], K)
        _, occ_none = scene_masks(scene.target, [], K)
        assert not (occ_all.bits & ~sil.bits).any()
        assert not (occ_all.bits & ~occ_one.bits).any()
        assert not (occ_one.bits & ~occ_none.bits).any()
        checked += 1
    assert checked >= 25


@pytest.mark.parametrize("name", ["box", "cube", "wedge", "cylinder", "sphere"])
def test_unoccluded_convex_mesh_has_all_vertices_visible(name):
    mesh = TEST_MESHES[name]
    r = render_distance(mesh.extent, K.min_fov)
    rng = np.random.default_rng(8)
    for _ in range(20):
        q = Quaternion.random(rng)
        full = rasterize_silhouette(mesh, q, K, r)
        assert vertex_visibility(mesh, q, full, K, r).visible.all()


def test_vertex_visibility_empty_mask():
    mesh = box(0.06, 0.14, 0.10, subdivisions=4)
    r = render_distance(mesh.extent, K.min_fov)
    q = Quaternion.random(np.random.default_rng(8))
    empty = SilhouetteMask(np.zeros((64, 64), bool))
    rep = vertex_visibility(mesh, q, empty, K, r)
    assert not rep.visible.any() and rep.fraction == 0.0


def test_mask_cells_boundaries():
    res = 64
    scale = K.crop_side / res
    pts = np.array([[K.cx, K.cy], [K.cx - 32 * scale, K.cy - 32 * scale], [K.cx + 32 * scale - 1e-9, K.cy]])
    assert mask_cells(pts, K, res).tolist() == [[32, 32], [0, 0], [32, 63]]


def visibility_oracle(target, occluders):
    # Per-vertex test against real-camera depth maps: a vertex is
    # self-visible when it is the nearest target surface at its pixel,
    # and scene-visible when no occluder is nearer there.
    cam = target.pose.apply(target.mesh.vertices)
    u = np.rint(K.f * cam[:, 0] / cam[:, 2] + K.cx).astype(int)
    v = np.rint(K.f * cam[:, 1] / cam[:, 2] + K.cy).astype(int)
    inv = 1.0 / cam[:, 2]
    own = render_inverse_depth(target.mesh, target.pose, K)[v, u]
    self_visible = np.abs(own - inv) <= 1e-3 * inv
    occ = np.zeros((K.height, K.width))
    for o in occluders:
        render_inverse_depth(o.mesh, o.pose, K, occ)
    return self_visible, occ[v, u] < inv


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_vertex_visibility_agrees_with_depth_oracle(seed):
    rng = np.random.default_rng(seed)
    mesh = box(0.06, 0.14, 0.10, subdivisions=32)
    t = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.08, 0.08), rng.uniform(0.7, 1.0)])
    target = SceneObject(mesh, RigidTransform(Quaternion.random(rng), tuple(t)), "box")
    # Half-plane occluder cutting through the target centre.
    zq = 0.5 * t[2]
    cut = t[0] * zq / t[2]
    occluder = camera_object(quad(-10, cut, -10, 10, zq))
    _, occ = scene_masks(target, [occluder], K)
    r = render_distance(mesh.extent, K.min_fov)
    q_app = true_to_apparent(target.pose.rotation, target.translation)
    got = vertex_visibility(mesh, q_app, occ, K, r).visible
    self_visible, oracle = visibility_oracle(target, [occluder])
    agree = np.mean(got[self_visible] == oracle[self_visible])
    assert self_visible.sum() > 500
    assert agree >= 0.95
