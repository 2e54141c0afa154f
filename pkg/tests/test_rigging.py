import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from socialsplat.errors import ContractError, DegenerateError, FormatError, ValidationError
from socialsplat.gsplat import render, simple_camera
from socialsplat.numcore import Tensor, check_gradients
from socialsplat.rigging import (BlendshapeRig, BoundGaussianSet, DensifyThresholds, TriangleMesh,
                                 axis_angle_to_rotmat, blendshape_apply, compute_binding_frames,
                                 densify, grid_mesh, init_anchors, load_basis, load_bound_set,
                                 load_obj, save_basis, save_bound_set, save_obj, to_deformable)

UNIT = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
TWO = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.2]], [[0, 1, 2], [1, 3, 2]])


def frames_oracle(v, faces):
    """Plain per-face loop, independent of the tape implementation."""
    out = []
    for a, b, c in faces:
        p0, p1, p2 = v[a], v[b], v[c]
        edge = p1 - p0
        L = np.sqrt(edge @ edge)
        e = edge / L
        nn = np.cross(edge, p2 - p0)
        n = nn / np.sqrt(nn @ nn)
        R = np.column_stack([e, np.cross(n, e), n])
        # altitude of p2 above the line through p0, p1
        w = p2 - p0
        h = np.sqrt(max(w @ w - (w @ e) ** 2, 0.0))
        out.append((R, (p0 + p1 + p2) / 3, 0.5 * (L + h)))
    return out


def random_rigid(seed):
    rng = np.random.default_rng(seed)
    return Rotation.random(random_state=seed).as_matrix(), rng.normal(size=3)


# ---------------------------------------------------------------- frames

def test_unit_triangle_frame():
    f = compute_binding_frames(UNIT.vertices, UNIT.faces)[0]
    np.testing.assert_allclose(f.R[:, 0], [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(f.R[:, 2], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(f.T, [1 / 3, 1 / 3, 0], atol=1e-15)
    assert f.lam == pytest.approx(1.0, abs=1e-15)


def test_frames_match_loop_oracle():
    mesh = grid_mesh(4, 3, bump=0.4)
    fr = compute_binding_frames(mesh.vertices, mesh.faces)
    for k, (R, T, lam) in enumerate(frames_oracle(mesh.vertices, mesh.faces)):
        np.testing.assert_allclose(fr.R.data[k], R, atol=1e-13)
        np.testing.assert_allclose(fr.T.data[k], T, atol=1e-13)
        assert fr.lam.data[k] == pytest.approx(lam, rel=1e-12)


def test_frames_translation_and_scale():
    mesh = grid_mesh(3, 3)
    base = compute_binding_frames(mesh.vertices, mesh.faces)
    t = np.array([0.3, -2.0, 5.0])
    moved = compute_binding_frames(mesh.vertices + t, mesh.faces)
    np.testing.assert_allclose(moved.T.data, base.T.data + t, atol=1e-12)
    np.testing.assert_allclose(moved.R.data, base.R.data, atol=1e-12)
    np.testing.assert_allclose(moved.lam.data, base.lam.data, rtol=1e-12)
    scaled = compute_binding_frames(2 * mesh.vertices, mesh.faces)
    np.testing.assert_allclose(scaled.lam.data, 2 * base.lam.data, rtol=1e-12)
    np.testing.assert_allclose(scaled.T.data, 2 * base.T.data, atol=1e-12)
    np.testing.assert_allclose(scaled.R.data, base.R.data, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9))
def test_frames_orthonormal(coords):
    v = np.asarray(coords).reshape(3, 3)
    nrm = np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
    if nrm < 1e-3 or np.linalg.norm(v[1] - v[0]) < 1e-3:
        return
    f = compute_binding_frames(v, [[0, 1, 2]])
    R = f.R.data[0]
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(R) - 1) < 1e-9
    assert f.lam.data[0] > 0


def test_degenerate_face_rejected():
    bad = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(DegenerateError, match=r"\[0\]"):
        compute_binding_frames(bad.vertices, bad.faces)
    with pytest.raises(ValidationError, match=r"\[0\]"):
        init_anchors(bad)


def test_mesh_validation():
    with pytest.raises(ValidationError, match="out of range"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]]).validate()
    flipped = TriangleMesh(TWO.vertices, [[0, 1, 2], [1, 2, 3]])
    with pytest.raises(ValidationError, match="winding"):
        flipped.validate()
    TWO.validate()


# ---------------------------------------------------------------- anchors / to_deformable

def test_init_anchors():
    b = init_anchors(TWO)
    assert b.n_anchors == 2 and b.n_neurals == 0
    assert b.face_index.tolist() == [0, 1]
    assert np.all(b.mu.data == 0) and np.all(b.offsets == 0)
    np.testing.assert_array_equal(b.rotation.data, [[1, 0, 0, 0]] * 2)
    np.testing.assert_array_equal(b.log_scale.data, 0)
    np.testing.assert_array_equal(b.opacity_logit.data, 0)


def test_to_deformable_examples():
    fr = compute_binding_frames(TWO.vertices, TWO.faces)
    b = init_anchors(TWO)
    g = to_deformable(b, fr)
    np.testing.assert_array_equal(g.position.data, fr.T.data)
    np.testing.assert_allclose(g.rotation.data, fr.R.data, atol=1e-15)
    np.testing.assert_allclose(np.exp(g.log_scale.data), np.repeat(fr.lam.data[:, None], 3, 1), rtol=1e-14)
    u = init_anchors(UNIT)
    u.mu.data[0] = [1, 0, 0]
    pos = to_deformable(u, compute_binding_frames(UNIT.vertices, UNIT.faces)).position.data[0]
    np.testing.assert_allclose(pos, [4 / 3, 1 / 3, 0], atol=1e-15)


def test_offsets_zero_render_matches_disabled():
    mesh = grid_mesh(2, 2)
    fr = compute_binding_frames(mesh.vertices, mesh.faces)
    b = init_anchors(mesh)
    b.log_scale.data[:] = -1.5
    cam = simple_camera(24, 24)
    a = render(to_deformable(b, fr), cam).data
    z = render(to_deformable(b, fr, offsets=np.zeros((b.n_anchors, 3))), cam).data
    np.testing.assert_array_equal(a, z)


def test_neural_shares_anchor_offset():
    fr = compute_binding_frames(TWO.vertices, TWO.faces)
    b = BoundGaussianSet(np.zeros((3, 3)), [[1, 0, 0, 0]] * 3, np.zeros((3, 3)), np.zeros(3),
                         np.full((3, 3), 0.5), [0, 1], anchor_index=[1])
    c = np.array([[0.0, 0, 0], [0.1, -0.2, 0.3]])
    g = to_deformable(b, fr, offsets=c)
    np.testing.assert_allclose(g.position.data[2], fr.T.data[1] + c[1], atol=1e-15)


def test_to_deformable_index_errors():
    fr = compute_binding_frames(UNIT.vertices, UNIT.faces)
    b = init_anchors(TWO)
    with pytest.raises(ContractError):
        to_deformable(b, fr)
    with pytest.raises(ContractError):
        BoundGaussianSet(np.zeros((2, 3)), [[1, 0, 0, 0]] * 2, np.zeros((2, 3)), np.zeros(2),
                         np.zeros((2, 3)), [0], anchor_index=[3])


def _random_bound(mesh, seed, n_neurals=4):
    rng = np.random.default_rng(seed)
    f = mesh.n_faces
    n = f + n_neurals
    rot = rng.normal(size=(n, 4))
    return BoundGaussianSet(rng.normal(scale=0.3, size=(n, 3)), rot, rng.uniform(-2.5, -1.5, (n, 3)),
                            rng.normal(size=n), rng.uniform(0.1, 0.9, (n, 3)), np.arange(f),
                            anchor_index=rng.integers(0, f, n_neurals))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rigid_equivariance(seed):
    mesh = grid_mesh(3, 2)
    b = _random_bound(mesh, seed)
    R0, t0 = random_rigid(seed)
    g = to_deformable(b, compute_binding_frames(mesh.vertices, mesh.faces))
    h = to_deformable(b, compute_binding_frames(mesh.vertices @ R0.T + t0, mesh.faces))
    np.testing.assert_allclose(h.position.data, g.position.data @ R0.T + t0, atol=1e-12)
    np.testing.assert_allclose(h.rotation.data, R0 @ g.rotation.data, atol=1e-12)
    np.testing.assert_allclose(h.log_scale.data, g.log_scale.data, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1])
def test_rigid_render_equivalence(seed):
    mesh = grid_mesh(3, 2)
    b = _random_bound(mesh, seed)
    cam = simple_camera(40, 32, eye=(0.2, 0.1, 2.5))
    R0, t0 = random_rigid(seed + 10)
    T0 = np.eye(4)
    T0[:3, :3], T0[:3, 3] = R0, t0
    img = render(to_deformable(b, compute_binding_frames(mesh.vertices, mesh.faces)), cam).data
    moved = to_deformable(b, compute_binding_frames(mesh.vertices @ R0.T + t0, mesh.faces))
    img2 = render(moved, cam.with_transform(cam.W @ np.linalg.inv(T0))).data
    assert img.max() > 0.05
    assert np.abs(img - img2).max() < 1e-6


def test_gradients_through_binding():
    cam = simple_camera(20, 20, eye=(0.4, 0.4, 2.0), target=(0.4, 0.4, 0.0))
    b = _random_bound(TWO, 3, n_neurals=1)
    b.log_scale.data[:] = np.log(0.35)
    c = Tensor(np.random.default_rng(5).normal(scale=0.05, size=(2, 3)), requires_grad=True)
    verts = Tensor(TWO.vertices.copy(), requires_grad=True)
    w = np.random.default_rng(6).uniform(size=(20, 20, 3))

    def loss():
        fr = compute_binding_frames(verts, TWO.faces)
        return (render(to_deformable(b, fr, offsets=c), cam) * w).sum()

    params = [b.mu, b.rotation, b.log_scale, b.opacity_logit, b.color, c, verts]
    rep = check_gradients(loss, params, h=1e-5)
    assert rep.scale > 1e-3
    assert rep.relative < 1e-4, str(rep)


# ---------------------------------------------------------------- densify

def _walk_ok(bset, n_faces):
    assert bset.n_anchors == n_faces
    assert sorted(bset.face_index.tolist()) == list(range(n_faces))
    for a in bset.anchor_index:
        assert 0 <= a < bset.n_anchors
    assert len(bset.offsets) == bset.n_anchors


def test_densify_zero_grads_unchanged():
    b = _random_bound(TWO, 0, n_neurals=2)
    b.opacity_logit.data[:] = 1.0
    res = densify(b, np.zeros(len(b)))
    for name in ("mu", "rotation", "log_scale", "opacity_logit", "color"):
        np.testing.assert_array_equal(getattr(res.bset, name).data, getattr(b, name).data)
    np.testing.assert_array_equal(res.bset.anchor_index, b.anchor_index)
    np.testing.assert_array_equal(res.keep_rows, np.arange(len(b)))


def test_clone_anchor():
    b = init_anchors(TWO)
    b.log_scale.data[:] = np.log(1e-3)
    res = densify(b, [1.0, 0.0], DensifyThresholds(scene_extent=1.0))
    assert res.bset.n_anchors == 2 and res.bset.n_neurals == 1
    assert res.bset.anchor_index.tolist() == [0]
    np.testing.assert_array_equal(res.bset.mu.data[2], b.mu.data[0])
    assert res.keep_rows.tolist() == [0, 1, -1]


def test_clone_neural_binds_to_its_anchor():
    b = BoundGaussianSet(np.zeros((3, 3)), [[1, 0, 0, 0]] * 3, np.full((3, 3), -8.0), np.ones(3),
                         np.zeros((3, 3)), [0, 1], anchor_index=[1])
    res = densify(b, [0, 0, 1.0])
    assert res.bset.anchor_index.tolist() == [1, 1]


def test_split_neural_structure():
    b = BoundGaussianSet(np.zeros((4, 3)), [[1, 0, 0, 0]] * 4, np.zeros((4, 3)), np.ones(4),
                         np.zeros((4, 3)), [0, 1], anchor_index=[1, 0])
    b.mu.data[3] = [5.0, 5.0, 5.0]
    res = densify(b, [0, 0, 0, 1.0], rng=np.random.default_rng(0))
    out = res.bset
    _walk_ok(out, 2)
    # source row 3 (anchor 0) removed; kept neural (anchor 1) plus two children on anchor 0
    assert out.anchor_index.tolist() == [1, 0, 0]
    assert res.keep_rows.tolist() == [0, 1, 2, -1, -1]
    np.testing.assert_allclose(out.log_scale.data[3:], -np.log(1.6))
    assert np.all(np.linalg.norm(out.mu.data[3:] - 5.0, axis=1) < 6)


def test_split_anchor_keeps_anchor():
    b = init_anchors(TWO)
    res = densify(b, [1.0, 0.0], rng=np.random.default_rng(1))
    out = res.bset
    assert out.n_anchors == 2 and out.n_neurals == 1
    np.testing.assert_allclose(out.log_scale.data[[0, 2]], -np.log(1.6))
    np.testing.assert_array_equal(out.log_scale.data[1], 0)
    assert out.anchor_index.tolist() == [0]


def test_prune_never_removes_anchors():
    b = BoundGaussianSet(np.zeros((3, 3)), [[1, 0, 0, 0]] * 3, np.zeros((3, 3)), np.full(3, -20.0),
                         np.zeros((3, 3)), [0, 1], anchor_index=[0])
    res = densify(b, np.zeros(3))
    assert res.bset.n_anchors == 2 and res.bset.n_neurals == 0 and res.n_pruned == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_binding_graph_integrity(seed, rounds):
    mesh = grid_mesh(2, 2)
    rng = np.random.default_rng(seed)
    b = _random_bound(mesh, seed, n_neurals=3)
    for _ in range(rounds):
        grads = rng.choice([0.0, 1.0], size=len(b))
        ws = rng.uniform(0, 0.02, size=len(b))
        b.opacity_logit.data[:] = rng.normal(scale=4, size=len(b))
        res = densify(b, grads, DensifyThresholds(scene_extent=1.0), rng=rng, world_scale=ws)
        assert len(res.keep_rows) == len(res.bset)
        b = res.bset
        _walk_ok(b, mesh.n_faces)


# ---------------------------------------------------------------- blendshapes

def _rig_mesh():
    return grid_mesh(2, 2)


def test_blendshape_zero_and_linearity():
    mesh = _rig_mesh()
    v = len(mesh.vertices)
    basis = np.zeros((3 * v, 59))
    basis[3 * 4 + 2, 0] = 1.0
    rig = BlendshapeRig(mesh, basis)
    np.testing.assert_array_equal(rig.apply(np.zeros(59)).vertices, mesh.vertices)
    p = np.zeros(59)
    p[0] = 2.0
    out = rig.apply(p).vertices
    np.testing.assert_allclose(out[4] - mesh.vertices[4], [0, 0, 2], atol=1e-15)
    np.testing.assert_array_equal(np.delete(out, 4, 0), np.delete(mesh.vertices, 4, 0))
    basis = np.random.default_rng(0).normal(size=(3 * v, 59))
    basis[:, 53:] = 0
    q = np.random.default_rng(1).normal(size=59)
    q[53:] = 0
    d1 = blendshape_apply(mesh, basis, q).vertices - mesh.vertices
    d2 = blendshape_apply(mesh, basis, 2 * q).vertices - mesh.vertices
    np.testing.assert_allclose(d2, 2 * d1, atol=1e-13)


def test_pose_rotations_match_scipy():
    mesh = _rig_mesh()
    v = len(mesh.vertices)
    rig = BlendshapeRig(mesh, np.zeros((3 * v, 59)), neck_pivot=[0.0, -0.5, 0.0])
    p = np.zeros(59)
    p[53:56] = [0.1, -0.3, 0.2]
    p[56:59] = [0.05, 0.2, -0.1]
    Rg = Rotation.from_rotvec(p[53:56]).as_matrix()
    Rn = Rotation.from_rotvec(p[56:59]).as_matrix()
    c, pv = mesh.vertices.mean(0), np.array([0.0, -0.5, 0.0])
    expect = ((mesh.vertices - pv) @ Rn.T + pv - c) @ Rg.T + c
    np.testing.assert_allclose(rig.apply(p).vertices, expect, atol=1e-14)


@pytest.mark.parametrize("w", [[0.3, -0.2, 0.9], [0.0, 0.0, 0.0], [1e-8, 0, 2e-8], [2.5, 1.0, -0.4]])
def test_axis_angle_gradient(w):
    t = Tensor(np.asarray(w, dtype=float), requires_grad=True)
    weights = np.random.default_rng(0).normal(size=(3, 3))
    rep = check_gradients(lambda: (axis_angle_to_rotmat(t) * weights).sum(), [t], h=1e-6)
    assert rep.max_abs < 1e-8
    np.testing.assert_allclose(axis_angle_to_rotmat(w).data, Rotation.from_rotvec(w).as_matrix(), atol=1e-15)


def test_blendshape_dimension_mismatch():
    mesh = _rig_mesh()
    with pytest.raises(ContractError):
        BlendshapeRig(mesh, np.zeros((3 * len(mesh.vertices), 10)))
    rig = BlendshapeRig(mesh, np.zeros((3 * len(mesh.vertices), 59)))
    with pytest.raises(ContractError):
        rig.apply(np.zeros(58))


# ---------------------------------------------------------------- file formats

def test_obj_round_trip(tmp_path):
    mesh = grid_mesh(3, 2)
    save_obj(tmp_path / "m.obj", mesh)
    back = load_obj(tmp_path / "m.obj")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_obj_quads_and_slashes(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 4/1\n")
    m = load_obj(p)
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    p.write_text("v 0 0 0\nv 1 zero 0\n")
    with pytest.raises(FormatError) as err:
        load_obj(p)
    assert err.value.offset == 8


def test_basis_round_trip(tmp_path):
    basis = np.random.default_rng(0).normal(size=(12, 5))
    save_basis(tmp_path / "b.bsb", basis)
    np.testing.assert_array_equal(load_basis(tmp_path / "b.bsb"), basis)
    raw = (tmp_path / "b.bsb").read_bytes()
    (tmp_path / "bad.bsb").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_basis(tmp_path / "bad.bsb")
    (tmp_path / "short.bsb").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_basis(tmp_path / "short.bsb")


def test_bound_set_round_trip(tmp_path):
    b = _random_bound(grid_mesh(2, 2), 4)
    b.offsets[:] = np.random.default_rng(2).normal(size=b.offsets.shape)
    save_bound_set(tmp_path / "set.json", b)
    back = load_bound_set(tmp_path / "set.json")
    for name in ("mu", "rotation", "log_scale", "opacity_logit", "color"):
        np.testing.assert_array_equal(getattr(back, name).data, getattr(b, name).data)
    np.testing.assert_array_equal(back.offsets, b.offsets)
    np.testing.assert_array_equal(back.anchor_index, b.anchor_index)
    np.testing.assert_array_equal(back.face_index, b.face_index)
