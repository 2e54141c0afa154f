import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialsplat.errors import ConfigError, ContractError, FormatError, NumericalError, ValidationError
from socialsplat.motiongen import AudioFeatureSeq, MotionSeq
from socialsplat.numcore import Tensor, check_gradients
from socialsplat.social import SocialRelationship
from socialsplat.synthetic import (SMALL_GROUPS, attach_frames, default_camera, make_avatar, make_dyadic_dataset,
                                   make_rig)
from socialsplat.training import (Clip, Dataset, FrameRef, LossWeights, RunConfig, dssim, frechet_from_stats,
                                  l1_loss, l_image, l_joint, l_mesh, l_offset, l_pos, load_checkpoint,
                                  load_manifest, load_stage_checkpoint, metric_fd, metric_l1, metric_mse,
                                  metric_pfd, metric_psnr, metric_ssim, read_loss_log, run_stage1, run_stage2,
                                  run_stage3, save_checkpoint, save_stage_checkpoint, ssim, write_dataset,
                                  write_loss_log)
from socialsplat.training.losses import SSIM_K1, SSIM_K2, gaussian_window
from socialsplat.training.metrics import SingularCovarianceWarning
from socialsplat.training.stages import avatar_image, eval_mesh_loss, stage2_query

C1, C2 = SSIM_K1 ** 2, SSIM_K2 ** 2


# ---------------------------------------------------------------- losses

def test_l_mesh_examples():
    assert l_mesh(np.zeros((1, 1)), np.full((1, 1), 3.0)).item() == 3.0
    # four frames of unit error: sqrt(4) / sqrt(4)
    assert l_mesh(np.zeros((4, 1)), np.ones((4, 1))).item() == 1.0
    batch_pred = np.zeros((2, 1, 1))
    batch_gt = np.array([[[3.0]], [[1.0]]])
    assert l_mesh(batch_pred, batch_gt).item() == 2.0
    with pytest.raises(ContractError):
        l_mesh(np.zeros((3, 2)), np.zeros((3, 3)))


def naive_ssim(a, b, size=11, sigma=1.5):
    k = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-k * k / (2 * sigma * sigma))
    w = np.outer(g, g)
    w /= w.sum()
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    vals = []
    for ch in range(a.shape[2]):
        for i in range(a.shape[0] - size + 1):
            for j in range(a.shape[1] - size + 1):
                pa, pb = a[i:i + size, j:j + size, ch], b[i:i + size, j:j + size, ch]
                ma, mb = np.sum(w * pa), np.sum(w * pb)
                va = np.sum(w * (pa - ma) ** 2)
                vb = np.sum(w * (pb - mb) ** 2)
                cov = np.sum(w * (pa - ma) * (pb - mb))
                vals.append(((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2)))
    return float(np.mean(vals))


@pytest.mark.parametrize("shape", [(16, 16, 3), (13, 17), (12, 20, 2)])
def test_ssim_matches_sliding_window(shape):
    rng = np.random.default_rng(sum(shape))
    a = rng.uniform(size=shape)
    b = np.clip(a + rng.normal(scale=0.1, size=shape), 0, 1)
    assert abs(ssim(a, b).item() - naive_ssim(a, b)) < 1e-10
    assert abs(metric_ssim(a, b) - naive_ssim(a, b)) < 1e-10


def test_ssim_window_normalized_and_small_images_rejected():
    assert abs(gaussian_window().sum() - 1.0) < 1e-15
    with pytest.raises(ContractError):
        ssim(np.zeros((10, 12)), np.zeros((10, 12)))


def test_dssim_of_constant_images():
    a, b = np.zeros((16, 16, 3)), np.ones((16, 16, 3))
    expected = (1.0 - C1 / (1.0 + C1)) / 2.0
    assert abs(dssim(a, b).item() - expected) < 1e-12


def test_l_image_hand_value():
    render, gt = np.zeros((16, 16, 3)), np.full((16, 16, 3), 0.5)
    d = (1.0 - C1 / (0.25 + C1)) / 2.0
    expected = 0.8 * 0.5 + 0.2 * d
    assert abs(l_image(render, gt).item() - expected) < 1e-12
    assert l1_loss(render, gt).item() == 0.5
    # lambda = 0 leaves plain L1, lambda = 1 plain D-SSIM
    assert l_image(render, gt, LossWeights(dssim_lambda=0.0)).item() == 0.5
    assert abs(l_image(render, gt, LossWeights(dssim_lambda=1.0)).item() - d) < 1e-15


def test_default_weights():
    w = LossWeights()
    assert (w.dssim_lambda, w.lambda1, w.lambda2, w.lambda3, w.eps_pos, w.eps_offset) == (0.2, 0.5, 0.01, 0.01, 1, 1)
    with pytest.raises(ConfigError):
        LossWeights(lambda1=-1.0)
    with pytest.raises(ConfigError):
        LossWeights(dssim_lambda=1.5)


def test_floored_norms():
    assert abs(l_pos(np.zeros((5, 3))).item() - np.sqrt(15.0)) < 1e-12
    mu = np.zeros((2, 3))
    mu[0, 1] = -2.0
    assert abs(l_pos(mu).item() - np.sqrt(5.0 + 4.0)) < 1e-12
    assert abs(l_offset(np.full((2, 3), 0.3)).item() - np.sqrt(6.0)) < 1e-12
    x = Tensor(mu.copy(), requires_grad=True)
    from socialsplat.numcore import backward
    backward(l_pos(x))
    expect = np.zeros((2, 3))
    expect[0, 1] = -2.0 / 3.0
    assert np.allclose(x.grad, expect, atol=1e-15)


def test_l_joint_weighting():
    assert abs(l_joint(1.0, 2.0, 3.0, 4.0).item() - 2.07) < 1e-12
    w = LossWeights(lambda1=1.0, lambda2=0.0, lambda3=2.0)
    assert l_joint(1.0, 2.0, 3.0, 4.0, w).item() == 11.0


def test_image_loss_gradients():
    rng = np.random.default_rng(0)
    gt = rng.uniform(size=(12, 13, 2))
    x = Tensor(np.clip(gt + rng.normal(scale=0.2, size=gt.shape), 0.05, 0.95), requires_grad=True)
    rep = check_gradients(lambda: l_image(x, gt), [x], h=1e-6)
    assert rep.relative < 1e-4, rep


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
    s = ssim(a, b).item()
    assert abs(s - ssim(b, a).item()) < 1e-12
    assert -1.0 <= s <= 1.0
    assert abs(ssim(a, a).item() - 1.0) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_l_mesh_is_a_distance(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.normal(size=(5, 4)) for _ in range(3))
    assert l_mesh(a, a).item() == 0.0
    assert l_mesh(a, b).item() > 0.0
    assert abs(l_mesh(a, b).item() - l_mesh(b, a).item()) < 1e-12
    assert l_mesh(a, c).item() <= l_mesh(a, b).item() + l_mesh(b, c).item() + 1e-12


# ---------------------------------------------------------------- metrics

def sqrtm_psd(m):
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def fd_oracle(mu1, s1, mu2, s2):
    # symmetric form: tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)
    r = sqrtm_psd(s1)
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2 * np.trace(sqrtm_psd(r @ s2 @ r)))


def test_fd_closed_forms():
    # one dimension: (m1 - m2)^2 + (sigma1 - sigma2)^2
    val = frechet_from_stats(np.array([1.0]), np.array([[4.0]]), np.array([-2.0]), np.array([[9.0]]))
    assert abs(val - (9.0 + 1.0)) < 1e-9
    # diagonal covariances
    val = frechet_from_stats(np.zeros(2), np.diag([1.0, 4.0]), np.array([3.0, 4.0]), np.diag([9.0, 16.0]))
    assert abs(val - (25.0 + 4.0 + 4.0)) < 1e-9
    # same covariance, shifted mean
    s = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert abs(frechet_from_stats(np.zeros(2), s, np.ones(2), s) - 2.0) < 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_fd_matches_symmetric_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    s1, s2 = a @ a.T + 0.1 * np.eye(4), b @ b.T + 0.1 * np.eye(4)
    mu1, mu2 = rng.normal(size=4), rng.normal(size=4)
    assert abs(frechet_from_stats(mu1, s1, mu2, s2) - fd_oracle(mu1, s1, mu2, s2)) < 1e-9


def test_metric_fd_uses_sample_statistics():
    rng = np.random.default_rng(7)
    x, y = rng.normal(size=(50, 3)), rng.normal(loc=1.0, size=(40, 3))
    expect = fd_oracle(x.mean(0), np.cov(x.T), y.mean(0), np.cov(y.T))
    assert abs(metric_fd(x, y) - expect) < 1e-9
    assert abs(metric_fd(x, x)) < 1e-9
    seqs = [MotionSeq(x[:25], {"EXP": 1, "JAW": 2}), MotionSeq(x[25:], {"EXP": 1, "JAW": 2})]
    assert abs(metric_fd(seqs, y) - expect) < 1e-9
    g = metric_fd(seqs, [MotionSeq(y, {"EXP": 1, "JAW": 2})], group="JAW")
    assert abs(g - fd_oracle(x[:, 1:].mean(0), np.cov(x[:, 1:].T), y[:, 1:].mean(0), np.cov(y[:, 1:].T))) < 1e-9


def test_singular_covariance_warns():
    x = np.zeros((10, 2))
    x[:, 0] = np.arange(10.0)
    shifted = x + np.array([1.0, 0.0])
    with pytest.warns(SingularCovarianceWarning):
        val = metric_fd(x, shifted)
    assert abs(val - 1.0) < 1e-6


def test_pfd_concatenates_partner_motion():
    rng = np.random.default_rng(3)
    pred, gt, partner = rng.normal(size=(30, 2)), rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    expect = metric_fd(np.hstack([pred, partner]), np.hstack([gt, partner]))
    assert abs(metric_pfd(pred, gt, partner) - expect) < 1e-12
    with pytest.raises(ContractError):
        metric_pfd(pred, gt, None)
    with pytest.raises(ContractError):
        metric_pfd(pred, gt, partner[:10])


def test_image_metrics():
    a = np.zeros((8, 8, 3))
    assert abs(metric_psnr(a, a + 0.1) - 20.0) < 1e-9
    assert metric_psnr(a, a) == float("inf")
    assert abs(metric_l1(a, a + 0.25) - 0.25) < 1e-15
    assert metric_mse(np.zeros((3, 2)), np.full((3, 2), 2.0)) == 4.0
    with pytest.raises(ContractError):
        metric_l1(a, np.zeros((8, 7, 3)))


# ---------------------------------------------------------------- files and configs

def test_checkpoint_round_trip(tmp_path):
    blobs = {"a": np.arange(6.0).reshape(2, 3), "b/c": np.array(3.5)}
    path = tmp_path / "x.rsck"
    save_checkpoint(path, blobs, {"k": [1, 2]})
    got, meta = load_checkpoint(path)
    assert meta == {"k": [1, 2]}
    assert set(got) == set(blobs) and all(np.array_equal(got[k], blobs[k]) for k in blobs)
    raw = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "short")


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"seeds": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"stage": {"stage": 1, "learning_rate": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"stage": {"stage": 4}})
    cfg = RunConfig.from_dict({"seed": 3, "stage": {"stage": 2}})
    assert cfg.stage.steps == 2000
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_loss_log_round_trip(tmp_path):
    rows = [{"step": 0, "mesh_term": 0.1, "image_term": 0.2, "pos_term": 1 / 3, "offset_term": 0.0,
             "total": 0.1 + 0.2 + 1 / 3}]
    write_loss_log(tmp_path / "l.csv", rows)
    assert read_loss_log(tmp_path / "l.csv") == rows


@pytest.fixture(scope="module")
def small():
    rig = make_rig()
    ds, task = make_dyadic_dataset(n_per_class=2, t=12, rig=rig)
    attach_frames(ds, make_avatar(rig.base), default_camera(32, 32), indices=(0, 6))
    model = {"d_audio": 16, "groups": SMALL_GROUPS, "d_model": 16, "n_heads": 2, "n_layers": 1,
             "d_s": 4, "d_q": 8, "offset_hidden": 16}
    return rig, ds, model


def test_manifest_round_trip(tmp_path, small):
    rig, ds, _ = small
    path = write_dataset(tmp_path / "d", ds, image_ext=".ppm")
    back = load_manifest(path)
    assert len(back) == len(ds)
    np.testing.assert_allclose(back.rig.basis, rig.basis)
    np.testing.assert_allclose(back.rig.base.vertices, rig.base.vertices)
    for c0, c1 in zip(ds.clips, back.clips):
        assert c1.relationship == c0.relationship
        assert np.array_equal(c1.motion_B.frames, c0.motion_B.frames)
        assert [f.motion_index for f in c1.frames] == [f.motion_index for f in c0.frames]
        # 8-bit images
        assert np.max(np.abs(c1.frames[0].image - c0.frames[0].image)) <= 0.5 / 255 + 1e-12
    doc = json.loads(open(path).read())
    doc["clips"][0]["extra"] = 1
    with open(path, "w") as fh:
        json.dump(doc, fh)
    with pytest.raises(ConfigError):
        load_manifest(path)


def test_clip_validation():
    g = {"A": 2}
    m = MotionSeq(np.zeros((5, 2)), g)
    with pytest.raises(ValidationError):
        Clip("x", AudioFeatureSeq(np.zeros((5, 3)), 25), AudioFeatureSeq(np.zeros((5, 3)), 25), m,
             MotionSeq(np.zeros((4, 2)), g), SocialRelationship(True, True))
    with pytest.raises(ValidationError):
        Clip("x", AudioFeatureSeq(np.zeros((5, 3)), 25), AudioFeatureSeq(np.zeros((5, 3)), 25), m, m,
             SocialRelationship(True, True), [FrameRef(default_camera(), np.zeros((64, 64, 3)), 5)])


# ---------------------------------------------------------------- stages

def _cfg(model, **stage):
    return RunConfig.from_dict({"seed": 1, "stage": stage, "model": model})


def test_stage1_reduces_mesh_loss(small):
    _, ds, model = small
    cfg = _cfg(model, stage=1, steps=100, batch_size=4, window=12, lr_network=1e-2)
    m, rows = run_stage1(cfg, ds)
    totals = np.array([r["total"] for r in rows])
    assert totals[-20:].mean() < 0.7 * totals[:20].mean()
    assert all(r["image_term"] == 0.0 for r in rows)
    assert eval_mesh_loss(m, ds) < totals[:20].mean()


def test_stage1_deterministic(small):
    _, ds, model = small
    cfg = _cfg(model, stage=1, steps=5, batch_size=2, window=8)
    assert run_stage1(cfg, ds)[1] == run_stage1(cfg, ds)[1]


def test_stage1_rejects_empty_dataset(small):
    with pytest.raises(ConfigError):
        run_stage1(_cfg(small[2], stage=1, steps=1), Dataset([]))


def test_stage2_fits_frames_and_leaves_motion_model_alone(small):
    rig, ds, model = small
    cfg1 = _cfg(model, stage=1, steps=1)
    m, _ = run_stage1(cfg1, ds)
    before = {k: v.copy() for k, v in m.state_dict().items()}
    cfg = _cfg(model, stage=2, steps=80, densify_interval=20, densify_grad=1e-6)
    av, rows = run_stage2(cfg, ds, social=m.social)
    assert all(np.array_equal(before[k], v) for k, v in m.state_dict().items())
    assert rows[-1]["image_term"] < rows[0]["image_term"]
    assert all(r["mesh_term"] == 0.0 for r in rows)
    for r in rows:
        assert abs(r["image_term"] + r["pos_term"] + r["offset_term"] - r["total"]) < 1e-12
    av.bset.check(rig.base.n_faces)
    assert av.bset.n_anchors == rig.base.n_faces
    assert av.bset.n_neurals > 0
    assert np.all((av.bset.color.data >= 0) & (av.bset.color.data <= 1))


def test_stage2_camera_mismatch_and_nan(small):
    rig, ds, model = small
    clip = ds.clips[0]
    bad = Dataset([Clip("b", clip.audio_A, clip.audio_B, clip.motion_A, clip.motion_B, clip.relationship,
                        [FrameRef(default_camera(64, 64), np.zeros((32, 32, 3)), 0)])], rig)
    with pytest.raises(ValidationError):
        run_stage2(_cfg(model, stage=2, steps=1), bad)
    nan = Dataset([Clip("n", clip.audio_A, clip.audio_B, clip.motion_A, clip.motion_B, clip.relationship,
                        [FrameRef(default_camera(32, 32), np.full((32, 32, 3), np.nan), 0)])], rig)
    with pytest.raises(NumericalError):
        run_stage2(_cfg(model, stage=2, steps=1), nan)
    with pytest.raises(ConfigError):
        run_stage2(_cfg(model, stage=2, steps=1), Dataset(ds.clips, None))


def test_stage3_trains_both_and_checkpoints(tmp_path, small):
    rig, ds, model = small
    m, _ = run_stage1(_cfg(model, stage=1, steps=2, batch_size=2, window=8), ds)
    av, _ = run_stage2(_cfg(model, stage=2, steps=3, densify=False), ds, social=m.social)
    w0 = {k: v.copy() for k, v in m.state_dict().items()}
    mu0 = av.bset.mu.data.copy()
    cfg = _cfg(model, stage=3, steps=3, batch_size=2, frames_per_step=2)
    m, av, rows = run_stage3(cfg, ds, m, av)
    assert any(not np.array_equal(w0[k], v) for k, v in m.state_dict().items() if k.startswith("social."))
    assert not np.array_equal(mu0, av.bset.mu.data)
    assert all(r["mesh_term"] > 0 and r["image_term"] > 0 for r in rows)
    with pytest.raises(ConfigError):
        run_stage3(cfg, ds, None, av)

    path = tmp_path / "s3.rsck"
    save_stage_checkpoint(path, cfg, m, av)
    back = load_stage_checkpoint(path)
    assert back["meta"]["stage"] == 3
    c = ds.clips[0]
    with_no = [mm(c.audio_A.frames, c.audio_B.frames, c.motion_A.frames, c.relationship).data
               for mm in (m, back["model"])]
    assert np.array_equal(*with_no)
    q = m.social.query(c.relationship).data
    imgs = [avatar_image(a, rig, c.motion_B.frames[3], default_camera(32, 32), q, 0.5) for a in (av, back["avatar"])]
    assert np.array_equal(*imgs)


def test_stage2_query_defaults_to_seeded_social_module(small):
    _, _, model = small
    cfg = _cfg(model, stage=2, steps=1)
    rel = SocialRelationship(False, True)
    assert np.array_equal(stage2_query(cfg).query(rel).data, stage2_query(cfg).query(rel).data)
