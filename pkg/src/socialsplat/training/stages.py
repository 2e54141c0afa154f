"""The three training stages and their checkpoints.

Stage 1 fits the motion generator on motion-parameter error. Stage 2 fits the
mesh-bound Gaussians and the offset network to posed ground-truth frames.
Stage 3 trains both together, with gradients flowing from pixels back to audio.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, FormatError, NumericalError, ValidationError
from ..gsplat.render import ScreenGradStats, render
from ..motiongen.model import MotionGenerator
from ..numcore.optim import Adam
from ..numcore.tensor import backward, no_grad
from ..rigging.bound import FIELDS, BoundGaussianSet, init_anchors, to_deformable
from ..rigging.densify import DensifyThresholds, densify
from ..rigging.frames import compute_binding_frames
from ..social import GaussianOffsetNet
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig
from .losses import l_image, l_joint, l_mesh, l_offset, l_pos

LOG_COLUMNS = ("step", "mesh_term", "image_term", "pos_term", "offset_term", "total")


@dataclass
class Avatar:
    bset: BoundGaussianSet
    offsetnet: GaussianOffsetNet


def new_avatar(rig, model_cfg, seed):
    rng = np.random.default_rng(seed + 1)
    bset = init_anchors(rig.base)
    net = GaussianOffsetNet(bset.n_anchors, model_cfg.d_q, rng, model_cfg.offset_hidden,
                            model_cfg.offset_freqs, model_cfg.offset_horizon)
    return Avatar(bset, net)


# ---------------------------------------------------------------- helpers

def _finite(value, step, what="loss"):
    if not np.isfinite(value):
        raise NumericalError(f"{what} became {value} at step {step}")
    return value


def _row(step, mesh=0.0, image=0.0, pos=0.0, offset=0.0):
    terms = [float(mesh), float(image), float(pos), float(offset)]
    return dict(zip(LOG_COLUMNS, [step] + terms + [sum(terms)]))


def write_loss_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[c])) for c in LOG_COLUMNS[1:]])


def read_loss_log(path):
    with open(path) as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in r.items()} for r in csv.DictReader(fh)]


def _clamp_colors(bset):
    np.clip(bset.color.data, 0.0, 1.0, out=bset.color.data)


def clip_time(index, length):
    return index / max(length - 1, 1)


def sample_batch(dataset, batch_size, window, rng):
    clips = dataset.clips
    idx = rng.choice(len(clips), size=batch_size, replace=len(clips) < batch_size)
    chosen = [clips[i] for i in idx]
    w = min(window, min(len(c) for c in chosen))
    starts = [int(rng.integers(0, len(c) - w + 1)) for c in chosen]

    def stack(attr):
        return np.stack([getattr(c, attr).frames[s:s + w] for c, s in zip(chosen, starts)])

    return chosen, starts, w, stack("audio_A"), stack("audio_B"), stack("motion_A"), stack("motion_B")


def decoder_inputs(model, aA, aB, mA, rels, gt, p, rng):
    """Previous-frame decoder inputs: ground truth, with each frame swapped for the
    model's own teacher-forced prediction with probability ``p``."""
    if p <= 0.0:
        return gt
    with no_grad():
        own = model(aA, aB, mA, rels, target=gt).data
    swap = rng.uniform(size=gt.shape[:-1] + (1,)) < p
    return np.where(swap, own, gt)


# ---------------------------------------------------------------- stage 1

def run_stage1(cfg, dataset, model=None, callback=None):
    """Motion loss only; returns (model, loss rows)."""
    if not dataset.clips:
        raise ConfigError("stage 1 needs a non-empty dataset")
    sc = cfg.stage
    rng = np.random.default_rng(cfg.seed)
    model = model or MotionGenerator(cfg.model.motion_config(cfg.seed))
    opt = Adam({"network": (model.parameters(trainable_only=True), sc.lr_network)})
    rows = []
    for step in range(sc.steps):
        chosen, _, _, aA, aB, mA, gt = sample_batch(dataset, sc.batch_size, sc.window, rng)
        rels = [c.relationship for c in chosen]
        prev = decoder_inputs(model, aA, aB, mA, rels, gt, sc.sampled_inputs, rng)
        loss = l_mesh(model(aA, aB, mA, rels, target=prev), gt)
        _finite(loss.item(), step)
        opt.zero_grad()
        backward(loss)
        opt.step()
        rows.append(_row(step, mesh=loss.item()))
        if callback:
            callback(step, rows[-1])
    return model, rows


def eval_mesh_loss(model, dataset):
    """Teacher-forced motion loss averaged over all clips."""
    with no_grad():
        vals = [l_mesh(model(c.audio_A.frames, c.audio_B.frames, c.motion_A.frames, c.relationship,
                             target=c.motion_B.frames), c.motion_B.frames).item() for c in dataset.clips]
    return float(np.mean(vals))


def avatar_image(avatar, rig, params, cam, q, t, background=(0.0, 0.0, 0.0)):
    """Numpy render of the avatar posed by ``params`` with offsets from (q, t)."""
    with no_grad():
        frames = compute_binding_frames(rig.vertices(params).data, rig.base.faces)
        c = avatar.offsetnet(q, t)
        return render(to_deformable(avatar.bset, frames, c), cam, background).data


def stage2_query(cfg, social=None):
    """Relationship query source for stage 2: the given social module or a fresh one."""
    return social if social is not None else MotionGenerator(cfg.model.motion_config(cfg.seed)).social


# ---------------------------------------------------------------- stage 2

def _frame_jobs(dataset, social):
    if dataset.rig is None:
        raise ConfigError("avatar stages need a mesh and blendshape basis in the dataset")
    jobs = []
    for clip in dataset.clips:
        for fr in clip.frames:
            h, w = fr.image.shape[:2]
            if (fr.camera.width, fr.camera.height) != (w, h):
                raise ValidationError(f"clip {clip.id}: camera is {fr.camera.width}x{fr.camera.height}, "
                                      f"image is {w}x{h}")
            jobs.append((clip, fr))
    if not jobs:
        raise ConfigError("avatar stages need at least one ground-truth frame")
    return jobs


def _densify_step(sc, avatar, stats, frames, extent, rng, opt):
    bset = avatar.bset
    lam = frames.lam.data[bset.face_of()]
    world = np.exp(bset.log_scale.data).max(axis=1) * lam
    th = DensifyThresholds(sc.densify_grad, sc.densify_size_fraction, sc.min_opacity, scene_extent=extent)
    res = densify(bset, stats.mean(), th, rng, world_scale=world)
    avatar.bset = res.bset
    opt.replace_group("gaussians", res.bset.tensors(), res.keep_rows)
    stats.reset(len(res.bset))
    return res


def run_stage2(cfg, dataset, avatar=None, social=None, callback=None):
    """Fit Gaussians and offsetnet to posed frames; returns (avatar, loss rows).

    ``social`` supplies the relationship query (held fixed here); a fresh
    generator's social module is used when absent.
    """
    sc, w = cfg.stage, cfg.weights
    social = stage2_query(cfg, social)
    jobs = _frame_jobs(dataset, social)
    rig = dataset.rig
    rng = np.random.default_rng(cfg.seed)
    avatar = avatar or new_avatar(rig, cfg.model, cfg.seed)
    with no_grad():
        prepared = []
        for clip, fr in jobs:
            verts = rig.vertices(clip.motion_B.frames[fr.motion_index]).data
            prepared.append((compute_binding_frames(verts, rig.base.faces), social.query(clip.relationship).data,
                             clip_time(fr.motion_index, len(clip)), fr))
    extent = rig.base.extent()
    opt = Adam({"gaussians": (avatar.bset.tensors(), sc.lr_gaussian),
                "offsetnet": (avatar.offsetnet.parameters(), sc.lr_network)})
    stats = ScreenGradStats(len(avatar.bset))
    rows, order = [], []
    for step in range(sc.steps):
        if not order:
            order = list(rng.permutation(len(prepared)))
        frames, q, t, fr = prepared[order.pop()]
        c = avatar.offsetnet(q, t)
        img = render(to_deformable(avatar.bset, frames, c), fr.camera, sc.background, stats)
        li = l_image(img, fr.image, w)
        lp = l_pos(avatar.bset.mu, w.eps_pos)
        lo = l_offset(c, w.eps_offset)
        total = li + lp * w.lambda2 + lo * w.lambda3
        _finite(total.item(), step)
        opt.zero_grad()
        backward(total)
        opt.step()
        _clamp_colors(avatar.bset)
        rows.append(_row(step, image=li.item(), pos=w.lambda2 * lp.item(), offset=w.lambda3 * lo.item()))
        if sc.densify_now(step + 1):
            _densify_step(sc, avatar, stats, frames, extent, rng, opt)
        if callback:
            callback(step, rows[-1])
    return avatar, rows


# ---------------------------------------------------------------- stage 3

def joint_loss(model, avatar, rig, chosen, aA, aB, mA, gt, frame_picks, cfg, prev=None):
    """Joint loss and its parts for one batch; ``frame_picks`` lists (batch row, FrameRef)."""
    w, sc = cfg.weights, cfg.stage
    pred = model(aA, aB, mA, [c.relationship for c in chosen], target=gt if prev is None else prev)
    lm = l_mesh(pred, gt)
    li = lo = 0.0
    for b, fr in frame_picks:
        verts = rig.vertices(pred[b, fr.motion_index])
        frames = compute_binding_frames(verts, rig.base.faces)
        c = avatar.offsetnet(model.social.query(chosen[b].relationship),
                             clip_time(fr.motion_index, len(chosen[b])))
        img = render(to_deformable(avatar.bset, frames, c), fr.camera, sc.background)
        li = l_image(img, fr.image, w) * (1.0 / len(frame_picks)) + li
        lo = l_offset(c, w.eps_offset) * (1.0 / len(frame_picks)) + lo
    lp = l_pos(avatar.bset.mu, w.eps_pos)
    return l_joint(lm, li, lp, lo, w), (lm, li, lp, lo)


def run_stage3(cfg, dataset, model, avatar, callback=None):
    """End-to-end joint loss; returns (model, avatar, loss rows)."""
    if model is None or avatar is None:
        raise ConfigError("stage 3 needs the stage-1 motion generator and the stage-2 avatar")
    if not dataset.clips:
        raise ConfigError("stage 3 needs a non-empty dataset")
    if dataset.rig is None:
        raise ConfigError("stage 3 needs a mesh and blendshape basis in the dataset")
    sc, w = cfg.stage, cfg.weights
    rng = np.random.default_rng(cfg.seed)
    opt = Adam({"network": (model.parameters(trainable_only=True) + avatar.offsetnet.parameters(),
                            sc.lr_network),
                "gaussians": (avatar.bset.tensors(), sc.lr_gaussian)})
    rows = []
    for step in range(sc.steps):
        chosen = [dataset.clips[i] for i in rng.choice(len(dataset.clips), size=sc.batch_size,
                                                         replace=len(dataset.clips) < sc.batch_size)]
        t = min(len(c) for c in chosen)
        aA, aB, mA, gt = (np.stack([getattr(c, a).frames[:t] for c in chosen])
                          for a in ("audio_A", "audio_B", "motion_A", "motion_B"))
        candidates = [(b, fr) for b, c in enumerate(chosen) for fr in c.frames if fr.motion_index < t]
        picks = [candidates[i] for i in sorted(rng.choice(len(candidates), size=min(sc.frames_per_step,
                                                                                    len(candidates)),
                                                          replace=False))] if candidates else []
        prev = decoder_inputs(model, aA, aB, mA, [c.relationship for c in chosen], gt, sc.sampled_inputs, rng)
        total, (lm, li, lp, lo) = joint_loss(model, avatar, dataset.rig, chosen, aA, aB, mA, gt, picks, cfg, prev)
        _finite(total.item(), step)
        opt.zero_grad()
        backward(total)
        opt.step()
        _clamp_colors(avatar.bset)
        val = (lambda x: float(x.item()) if hasattr(x, "item") else float(x))
        rows.append(_row(step, val(lm), w.lambda1 * val(li), w.lambda2 * val(lp), w.lambda3 * val(lo)))
        if callback:
            callback(step, rows[-1])
    return model, avatar, rows


# ---------------------------------------------------------------- checkpoints

def save_stage_checkpoint(path, cfg, model=None, avatar=None, stage=None):
    blobs, meta = {}, {"stage": stage or cfg.stage.stage, "config": cfg.to_dict()}
    if model is not None:
        blobs.update({f"model/{k}": v for k, v in model.state_dict().items()})
        meta["motion_config"] = model.config.to_dict()
    if avatar is not None:
        b = avatar.bset
        blobs.update({f"bound/{f}": getattr(b, f).data for f in FIELDS})
        blobs["bound/offsets"] = b.offsets
        blobs.update({f"offsetnet/{k}": v for k, v in avatar.offsetnet.state_dict().items()})
        meta["bound"] = {"face_index": b.face_index.tolist(), "anchor_index": b.anchor_index.tolist()}
        net = avatar.offsetnet
        meta["offsetnet"] = {"n_anchors": net.n_anchors, "d_q": net.mlp.d_in - 1 - 2 * net.n_freq,
                             "d_hidden": net.mlp.l1.d_out, "n_freq": net.n_freq, "horizon": net.horizon}
    save_checkpoint(path, blobs, meta)


def load_stage_checkpoint(path):
    """Returns dict with keys ``meta`` and optionally ``model`` and ``avatar``."""
    from ..motiongen.model import MotionGenConfig

    blobs, meta = load_checkpoint(path)
    out = {"meta": meta}
    try:
        if "motion_config" in meta:
            model = MotionGenerator(MotionGenConfig(**meta["motion_config"]))
            model.load_state_dict({k[6:]: v for k, v in blobs.items() if k.startswith("model/")})
            out["model"] = model
        if "bound" in meta:
            bset = BoundGaussianSet(*(blobs[f"bound/{f}"] for f in FIELDS), meta["bound"]["face_index"],
                                    meta["bound"]["anchor_index"], blobs["bound/offsets"])
            o = meta["offsetnet"]
            net = GaussianOffsetNet(o["n_anchors"], o["d_q"], np.random.default_rng(0), o["d_hidden"],
                                    o["n_freq"], o["horizon"])
            net.load_state_dict({k[10:]: v for k, v in blobs.items() if k.startswith("offsetnet/")})
            out["avatar"] = Avatar(bset, net)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint contents inconsistent: {exc}", path=path) from exc
    return out


def run_config_from_checkpoint(meta):
    return RunConfig.from_dict(meta.get("config"))


__all__ = [
    "Avatar", "LOG_COLUMNS", "avatar_image", "stage2_query", "ModelConfig", "clip_time", "eval_mesh_loss", "joint_loss",
    "load_stage_checkpoint", "new_avatar", "read_loss_log", "run_stage1", "run_stage2", "run_stage3",
    "sample_batch", "save_stage_checkpoint", "write_loss_log",
]
