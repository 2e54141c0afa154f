"""``socialsplat`` command line.

Exit codes: 0 success, 2 input error, 3 missing prerequisite, 4 numerical failure.
Every successful command writes a run manifest echoing its resolved arguments;
``socialsplat replay MANIFEST`` re-executes it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import NumericalError, PrerequisiteError

EXIT_OK, EXIT_INPUT, EXIT_PREREQ, EXIT_NUMERIC = 0, 2, 3, 4


class InputError(ValueError):
    pass


# ---------------------------------------------------------------- helpers

def parse_resolution(text):
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise InputError(f"resolution must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise InputError(f"resolution must be positive, got {text!r}")
    return w, h


def _relationship(tokens):
    from .social import parse_relationship_flags

    return parse_relationship_flags(" ".join(tokens) if isinstance(tokens, (list, tuple)) else tokens)


def _need(path, what):
    if not os.path.exists(path):
        raise InputError(f"{what} not found: {path}")
    return path


def _out_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def _json_dump(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _manifest(args, manifest_path, outputs, config=None):
    doc = {"tool": "socialsplat", "version": __version__, "command": args.command,
           "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")},
           "outputs": sorted(os.path.abspath(o) for o in outputs)}
    if config is not None:
        doc["config"] = config
    _json_dump(manifest_path, doc)
    return manifest_path


def _apply_option_config(args, parser_defaults):
    """``--config`` for non-training commands: a JSON object of option defaults."""
    if not getattr(args, "config", None):
        return
    with open(_need(args.config, "config")) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: {exc.msg} at byte {exc.pos}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: config must be a JSON object")
    unknown = sorted(set(doc) - set(parser_defaults))
    if unknown:
        raise InputError(f"{args.config}: unknown config keys {unknown}")
    for k, v in doc.items():
        if getattr(args, k) == parser_defaults[k]:
            setattr(args, k, v)


def _abspaths(args, keys):
    for k in keys:
        v = getattr(args, k, None)
        if isinstance(v, str):
            setattr(args, k, os.path.abspath(v))


# ---------------------------------------------------------------- render

def cmd_render(args):
    from .gsplat import load_camera, load_scene, render_image, scene_set, write_image

    gaussians, background = load_scene(_need(args.scene, "scene"))
    cam = load_camera(_need(args.camera, "camera"))
    if args.resolution:
        cam = cam.resized(*parse_resolution(args.resolution))
    img = render_image(scene_set(gaussians), cam, background)
    out_dir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(out_dir, exist_ok=True)
    write_image(args.output, img)
    _manifest(args, args.output + ".run.json", [args.output])
    return EXIT_OK


# ---------------------------------------------------------------- animate

def _load_avatar(path):
    """(BoundGaussianSet, offset function or None) from a bound-set file or a stage checkpoint."""
    from .rigging import load_bound_set

    if path.endswith(".json"):
        return load_bound_set(path, requires_grad=False), None, None
    from .training.stages import load_stage_checkpoint, run_config_from_checkpoint, stage2_query

    ck = load_stage_checkpoint(path)
    if "avatar" not in ck:
        raise PrerequisiteError(f"{path} holds no Gaussian avatar (train stage 2 first)")
    social = ck["model"].social if "model" in ck else stage2_query(run_config_from_checkpoint(ck["meta"]))
    return ck["avatar"].bset, ck["avatar"].offsetnet, social


def animate_frames(rig, bset, motion, cam, background=(0.0, 0.0, 0.0), offsetnet=None, q=None, count=None):
    """Yield float images: blendshapes, binding frames, deformable Gaussians, rasterize."""
    from .gsplat import render_image
    from .numcore import no_grad
    from .rigging import compute_binding_frames, to_deformable
    from .training.stages import clip_time

    background = np.asarray(background, dtype=np.float64)
    with no_grad():
        for k, params in enumerate(motion[:count]):
            frames = compute_binding_frames(rig.vertices(params).data, rig.base.faces)
            offsets = offsetnet(q, clip_time(k, len(motion))) if offsetnet is not None else None
            yield render_image(to_deformable(bset, frames, offsets), cam, background)


def cmd_animate(args):
    from .gsplat import load_camera, write_image
    from .motiongen import load_motion
    from .rigging import BlendshapeRig, load_basis, load_obj

    mesh = load_obj(_need(args.mesh, "mesh")).validate()
    basis = load_basis(_need(args.basis, "basis"))
    motion = load_motion(_need(args.motion, "motion"))
    bset, offsetnet, social = _load_avatar(_need(args.avatar, "avatar"))
    cam = load_camera(_need(args.camera, "camera"))
    if args.resolution:
        cam = cam.resized(*parse_resolution(args.resolution))
    rig = BlendshapeRig(mesh, basis, motion.groups)
    if motion.frames.shape[1] != rig.n_params:
        raise InputError(f"motion has {motion.frames.shape[1]} parameters, basis has {rig.n_params}")
    if bset.n_anchors != mesh.n_faces:
        raise InputError(f"avatar has {bset.n_anchors} anchors, mesh has {mesh.n_faces} faces")
    n = len(motion) if args.frames is None else int(args.frames)
    if not 0 < n <= len(motion):
        raise InputError(f"--frames {n} outside 1..{len(motion)}")
    q = None
    if args.relationship and offsetnet is not None:
        q = social.query(_relationship(args.relationship)).data
    _out_dir(args.out)
    outputs = []
    for k, img in enumerate(animate_frames(rig, bset, motion.frames, cam, args.background,
                                           offsetnet if q is not None else None, q, n)):
        path = os.path.join(args.out, f"frame-{k:05d}.{args.format}")
        write_image(path, img)
        outputs.append(path)
    _manifest(args, os.path.join(args.out, "run_manifest.json"), outputs)
    return EXIT_OK


# ---------------------------------------------------------------- train

def _run_config(args):
    from .training import RunConfig

    doc = {}
    if args.config:
        with open(_need(args.config, "config")) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.config}: {exc.msg} at byte {exc.pos}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: config must be a JSON object")
    doc = dict(doc)
    stage = dict(doc.get("stage") or {})
    stage["stage"] = args.stage
    if args.steps is not None:
        stage["steps"] = args.steps
    doc["stage"] = stage
    if args.seed is not None:
        doc["seed"] = args.seed
    return RunConfig.from_dict(doc)


def _load_stage(path, key, what):
    from .training.stages import load_stage_checkpoint

    if not path:
        raise PrerequisiteError(f"{what} checkpoint is required")
    if not os.path.exists(path):
        raise PrerequisiteError(f"{what} checkpoint not found: {path}")
    ck = load_stage_checkpoint(path)
    if key not in ck:
        raise PrerequisiteError(f"{path} is not a {what} checkpoint")
    return ck[key]


def cmd_train(args):
    from .training import load_manifest, run_stage1, run_stage2, run_stage3, save_stage_checkpoint, write_loss_log

    cfg = _run_config(args)
    model = avatar = None
    if args.stage == 3:
        model = _load_stage(args.ckpt1, "model", "stage-1 motion")
        avatar = _load_stage(args.ckpt2, "avatar", "stage-2 avatar")
    elif args.stage == 2 and args.ckpt1:
        model = _load_stage(args.ckpt1, "model", "stage-1 motion")
    dataset = load_manifest(_need(_manifest_path(args.manifest), "manifest"))
    if args.stage == 1:
        model, rows = run_stage1(cfg, dataset, model)
    elif args.stage == 2:
        avatar, rows = run_stage2(cfg, dataset, avatar, social=model.social if model else None)
    else:
        model, avatar, rows = run_stage3(cfg, dataset, model, avatar)
    _out_dir(args.out)
    ckpt = os.path.join(args.out, f"stage{args.stage}.rsck")
    log = os.path.join(args.out, "loss_log.csv")
    save_stage_checkpoint(ckpt, cfg, model, avatar)
    write_loss_log(log, rows)
    conf = os.path.join(args.out, "run_config.json")
    _json_dump(conf, cfg.to_dict())
    _manifest(args, os.path.join(args.out, "run_manifest.json"), [ckpt, log, conf], cfg.to_dict())
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _manifest_path(path):
    return os.path.join(path, "manifest.json") if os.path.isdir(path) else path


def _json_float(x):
    return x if np.isfinite(x) else "inf"


def evaluate(pred, gt):
    """Metrics report for two datasets with matching clip ids."""
    from .training import metric_fd, metric_l1, metric_mse, metric_pfd, metric_psnr, metric_ssim

    p_ids = {c.id: c for c in pred.clips}
    g_ids = {c.id: c for c in gt.clips}
    if set(p_ids) != set(g_ids):
        raise InputError(f"clip ids do not match; only in prediction: {sorted(set(p_ids) - set(g_ids))}, "
                         f"only in ground truth: {sorted(set(g_ids) - set(p_ids))}")
    ids = sorted(g_ids)
    for i in ids:
        if p_ids[i].motion_B.frames.shape != g_ids[i].motion_B.frames.shape:
            raise InputError(f"clip {i}: predicted motion shape {p_ids[i].motion_B.frames.shape} "
                             f"!= {g_ids[i].motion_B.frames.shape}")
    pm = [p_ids[i].motion_B for i in ids]
    gm = [g_ids[i].motion_B for i in ids]
    partners = [g_ids[i].motion_A for i in ids]
    motion = {}
    for group in [None] + [g for g, n in gm[0].groups.items() if n > 0]:
        motion[group or "all"] = {"fd": metric_fd(pm, gm, group), "pfd": metric_pfd(pm, gm, partners, group),
                                  "mse": metric_mse(pm, gm, group)}
    frames = []
    for i in ids:
        pf, gf = p_ids[i].frames, g_ids[i].frames
        if len(pf) != len(gf):
            raise InputError(f"clip {i}: {len(pf)} predicted frames, {len(gf)} reference frames")
        for k, (a, b) in enumerate(zip(pf, gf)):
            frames.append({"clip": i, "index": k, "l1": metric_l1(a.image, b.image),
                           "psnr": _json_float(metric_psnr(a.image, b.image)),
                           "ssim": metric_ssim(a.image, b.image)})
    image = None
    if frames:
        psnr = [f["psnr"] for f in frames]
        image = {"n_frames": len(frames), "l1": float(np.mean([f["l1"] for f in frames])),
                 "psnr": "inf" if "inf" in psnr else float(np.mean(psnr)),
                 "ssim": float(np.mean([f["ssim"] for f in frames])), "per_frame": frames}
    return {"clips": ids, "motion": motion, "image": image}


def cmd_eval(args):
    from .training import load_manifest

    pred = load_manifest(_need(_manifest_path(args.pred), "prediction manifest"))
    gt = load_manifest(_need(_manifest_path(args.gt), "reference manifest"))
    report = evaluate(pred, gt)
    out_dir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(out_dir, exist_ok=True)
    _json_dump(args.output, report)
    _manifest(args, args.output + ".run.json", [args.output])
    return EXIT_OK


# ---------------------------------------------------------------- generate

def cmd_generate(args):
    from .motiongen import load_audio, load_motion, save_motion

    rel = _relationship(args.relationship)
    a_A = load_audio(_need(args.audio_A, "audio_A"))
    a_B = load_audio(_need(args.audio_B, "audio_B"))
    m_A = load_motion(_need(args.motion_A, "motion_A"))
    model = _load_stage(args.ckpt, "model", "motion")
    if a_A.frames.shape[1] != model.config.d_audio:
        raise InputError(f"audio has {a_A.frames.shape[1]} features, model expects {model.config.d_audio}")
    if m_A.frames.shape[1] != model.config.n_params:
        raise InputError(f"motion_A has {m_A.frames.shape[1]} parameters, model expects {model.config.n_params}")
    out = model.generate(a_A, a_B, m_A, rel)
    out_dir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(out_dir, exist_ok=True)
    save_motion(args.output, out)
    _manifest(args, args.output + ".run.json", [args.output])
    return EXIT_OK


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    from .synthetic import attach_frames, default_camera, make_avatar, make_dyadic_dataset, make_rig
    from .training import write_dataset

    w, h = parse_resolution(args.resolution)
    rig = make_rig(seed=args.seed)
    ds, _ = make_dyadic_dataset(args.clips_per_class, args.length, seed=args.seed, rig=rig)
    if args.images:
        attach_frames(ds, make_avatar(rig.base, args.seed), default_camera(w, h),
                      indices=range(0, args.length, max(1, args.length // args.images)))
    path = write_dataset(args.out, ds, image_ext=".ppm")
    _manifest(args, os.path.join(args.out, "run_manifest.json"), [path])
    return EXIT_OK


# ---------------------------------------------------------------- replay

def cmd_replay(args):
    with open(_need(args.manifest, "run manifest")) as fh:
        doc = json.load(fh)
    if doc.get("tool") != "socialsplat" or doc.get("command") not in COMMANDS:
        raise InputError(f"{args.manifest} is not a socialsplat run manifest")
    ns = argparse.Namespace(command=doc["command"], **doc["args"])
    return COMMANDS[doc["command"]](ns)


COMMANDS = {"render": cmd_render, "animate": cmd_animate, "train": cmd_train, "eval": cmd_eval,
            "generate": cmd_generate, "synth": cmd_synth, "replay": cmd_replay}

_PATHS = {"render": ["scene", "camera", "output", "config"],
          "animate": ["mesh", "basis", "motion", "avatar", "camera", "out", "config"],
          "train": ["manifest", "out", "config", "ckpt1", "ckpt2"],
          "eval": ["pred", "gt", "output", "config"],
          "generate": ["audio_A", "audio_B", "motion_A", "ckpt", "output", "config"],
          "synth": ["out", "config"], "replay": ["manifest"]}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON options (train: run config with stage/model/weights)")
    common.add_argument("--seed", type=int, default=None)

    p = argparse.ArgumentParser(prog="socialsplat", description="Socially-conditioned Gaussian talking heads")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", parents=[common], help="render a Gaussian scene file")
    r.add_argument("scene")
    r.add_argument("camera")
    r.add_argument("output", help=".ppm or .png")
    r.add_argument("--resolution", help="WxH; rescales the camera intrinsics")

    a = sub.add_parser("animate", parents=[common], help="render a motion file through the rig")
    for name in ("mesh", "basis", "motion", "avatar", "camera"):
        a.add_argument(name)
    a.add_argument("--out", required=True)
    a.add_argument("--frames", type=int)
    a.add_argument("--resolution")
    a.add_argument("--relationship", nargs="+", help="e.g. blood non-equal; enables the offset network")
    a.add_argument("--background", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    a.add_argument("--format", choices=["ppm", "png"], default="ppm")

    t = sub.add_parser("train", parents=[common], help="run one training stage")
    t.add_argument("manifest")
    t.add_argument("--stage", type=int, choices=[1, 2, 3], required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int)
    t.add_argument("--ckpt1", help="stage-1 motion checkpoint (stage 3; optional for stage 2)")
    t.add_argument("--ckpt2", help="stage-2 avatar checkpoint (stage 3)")

    e = sub.add_parser("eval", parents=[common], help="motion and image metrics report")
    e.add_argument("pred", help="prediction manifest or its directory")
    e.add_argument("gt", help="reference manifest or its directory")
    e.add_argument("output")

    g = sub.add_parser("generate", parents=[common], help="predict listener motion")
    for name in ("audio_A", "audio_B", "motion_A", "ckpt", "output"):
        g.add_argument(name)
    g.add_argument("--relationship", nargs="+", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dyadic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--clips-per-class", type=int, default=4)
    s.add_argument("--length", type=int, default=24)
    s.add_argument("--images", type=int, default=2, help="ground-truth frames per clip")
    s.add_argument("--resolution", default="64x64")

    rp = sub.add_parser("replay", help="re-run a command from its run manifest")
    rp.add_argument("manifest")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command not in ("train", "replay"):
            sp = parser._subparsers._group_actions[0].choices[args.command]
            defaults = {a.dest: a.default for a in sp._actions if a.dest not in ("help", "config")}
            _apply_option_config(args, defaults)
        if args.command == "synth" and args.seed is None:
            args.seed = 0
        _abspaths(args, _PATHS[args.command])
        return COMMANDS[args.command](args)
    except PrerequisiteError as exc:
        print(f"socialsplat: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except NumericalError as exc:
        print(f"socialsplat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"socialsplat: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
