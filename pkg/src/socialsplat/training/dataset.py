"""Dyadic clip datasets and their JSON manifests.

Manifest layout (paths relative to the manifest file)::

    {"version": 1, "mesh": "head.obj", "basis": "basis.bsb", "groups": {...},
     "clips": [{"id": "c0", "audio_A": ..., "audio_B": ..., "motion_A": ...,
                "motion_B": ..., "relationship": {"blood": true, "equal": false},
                "frames": [{"camera": "cam.json", "image": "f0.ppm", "motion_index": 0}]}]}

``mesh``, ``basis``, ``groups`` and per-clip ``frames`` are optional; they are
needed by the avatar stages only.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, FormatError, ValidationError
from ..gsplat.camera import load_camera, save_camera
from ..gsplat.imageio import read_image, write_image
from ..motiongen.sequences import align, load_audio, load_motion, save_audio, save_motion
from ..rigging.blendshape import BlendshapeRig, load_basis, save_basis
from ..rigging.mesh import load_obj, save_obj
from ..social import SocialRelationship

_CLIP_KEYS = {"id", "audio_A", "audio_B", "motion_A", "motion_B", "relationship", "frames"}
_TOP_KEYS = {"version", "mesh", "basis", "groups", "clips"}
_FRAME_KEYS = {"camera", "image", "motion_index"}


@dataclass
class FrameRef:
    camera: object
    image: np.ndarray
    motion_index: int


@dataclass
class Clip:
    id: str
    audio_A: object
    audio_B: object
    motion_A: object
    motion_B: object
    relationship: SocialRelationship
    frames: list = field(default_factory=list)

    def __post_init__(self):
        # bring both audio tracks onto the motion clock
        self.audio_A, _ = align(self.audio_A, self.motion_A)
        self.audio_B, _ = align(self.audio_B, self.motion_A)
        if len(self.motion_B) != len(self.motion_A):
            raise ValidationError(f"clip {self.id}: motion_B has {len(self.motion_B)} frames, "
                                  f"motion_A has {len(self.motion_A)}")
        for f in self.frames:
            if not 0 <= f.motion_index < len(self.motion_B):
                raise ValidationError(f"clip {self.id}: frame motion_index {f.motion_index} out of range")

    def __len__(self):
        return len(self.motion_A)


@dataclass
class Dataset:
    clips: list
    rig: BlendshapeRig = None

    def __len__(self):
        return len(self.clips)

    @property
    def groups(self):
        return self.clips[0].motion_B.groups if self.clips else None


def load_manifest(path):
    root = os.path.dirname(os.path.abspath(path))
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8", errors="replace")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=path, offset=len(text[:exc.pos].encode())) from exc
    if not isinstance(doc, dict) or "clips" not in doc:
        raise FormatError("manifest must be an object with a 'clips' list", path=path, offset=0)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown manifest keys {sorted(unknown)}")

    def p(rel):
        return os.path.join(root, rel)

    rig = None
    if "mesh" in doc:
        mesh = load_obj(p(doc["mesh"])).validate()
        basis = load_basis(p(doc["basis"])) if "basis" in doc else np.zeros((3 * len(mesh.vertices), 0))
        rig = BlendshapeRig(mesh, basis, doc.get("groups"))
    clips = []
    for i, c in enumerate(doc["clips"]):
        unknown = set(c) - _CLIP_KEYS
        missing = {"audio_A", "audio_B", "motion_A", "motion_B", "relationship"} - set(c)
        if unknown or missing:
            raise ConfigError(f"{path}: clip {i} unknown keys {sorted(unknown)}, missing {sorted(missing)}")
        frames = []
        for fr in c.get("frames", []):
            if set(fr) != _FRAME_KEYS:
                raise ConfigError(f"{path}: clip {i} frame keys {sorted(fr)} != {sorted(_FRAME_KEYS)}")
            frames.append(FrameRef(load_camera(p(fr["camera"])), read_image(p(fr["image"])),
                                   int(fr["motion_index"])))
        clips.append(Clip(str(c.get("id", i)), load_audio(p(c["audio_A"])), load_audio(p(c["audio_B"])),
                          load_motion(p(c["motion_A"])), load_motion(p(c["motion_B"])),
                          SocialRelationship.from_manifest(c["relationship"]), frames))
    return Dataset(clips, rig)


def write_dataset(root, dataset, image_ext=".png"):
    """Write every clip and asset under ``root``; returns the manifest path."""
    os.makedirs(root, exist_ok=True)
    doc = {"version": 1, "clips": []}
    if dataset.rig is not None:
        save_obj(os.path.join(root, "mesh.obj"), dataset.rig.base)
        save_basis(os.path.join(root, "basis.bsb"), dataset.rig.basis)
        doc.update(mesh="mesh.obj", basis="basis.bsb", groups=dataset.rig.groups)
    for clip in dataset.clips:
        cid = clip.id
        entry = {"id": cid, "relationship": clip.relationship.to_manifest(), "frames": []}
        for key, saver in (("audio_A", save_audio), ("audio_B", save_audio),
                           ("motion_A", save_motion), ("motion_B", save_motion)):
            name = f"{cid}_{key}.{'aft' if key.startswith('audio') else 'msq'}"
            saver(os.path.join(root, name), getattr(clip, key))
            entry[key] = name
        for k, fr in enumerate(clip.frames):
            cam_name, img_name = f"{cid}_cam{k}.json", f"{cid}_frame{k}{image_ext}"
            save_camera(fr.camera, os.path.join(root, cam_name))
            write_image(os.path.join(root, img_name), fr.image)
            entry["frames"].append({"camera": cam_name, "image": img_name, "motion_index": fr.motion_index})
        doc["clips"].append(entry)
    path = os.path.join(root, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return path
