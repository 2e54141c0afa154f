"""Synthetic rigs, avatars and dyadic datasets for tests and demos."""
from __future__ import annotations

import numpy as np

from .gsplat.camera import simple_camera
from .gsplat.render import render_image
from .motiongen.sequences import AudioFeatureSeq, MotionSeq
from .rigging.blendshape import BlendshapeRig
from .rigging.bound import BoundGaussianSet, to_deformable
from .rigging.frames import compute_binding_frames
from .rigging.mesh import grid_mesh
from .social import SocialRelationship
from .training.dataset import Clip, Dataset, FrameRef

SMALL_GROUPS = {"EXP": 10, "JAW": 3, "POSE": 6}


def make_rig(nx=10, ny=5, groups=None, seed=0, size=(1.6, 1.2)):
    """Domed sheet with 2*nx*ny faces and a smooth random expression basis.

    EXP columns are smooth out-of-plane bumps, JAW columns move the lower
    half down and forward, POSE columns are zero (pose acts through rotations).
    """
    groups = dict(groups or SMALL_GROUPS)
    mesh = grid_mesh(nx, ny, size=size)
    rng = np.random.default_rng(seed)
    v = mesh.vertices
    n = len(v)
    cols = []
    for _ in range(groups["EXP"]):
        c = rng.uniform(-0.6, 0.6, size=2) * np.asarray(size) / 1.2
        w = np.exp(-np.sum((v[:, :2] - c) ** 2, axis=1) / 0.08)
        d = np.zeros((n, 3))
        d[:, 2] = 0.04 * w
        d[:, :2] = 0.01 * w[:, None] * rng.normal(size=2)
        cols.append(d.ravel())
    lower = np.clip(-v[:, 1] / (size[1] / 2), 0.0, 1.0)
    for k in range(groups["JAW"]):
        d = np.zeros((n, 3))
        d[:, 1] = -0.03 * lower * (k + 1) / groups["JAW"]
        d[:, 2] = 0.02 * lower * (-1) ** k
        cols.append(d.ravel())
    cols += [np.zeros(3 * n)] * groups["POSE"]
    return BlendshapeRig(mesh, np.stack(cols, axis=1), groups)


def make_avatar(mesh, seed=0, log_scale=(-0.6, -0.2), requires_grad=False):
    """A known anchor-only Gaussian set: smooth colors over the surface, high opacity."""
    rng = np.random.default_rng(seed)
    f = mesh.n_faces
    cent = mesh.vertices[mesh.faces].mean(axis=1)
    rot = np.concatenate([np.ones((f, 1)), rng.normal(scale=0.2, size=(f, 3))], axis=1)
    span = np.ptp(cent, axis=0)
    u = (cent - cent.min(axis=0)) / np.where(span > 0, span, 1.0)
    color = np.stack([0.2 + 0.6 * u[:, 0], 0.3 + 0.5 * u[:, 1], 0.8 - 0.5 * u[:, 0] * u[:, 1]], axis=1)
    color = np.clip(color + rng.normal(scale=0.05, size=color.shape), 0.0, 1.0)
    return BoundGaussianSet(rng.uniform(-0.2, 0.2, size=(f, 3)), rot, rng.uniform(*log_scale, size=(f, 3)),
                            rng.uniform(2.0, 4.0, size=f), color, np.arange(f), requires_grad=requires_grad)


def default_camera(width=64, height=64):
    return simple_camera(width, height, eye=(0.0, 0.0, 2.6), fov_deg=40.0)


def render_avatar(bset, rig, params, cam, offsets=None, background=(0.0, 0.0, 0.0)):
    verts = rig.vertices(params).data
    fr = compute_binding_frames(verts, rig.base.faces)
    return render_image(to_deformable(bset, fr, offsets), cam, background)


def class_amplitude(rel):
    return 0.4 + 0.8 * rel.blood + 0.4 * rel.equal


def _smooth_noise(rng, t, d, smooth=1.5):
    x = rng.normal(size=(t + 8, d))
    k = np.exp(-0.5 * (np.arange(-4, 5) / smooth) ** 2)
    k /= np.sqrt(np.sum(k * k))
    return np.stack([np.convolve(x[:, j], k, mode="valid") for j in range(d)], axis=1)[:t]


class DyadicTask:
    """Target motion M_B[t] = amp(rel) * group_scale * tanh(W_b a_B[t] + W_a m_A[t])."""

    def __init__(self, groups=None, d_audio=16, seed=0):
        self.groups = dict(groups or SMALL_GROUPS)
        self.d_audio = d_audio
        p = sum(self.groups.values())
        rng = np.random.default_rng(seed + 1000)
        self.w_b = rng.normal(scale=1.0 / np.sqrt(d_audio), size=(d_audio, p))
        self.w_a = rng.normal(scale=0.5 / np.sqrt(p), size=(p, p))
        self.scale = np.concatenate([np.full(self.groups["EXP"], 1.0), np.full(self.groups["JAW"], 0.6),
                                     np.full(self.groups["POSE"], 0.05)])

    def target(self, a_B, m_A, rel):
        return class_amplitude(rel) * self.scale * np.tanh(a_B @ self.w_b + m_A @ self.w_a)

    def make_clip(self, cid, rel, rng, t=24, fps=25.0):
        p = sum(self.groups.values())
        a_A = _smooth_noise(rng, t, self.d_audio)
        a_B = _smooth_noise(rng, t, self.d_audio)
        m_A = 0.8 * self.scale * np.tanh(_smooth_noise(rng, t, p))
        m_B = self.target(a_B, m_A, rel)
        return Clip(cid, AudioFeatureSeq(a_A, fps), AudioFeatureSeq(a_B, fps), MotionSeq(m_A, self.groups, fps),
                    MotionSeq(m_B, self.groups, fps), rel)


def make_dyadic_dataset(n_per_class=20, t=24, d_audio=16, groups=None, seed=0, rig=None):
    task = DyadicTask(groups, d_audio, seed)
    rng = np.random.default_rng(seed)
    clips = []
    for rel in SocialRelationship.all():
        for i in range(n_per_class):
            clips.append(task.make_clip(f"r{rel.index}_{i:03d}", rel, rng, t))
    return Dataset(clips, rig), task


def attach_frames(dataset, avatar, cam, indices=(0,), background=(0.0, 0.0, 0.0)):
    """Render ground-truth images of ``avatar`` posed by each clip's motion_B at ``indices``."""
    for clip in dataset.clips:
        clip.frames = [FrameRef(cam, render_avatar(avatar, dataset.rig, clip.motion_B.frames[k], cam,
                                                   background=background), k) for k in indices]
    return dataset
