"""Audio-feature and motion sequences, their binary files, and resampling."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, FormatError, ResamplingError

DEFAULT_FPS = 25.0


@dataclass
class AudioFeatureSeq:
    frames: np.ndarray  # (T, d)
    frame_rate: float = DEFAULT_FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ContractError(f"feature sequence must be (T>=1, d), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ContractError("feature sequence contains non-finite values")
        _check_rate(self.frame_rate)

    def __len__(self):
        return len(self.frames)

    @property
    def duration(self):
        return len(self) / self.frame_rate


@dataclass
class MotionSeq:
    frames: np.ndarray  # (T, P)
    groups: dict = field(default_factory=lambda: {"EXP": 50, "JAW": 3, "POSE": 6})
    frame_rate: float = DEFAULT_FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.groups = dict(self.groups)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ContractError(f"motion sequence must be (T>=1, P), got {self.frames.shape}")
        if self.frames.shape[1] != sum(self.groups.values()):
            raise ContractError(f"motion has {self.frames.shape[1]} params, groups {self.groups} sum to "
                                f"{sum(self.groups.values())}")
        _check_rate(self.frame_rate)

    def __len__(self):
        return len(self.frames)

    def group_slice(self, name):
        start = 0
        for key in ("EXP", "JAW", "POSE"):
            if key == name:
                return slice(start, start + self.groups[key])
            start += self.groups.get(key, 0)
        raise KeyError(name)

    def group(self, name):
        return self.frames[:, self.group_slice(name)]


def _check_rate(rate):
    if not np.isfinite(rate) or rate <= 0:
        raise ResamplingError(f"frame rate must be positive and finite, got {rate}")


def resample(frames, src_rate, dst_rate, n_out=None):
    """Linear interpolation of (T, d) frames sampled at ``src_rate`` onto ``dst_rate``."""
    _check_rate(src_rate)
    _check_rate(dst_rate)
    frames = np.asarray(frames, dtype=np.float64)
    if src_rate == dst_rate and (n_out is None or n_out == len(frames)):
        return frames.copy()
    if n_out is None:
        n_out = max(1, int(round(len(frames) * dst_rate / src_rate)))
    t_src = np.arange(len(frames)) / src_rate
    t_dst = np.arange(n_out) / dst_rate
    return np.stack([np.interp(t_dst, t_src, frames[:, j]) for j in range(frames.shape[1])], axis=1)


def align(audio, motion, tolerance_frames=1.0):
    """Resample ``audio`` onto the motion clock; both returned with equal length.

    Raises ``ResamplingError`` when the clip durations disagree by more than
    ``tolerance_frames`` motion frames.
    """
    gap = abs(audio.duration - len(motion) / motion.frame_rate) * motion.frame_rate
    if gap > tolerance_frames:
        raise ResamplingError(f"audio lasts {audio.duration:.3f}s but motion lasts "
                              f"{len(motion) / motion.frame_rate:.3f}s")
    feats = resample(audio.frames, audio.frame_rate, motion.frame_rate, len(motion))
    return AudioFeatureSeq(feats, motion.frame_rate), motion


# files: magic(4) T(u64) d(u64) frame_rate(f64) [EXP JAW POSE (u64) for MSQ1] data(<f8)

def save_audio(path, seq):
    with open(path, "wb") as fh:
        fh.write(b"AFT1" + struct.pack("<QQd", *seq.frames.shape, float(seq.frame_rate)))
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f8").tobytes())


def save_motion(path, seq):
    g = seq.groups
    with open(path, "wb") as fh:
        fh.write(b"MSQ1" + struct.pack("<QQd", *seq.frames.shape, float(seq.frame_rate)))
        fh.write(struct.pack("<QQQ", g.get("EXP", 0), g.get("JAW", 0), g.get("POSE", 0)))
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f8").tobytes())


def _read(path, magic, extra):
    raw = open(path, "rb").read()
    if raw[:4] != magic:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {magic!r}", path=path, offset=0)
    head = 28 + 8 * extra
    if len(raw) < head:
        raise FormatError("header truncated", path=path, offset=len(raw))
    t, d, rate = struct.unpack_from("<QQd", raw, 4)
    counts = struct.unpack_from("<" + "Q" * extra, raw, 28) if extra else ()
    need = head + 8 * t * d
    if len(raw) != need:
        raise FormatError(f"payload is {len(raw) - head} bytes, expected {8 * t * d}", path=path,
                          offset=min(len(raw), need))
    data = np.frombuffer(raw, "<f8", t * d, head).reshape(t, d).astype(np.float64)
    return data, rate, counts


def load_audio(path):
    data, rate, _ = _read(path, b"AFT1", 0)
    try:
        return AudioFeatureSeq(data, rate)
    except (ContractError, ResamplingError) as exc:
        raise FormatError(str(exc), path=path, offset=4) from exc


def load_motion(path):
    data, rate, counts = _read(path, b"MSQ1", 3)
    try:
        return MotionSeq(data, dict(zip(("EXP", "JAW", "POSE"), counts)), rate)
    except (ContractError, ResamplingError) as exc:
        raise FormatError(str(exc), path=path, offset=28) from exc
