"""Speaker-listener motion generation from dyadic audio and partner motion."""
from .model import MotionGenConfig, MotionGenerator, SpeechSurrogate, cross_attention
from .sequences import (DEFAULT_FPS, AudioFeatureSeq, MotionSeq, align, load_audio, load_motion,
                        resample, save_audio, save_motion)

__all__ = [
    "DEFAULT_FPS", "AudioFeatureSeq", "MotionGenConfig", "MotionGenerator", "MotionSeq",
    "SpeechSurrogate", "align", "cross_attention", "load_audio", "load_motion", "resample",
    "save_audio", "save_motion",
]
