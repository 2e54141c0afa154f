"""Stage and run configuration with strict key checking."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError
from ..numcore.optim import LR_GAUSSIAN, LR_NETWORK
from .losses import LossWeights

DEFAULT_STEPS = {1: 2000, 2: 2000, 3: 1000}


def from_dict(cls, d, where=""):
    """Build dataclass ``cls`` from ``d``; unknown keys raise ``ConfigError``."""
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where or cls.__name__} must be an object, got {type(d).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown config keys in {where or cls.__name__}: {unknown}")
    return cls(**d)


@dataclass
class StageConfig:
    stage: int = 1
    steps: int = None
    batch_size: int = 8
    window: int = 32
    lr_gaussian: float = LR_GAUSSIAN
    lr_network: float = LR_NETWORK
    densify: bool = True
    densify_interval: int = 100
    densify_until: float = 0.6
    densify_grad: float = 2e-4
    densify_size_fraction: float = 0.01
    min_opacity: float = 0.005
    frames_per_step: int = 1
    sampled_inputs: float = 0.5
    background: list = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ConfigError(f"stage must be 1, 2 or 3, got {self.stage}")
        if self.steps is None:
            self.steps = DEFAULT_STEPS[self.stage]
        if self.steps < 0 or self.batch_size < 1 or self.window < 1 or self.frames_per_step < 1:
            raise ConfigError("steps, batch_size, window and frames_per_step must be positive")
        if not 0.0 <= self.sampled_inputs <= 1.0:
            raise ConfigError("sampled_inputs is a probability in [0, 1]")
        if not 0.0 <= self.densify_until <= 1.0:
            raise ConfigError("densify_until is a fraction of the stage steps in [0, 1]")

    def densify_now(self, step):
        return (self.densify and step > 0 and step % self.densify_interval == 0
                and step < self.densify_until * self.steps)


@dataclass
class ModelConfig:
    d_audio: int = 32
    groups: dict = None
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = None
    max_len: int = 512
    d_s: int = 16
    d_q: int = 32
    offset_hidden: int = 64
    offset_freqs: int = 8
    offset_horizon: float = 256.0

    def motion_config(self, seed):
        from ..motiongen import MotionGenConfig

        d = asdict(self)
        for k in ("offset_hidden", "offset_freqs", "offset_horizon"):
            d.pop(k)
        return MotionGenConfig(seed=seed, **d)


@dataclass
class RunConfig:
    seed: int = 0
    stage: StageConfig = None
    model: ModelConfig = None
    weights: LossWeights = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = sorted(set(d) - {"seed", "stage", "model", "weights"})
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(seed=int(d.get("seed", 0)),
                   stage=from_dict(StageConfig, d.get("stage"), "stage"),
                   model=from_dict(ModelConfig, d.get("model"), "model"),
                   weights=from_dict(LossWeights, d.get("weights"), "weights"))

    def __post_init__(self):
        self.stage = self.stage or StageConfig()
        self.model = self.model or ModelConfig()
        self.weights = self.weights or LossWeights()

    def to_dict(self):
        return {"seed": self.seed, "stage": asdict(self.stage), "model": asdict(self.model),
                "weights": asdict(self.weights)}
