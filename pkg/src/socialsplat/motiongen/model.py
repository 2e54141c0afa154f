"""Speaker-listener motion generator.

Pipeline per clip (all tensors ``(..., T, width)``)::

    a_A, a_B --frozen speech surrogate--> projections to d_model
    m_A --motion encoder--> K = V;  f_A = attn(Q = proj(a_A), K, V)
    [f_A ; proj(a_B)] --linear + encoder layers--> memory
    z = memory + attn(Q_t = s * (1 + p_t), memory, memory)     s from the social module
    z --causal decoder (teacher forced or autoregressive)--> M
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ContractError
from ..numcore import ops
from ..numcore.nn import DecoderLayer, EncoderLayer, LayerNorm, Linear, Module, MultiHeadAttention, causal_mask
from ..numcore.tensor import Tensor, as_tensor, no_grad
from ..social import SocialModule, SocialRelationship
from .sequences import MotionSeq, align


@dataclass
class MotionGenConfig:
    d_audio: int = 32
    groups: dict = None
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = None
    max_len: int = 512
    d_s: int = 16
    d_q: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.groups is None:
            self.groups = {"EXP": 50, "JAW": 3, "POSE": 6}
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model

    @property
    def n_params(self):
        return int(sum(self.groups.values()))

    def to_dict(self):
        return asdict(self)


class SpeechSurrogate(Module):
    """Fixed random feature map standing in for a pretrained speech encoder."""

    frozen = True

    def __init__(self, d_audio, rng):
        self.proj = Linear(d_audio, d_audio, rng)

    def forward(self, a):
        return ops.tanh(self.proj(a))


def cross_attention(attn, q, k, v, mask=None):
    """Multi-head ``softmax(q Wq (k Wk)^T / sqrt(d_head)) v Wv`` then ``Wo``."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != attn.q_proj.d_in or k.shape[-1] != attn.k_proj.d_in or v.shape[-1] != attn.v_proj.d_in:
        raise ContractError(f"attention widths q={q.shape[-1]} k={k.shape[-1]} v={v.shape[-1]} do not match "
                            f"projections ({attn.q_proj.d_in}, {attn.k_proj.d_in}, {attn.v_proj.d_in})")
    return attn(q, k, v, mask)


def _pos(table, t):
    return table[:t]


class MotionGenerator(Module):
    def __init__(self, config=None):
        cfg = config or MotionGenConfig()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        d, P = cfg.d_model, cfg.n_params
        self.speech = SpeechSurrogate(cfg.d_audio, rng)
        self.audio_proj_A = Linear(cfg.d_audio, d, rng)
        self.audio_proj_B = Linear(cfg.d_audio, d, rng)
        # motion encoder
        self.motion_in = Linear(P, d, rng)
        self.motion_pos = Tensor(rng.normal(scale=0.02, size=(cfg.max_len, d)), requires_grad=True)
        self.motion_layers = [EncoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_layers)]
        self.motion_norm = LayerNorm(d)
        self.attn_A = MultiHeadAttention(d, cfg.n_heads, rng)
        # socially aware fusion
        self.social = SocialModule(rng, cfg.d_s, cfg.d_q, d)
        self.fuse_in = Linear(2 * d, d, rng)
        self.fuse_layers = [EncoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_layers)]
        self.fuse_norm = LayerNorm(d)
        self.query_time = Tensor(rng.normal(scale=0.02, size=(cfg.max_len, d)), requires_grad=True)
        self.attn_social = MultiHeadAttention(d, cfg.n_heads, rng)
        # decoder
        self.start = Tensor(rng.normal(scale=0.02, size=d), requires_grad=True)
        self.dec_in = Linear(P, d, rng)
        self.dec_pos = Tensor(rng.normal(scale=0.02, size=(cfg.max_len, d)), requires_grad=True)
        self.dec_layers = [DecoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_layers)]
        self.dec_norm = LayerNorm(d)
        self.head = Linear(d, P, rng)

    # -- components -------------------------------------------------------
    def _check_len(self, t):
        if t > self.config.max_len:
            raise ContractError(f"sequence length {t} exceeds max_len {self.config.max_len}")

    def motion_encoder(self, m_A):
        m_A = as_tensor(m_A)
        t = m_A.shape[-2]
        self._check_len(t)
        x = self.motion_in(m_A) + _pos(self.motion_pos, t)
        for layer in self.motion_layers:
            x = layer(x)
        return self.motion_norm(x)

    def fuse_speaker_A(self, a_A, m_A):
        if as_tensor(a_A).shape[-2] != as_tensor(m_A).shape[-2]:
            raise ContractError("speaker-A audio and motion lengths differ; align them first")
        q = self.audio_proj_A(self.speech(as_tensor(a_A)))
        kv = self.motion_encoder(m_A)
        return cross_attention(self.attn_A, q, kv, kv)

    def social_feature(self, rel):
        if isinstance(rel, SocialRelationship):
            return self.social(rel)
        return ops.stack([self.social(r) for r in rel], axis=0)

    def socially_aware_fusion(self, f_A, a_B, s):
        f_A, s = as_tensor(f_A), as_tensor(s)
        t = f_A.shape[-2]
        self._check_len(t)
        b = self.audio_proj_B(self.speech(as_tensor(a_B)))
        x = self.fuse_in(ops.concat([f_A, b], axis=-1))
        for layer in self.fuse_layers:
            x = layer(x)
        memory = self.fuse_norm(x)
        s_rows = ops.reshape(s, s.shape[:-1] + (1, s.shape[-1]))
        q = s_rows * (_pos(self.query_time, t) + 1.0)
        # residual keeps per-frame content; the social queries alone are nearly time-invariant
        return memory + cross_attention(self.attn_social, q, memory, memory)

    def _decode_inputs(self, prev):
        """Start token followed by embeddings of frames 0..T-2."""
        prev = as_tensor(prev)
        lead = prev.shape[:-2]
        start = ops.broadcast_to(self.start, lead + (1, self.config.d_model))
        if prev.shape[-2] == 1:
            return start
        emb = self.dec_in(prev[..., :-1, :])
        return ops.concat([start, emb], axis=-2)

    def _decoder_stack(self, x, z):
        t_q, t_k = x.shape[-2], z.shape[-2]
        mask = causal_mask(t_q, t_q)
        mem_mask = causal_mask(t_q, t_k)
        x = x + _pos(self.dec_pos, t_q)
        for layer in self.dec_layers:
            x = layer(x, z, mask, mem_mask)
        return self.head(self.dec_norm(x))

    def motion_decoder(self, z, previous=None):
        """Teacher-forced when ``previous`` (ground-truth frames) is given, else autoregressive."""
        z = as_tensor(z)
        if previous is not None:
            return self._decoder_stack(self._decode_inputs(previous), z)
        t = z.shape[-2]
        lead = z.shape[:-2]
        frames = np.zeros(lead + (t, self.config.n_params))
        for i in range(t):
            x = self._decode_inputs(frames[..., :i + 1, :])
            out = self._decoder_stack(x, z)
            frames[..., i, :] = out.data[..., i, :]
        if z.requires_grad:
            # differentiable re-run conditioned on the generated frames
            return self._decoder_stack(self._decode_inputs(frames), z)
        return Tensor(frames)

    # -- end to end -------------------------------------------------------
    def forward(self, a_A, a_B, m_A, rel, target=None):
        """Predicted speaker-B motion (..., T, P); teacher-forced on ``target`` if given."""
        a_A, a_B, m_A = as_tensor(a_A), as_tensor(a_B), as_tensor(m_A)
        if not (a_A.shape[-2] == a_B.shape[-2] == m_A.shape[-2]):
            raise ContractError(f"sequence lengths differ: a_A {a_A.shape}, a_B {a_B.shape}, m_A {m_A.shape}")
        f_A = self.fuse_speaker_A(a_A, m_A)
        s = self.social_feature(rel)
        z = self.socially_aware_fusion(f_A, a_B, s)
        return self.motion_decoder(z, target)

    def generate(self, speech_A, speech_B, m_A, rel):
        """Autoregressive inference on sequence objects; returns a ``MotionSeq``."""
        a_A, _ = align(speech_A, m_A)
        a_B, _ = align(speech_B, m_A)
        with no_grad():
            out = self.forward(a_A.frames, a_B.frames, m_A.frames, rel)
        return MotionSeq(out.data, self.config.groups, m_A.frame_rate)

