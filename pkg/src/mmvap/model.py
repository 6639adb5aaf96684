"""MM-VAP network family in PyTorch.

Building blocks are pre-norm causal transformer layers.  Attention is limited
to a sliding window of ``context_frames`` (query t sees keys t-C+1 .. t) with
ALiBi distance penalties, so no absolute position embedding is needed.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, EmptyMask, ShapeMismatch
from .vap import N_STATES, SPEAKER_PERMUTATION

FUSIONS = ("audio_only", "video_only", "early", "late")
AUDIO_DIMS = 256


@dataclass
class ModelConfig:
    d_model: int = 256
    n_heads: int = 8
    ff_dim: int | None = None
    n_self_layers: int = 3
    n_cross_layers: int = 1
    context_frames: int = 1000
    fusion: str = "late"
    visual_dims: int = 60
    audio_dims: int = AUDIO_DIMS
    dropout: float = 0.1
    seed: int = 0
    tie_speakers: bool = True

    def __post_init__(self):
        if self.ff_dim is None:
            self.ff_dim = 4 * self.d_model
        problems = []
        if self.d_model % self.n_heads:
            problems.append("d_model must be divisible by n_heads")
        if self.context_frames < 100:
            problems.append("context_frames must be >= 100")
        if self.fusion not in FUSIONS:
            problems.append(f"fusion must be one of {FUSIONS}")
        if not 0 <= self.dropout < 1:
            problems.append("dropout must be in [0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def uses_audio(self) -> bool:
        return self.fusion != "video_only"

    @property
    def uses_video(self) -> bool:
        return self.fusion != "audio_only"

    def to_dict(self) -> dict:
        return asdict(self)


def alibi_slopes(n_heads: int) -> torch.Tensor:
    return torch.tensor([2.0 ** (-8.0 * (h + 1) / n_heads) for h in range(n_heads)])


class CausalAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, window: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.window = window
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.register_buffer("slopes", alibi_slopes(n_heads), persistent=False)

    def _heads(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

    def _bias(self, dist: torch.Tensor, allowed: torch.Tensor, dtype) -> torch.Tensor:
        bias = -self.slopes.to(dtype)[:, None, None] * dist.to(dtype)
        return bias.masked_fill(~allowed, float("-inf"))

    def forward(self, x: torch.Tensor, mem: torch.Tensor) -> torch.Tensor:
        if x.shape != mem.shape:
            raise ShapeMismatch(f"query {tuple(x.shape)} vs memory {tuple(mem.shape)}")
        b, t, d = x.shape
        q = self._heads(self.q(x)) / math.sqrt(self.d_head)
        k, v = self._heads(self.k(mem)), self._heads(self.v(mem))
        c = self.window
        if t <= c:
            i = torch.arange(t, device=x.device)
            dist = i[:, None] - i[None, :]
            attn = q @ k.transpose(-1, -2) + self._bias(dist, dist >= 0, q.dtype)
            out = attn.softmax(-1) @ v
        else:
            # blocks of c queries attend to their own and the preceding block
            n = -(-t // c)
            pad = n * c - t
            if pad:
                q, k, v = (F.pad(z, (0, 0, 0, pad)) for z in (q, k, v))
            qb = q.reshape(b, self.n_heads, n, c, self.d_head)
            kb = k.reshape(b, self.n_heads, n, c, self.d_head)
            vb = v.reshape(b, self.n_heads, n, c, self.d_head)
            kk = torch.cat([F.pad(kb, (0, 0, 0, 0, 1, 0))[:, :, :-1], kb], dim=3)
            vv = torch.cat([F.pad(vb, (0, 0, 0, 0, 1, 0))[:, :, :-1], vb], dim=3)
            i = torch.arange(c, device=x.device)
            j = torch.arange(2 * c, device=x.device)
            dist = i[:, None] + c - j[None, :]
            allowed = (dist >= 0) & (dist < c)
            bias = self._bias(dist, allowed, q.dtype)  # heads x c x 2c
            first = self._bias(dist, allowed & (j[None, :] >= c), q.dtype)
            bias = torch.stack([first] + [bias] * (n - 1), dim=1)  # heads x n x c x 2c
            attn = qb @ kk.transpose(-1, -2) + bias
            out = attn.softmax(-1) @ vv
            out = out.reshape(b, self.n_heads, n * c, self.d_head)[:, :, :t]
        out = out.transpose(1, 2).reshape(b, t, d)
        return self.out(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ff_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ff_dim)
        self.fc2 = nn.Linear(ff_dim, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.drop(F.gelu(self.fc1(x))))


class TransformerLayer(nn.Module):
    """Pre-norm layer: x + Attn(LN x, LN mem), then + FF(LN .)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm_attn = nn.LayerNorm(cfg.d_model)
        self.attn = CausalAttention(cfg.d_model, cfg.n_heads, cfg.context_frames)
        self.norm_ff = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mem=None):
        hx = self.norm_attn(x)
        hm = hx if mem is None else self.norm_attn(mem)
        x = x + self.drop(self.attn(hx, hm))
        return x + self.drop(self.ff(self.norm_ff(x)))


class SelfAttnBlock(nn.Module):
    def __init__(self, cfg: ModelConfig, n_layers: int | None = None):
        super().__init__()
        n_layers = cfg.n_self_layers if n_layers is None else n_layers
        self.layers = nn.ModuleList(TransformerLayer(cfg) for _ in range(n_layers))

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class CrossAttnBlock(nn.Module):
    """sigma(T(q=x1, kv=x2) + T(q=x2, kv=x1)) with one set of weights for both T.

    With several layers both streams are updated through every layer before
    the final sum; sigma is LayerNorm followed by GeLU.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.layers = nn.ModuleList(TransformerLayer(cfg) for _ in range(cfg.n_cross_layers))
        self.norm = nn.LayerNorm(cfg.d_model)

    def forward(self, x1, x2):
        if x1.shape != x2.shape:
            raise ShapeMismatch(f"cross-attention inputs {tuple(x1.shape)} vs {tuple(x2.shape)}")
        for layer in self.layers:
            x1, x2 = layer(x1, x2), layer(x2, x1)
        return F.gelu(self.norm(x1 + x2))


class VisualProjection(nn.Module):
    def __init__(self, in_dims: int, d_model: int):
        super().__init__()
        self.hidden = nn.Linear(in_dims, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.in_dims = in_dims

    def forward(self, v):
        if v.shape[-1] != self.in_dims:
            raise ShapeMismatch(f"visual input has {v.shape[-1]} dims, expected {self.in_dims}")
        return self.out(F.gelu(self.hidden(v)))


class Readout(nn.Module):
    """Linear map from (speaker A stream, speaker B stream, joint stream) to 256 logits.

    With ``tie_speakers`` the B weights are the A weights with rows permuted by
    the A<->B state permutation and the joint weights/bias are symmetrised, so
    swapping the speakers permutes the logits exactly.
    """

    def __init__(self, d_model: int, tie_speakers: bool):
        super().__init__()
        self.tie = tie_speakers
        self.norm = nn.LayerNorm(d_model)
        if tie_speakers:
            self.w_speaker = nn.Parameter(torch.empty(N_STATES, d_model))
            self.w_joint = nn.Parameter(torch.empty(N_STATES, d_model))
            self.bias = nn.Parameter(torch.zeros(N_STATES))
            bound = 1.0 / math.sqrt(3 * d_model)
            nn.init.uniform_(self.w_speaker, -bound, bound)
            nn.init.uniform_(self.w_joint, -bound, bound)
            self.register_buffer("perm", torch.as_tensor(SPEAKER_PERMUTATION), persistent=False)
        else:
            self.linear = nn.Linear(3 * d_model, N_STATES)

    def forward(self, ha, hb, joint):
        ha, hb = self.norm(ha), self.norm(hb)
        if not self.tie:
            return self.linear(torch.cat([ha, hb, joint], dim=-1))
        w_joint = 0.5 * (self.w_joint + self.w_joint[self.perm])
        bias = 0.5 * (self.bias + self.bias[self.perm])
        return (ha @ self.w_speaker.T + hb @ self.w_speaker[self.perm].T
                + joint @ w_joint.T + bias)


@contextlib.contextmanager
def _seeded(seed: int):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


class MMVap(nn.Module):
    """Audio-only, video-only, early-fusion and late-fusion turn-taking models.

    All per-speaker modules are shared between the two speakers.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        with _seeded(cfg.seed):
            if cfg.uses_audio:
                self.audio_proj = nn.Linear(cfg.audio_dims, cfg.d_model)
            if cfg.uses_video:
                self.visual_proj = VisualProjection(cfg.visual_dims, cfg.d_model)
            if cfg.fusion in ("audio_only", "late"):
                self.audio_sa = SelfAttnBlock(cfg)
            if cfg.fusion in ("video_only", "late"):
                self.video_sa = SelfAttnBlock(cfg)
            if cfg.fusion in ("early", "late"):
                self.av_cross = CrossAttnBlock(cfg)
            if cfg.fusion == "early":
                self.fused_sa = SelfAttnBlock(cfg)
            self.speaker_cross = CrossAttnBlock(cfg)
            self.readout = Readout(cfg.d_model, cfg.tie_speakers)

    def speaker_stream(self, audio, video):
        f = self.cfg.fusion
        if f == "audio_only":
            return self.audio_sa(self.audio_proj(audio))
        if f == "video_only":
            return self.video_sa(self.visual_proj(video))
        if f == "late":
            return self.av_cross(self.audio_sa(self.audio_proj(audio)),
                                 self.video_sa(self.visual_proj(video)))
        return self.fused_sa(self.av_cross(self.audio_proj(audio), self.visual_proj(video)))

    def forward(self, audio_a=None, audio_b=None, video_a=None, video_b=None):
        """Per-frame logits over the 256 states, shape (batch, frames, 256)."""
        inputs = [x for x in (audio_a, audio_b, video_a, video_b) if x is not None]
        if self.cfg.uses_audio and (audio_a is None or audio_b is None):
            raise ShapeMismatch(f"{self.cfg.fusion} model needs audio for both speakers")
        if self.cfg.uses_video and (video_a is None or video_b is None):
            raise ShapeMismatch(f"{self.cfg.fusion} model needs video for both speakers")
        lengths = {tuple(x.shape[:2]) for x in inputs}
        if len(lengths) != 1:
            raise ShapeMismatch(f"inputs disagree on (batch, frames): {sorted(lengths)}")
        ha = self.speaker_stream(audio_a, video_a)
        hb = self.speaker_stream(audio_b, video_b)
        return self.readout(ha, hb, self.speaker_cross(ha, hb))

    def predict(self, *args, **kwargs) -> torch.Tensor:
        """Per-frame probabilities (the model output proper)."""
        return self.forward(*args, **kwargs).softmax(-1)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def vap_loss(logits: torch.Tensor, labels: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy of the true state over valid frames."""
    mask = mask.bool()
    if not mask.any():
        raise EmptyMask("no valid frames to score")
    logp = logits.log_softmax(-1)
    nll = -logp.gather(-1, labels.long().unsqueeze(-1)).squeeze(-1)
    return nll[mask].mean()


def loss_from_probs(probs, labels, mask) -> float:
    """Same loss on an already-normalised output (numpy or torch)."""
    probs, labels, mask = (torch.as_tensor(x) for x in (probs, labels, mask))
    mask = mask.bool()
    if not mask.any():
        raise EmptyMask("no valid frames to score")
    p = probs.gather(-1, labels.long().unsqueeze(-1)).squeeze(-1)[mask]
    return float(-torch.log(p.double()).mean())
