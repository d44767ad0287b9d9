"""Perceiver-style encoder/decoder with soft prompts and Fourier time features.

The encoder maps an action chunk to n latent token vectors via learned queries
cross-attending over per-step embeddings. Inter-token dependency is controlled
by the ``variant`` knob: "independent" keeps queries isolated (cross-attention
only), "sa" adds bidirectional self-attention over the queries, "causal" adds
lower-triangular self-attention. The decoder builds one query per target
timestamp and cross-attends to the token embeddings, so the same tokens can be
decoded for a different embodiment (its own rate, duration and action dim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .data import EmbodimentRegistry, EmbodimentSpec

__all__ = [
    "PerceiverConfig",
    "SoftPromptTable",
    "fourier_time_embed",
    "PerceiverEncoder",
    "PerceiverDecoder",
]

VARIANTS = ("independent", "sa", "causal")


@dataclass
class PerceiverConfig:
    latent_dim: int = 128
    n_tokens: int = 16
    n_layers: int = 2
    n_heads: int = 4
    variant: str = "independent"
    ff_multiplier: int = 4
    prompt_dim: int = 16
    fourier_freqs: int = 32
    f_min: float = 0.5

    def __post_init__(self) -> None:
        if self.latent_dim % self.n_heads != 0:
            raise ValueError(
                f"latent_dim {self.latent_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("latent_dim", "n_tokens", "n_layers", "n_heads", "ff_multiplier",
                     "prompt_dim", "fourier_freqs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "PerceiverConfig":
        return cls(**d)


def fourier_time_embed(
    timestamps: torch.Tensor,
    dim: int,
    f_min: float = 0.5,
    f_max: float = 10.0,
) -> torch.Tensor:
    """Sin/cos features at dim/2 geometrically spaced frequencies.

    Column layout is [sin(2*pi*f_1*t) .. sin(2*pi*f_K*t), cos(...) ..].
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    if not torch.is_tensor(timestamps):
        timestamps = torch.as_tensor(timestamps, dtype=torch.get_default_dtype())
    if not torch.all(torch.isfinite(timestamps)):
        raise ValueError("timestamps must be finite")
    n_freq = dim // 2
    if n_freq == 1:
        freqs = torch.tensor([f_min], dtype=timestamps.dtype)
    else:
        freqs = torch.logspace(
            math.log10(f_min), math.log10(f_max), n_freq, dtype=timestamps.dtype
        )
    phase = 2.0 * math.pi * timestamps[:, None] * freqs[None, :]
    return torch.cat([torch.sin(phase), torch.cos(phase)], dim=-1)


class SoftPromptTable(nn.Module):
    """One learnable row per embodiment index."""

    def __init__(self, n_embodiments: int, prompt_dim: int):
        super().__init__()
        self.embeddings = nn.Parameter(
            torch.randn(n_embodiments, prompt_dim) / math.sqrt(prompt_dim)
        )

    def forward(self, index: int) -> torch.Tensor:
        if not 0 <= index < self.embeddings.shape[0]:
            raise KeyError(f"no soft prompt for embodiment index {index}")
        return self.embeddings[index]


class Attention(nn.Module):
    """Multi-head scaled dot-product attention; kv can have its own width."""

    def __init__(self, dim: int, kv_dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(kv_dim, dim)
        self.v = nn.Linear(kv_dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(
        self, x: torch.Tensor, kv: torch.Tensor, mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        B, nq, _ = x.shape
        nk = kv.shape[1]
        q = self.q(x).view(B, nq, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.k(kv).view(B, nk, self.n_heads, self.head_dim).transpose(1, 2)
        v = self.v(kv).view(B, nk, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, nq, -1)
        return self.out(out)


def _feed_forward(dim: int, mult: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(dim, dim * mult), nn.GELU(), nn.Linear(dim * mult, dim))


class _EncoderBlock(nn.Module):
    def __init__(self, cfg: PerceiverConfig, kv_dim: int):
        super().__init__()
        d = cfg.latent_dim
        self.cross_norm = nn.LayerNorm(d)
        self.kv_norm = nn.LayerNorm(kv_dim)
        self.cross = Attention(d, kv_dim, cfg.n_heads)
        self.use_self = cfg.variant in ("sa", "causal")
        if self.use_self:
            self.self_norm = nn.LayerNorm(d)
            self.self_attn = Attention(d, d, cfg.n_heads)
        self.ff_norm = nn.LayerNorm(d)
        self.ff = _feed_forward(d, cfg.ff_multiplier)

    def forward(
        self, x: torch.Tensor, kv: torch.Tensor, self_mask: torch.Tensor | None
    ) -> torch.Tensor:
        x = x + self.cross(self.cross_norm(x), self.kv_norm(kv))
        if self.use_self:
            h = self.self_norm(x)
            x = x + self.self_attn(h, h, mask=self_mask)
        x = x + self.ff(self.ff_norm(x))
        return x


class _DecoderBlock(nn.Module):
    def __init__(self, cfg: PerceiverConfig):
        super().__init__()
        d = cfg.latent_dim
        self.cross_norm = nn.LayerNorm(d)
        self.kv_norm = nn.LayerNorm(d)
        self.cross = Attention(d, d, cfg.n_heads)
        self.ff_norm = nn.LayerNorm(d)
        self.ff = _feed_forward(d, cfg.ff_multiplier)

    def forward(self, x: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        x = x + self.cross(self.cross_norm(x), self.kv_norm(kv))
        x = x + self.ff(self.ff_norm(x))
        return x


class PerceiverEncoder(nn.Module):
    """n learned queries cross-attend to per-step action embeddings."""

    def __init__(self, cfg: PerceiverConfig, registry: EmbodimentRegistry):
        super().__init__()
        self.cfg = cfg
        d = cfg.latent_dim
        self.queries = nn.Parameter(torch.randn(cfg.n_tokens, d) / math.sqrt(d))
        self.prompts = SoftPromptTable(registry.max_index + 1, cfg.prompt_dim)
        self.in_proj = nn.ModuleDict(
            {spec.name: nn.Linear(spec.action_dim, d) for spec in registry}
        )
        self.time_proj = nn.Linear(2 * cfg.fourier_freqs, d)
        kv_dim = d + cfg.prompt_dim
        self.blocks = nn.ModuleList(_EncoderBlock(cfg, kv_dim) for _ in range(cfg.n_layers))
        self.out_norm = nn.LayerNorm(d)
        if cfg.variant == "causal":
            mask = torch.tril(torch.ones(cfg.n_tokens, cfg.n_tokens, dtype=torch.bool))
            self.register_buffer("self_mask", mask, persistent=False)
        else:
            self.self_mask = None

    def forward(
        self,
        actions: torch.Tensor,
        timestamps: torch.Tensor,
        embodiment: EmbodimentSpec,
    ) -> torch.Tensor:
        """actions (B, T, D), timestamps (T,) -> latents (B, n, d)."""
        if embodiment.name not in self.in_proj:
            raise KeyError(f"unregistered embodiment {embodiment.name!r}")
        B, T, D = actions.shape
        if D != embodiment.action_dim:
            raise ValueError(f"expected action dim {embodiment.action_dim}, got {D}")
        timestamps = torch.as_tensor(timestamps, dtype=actions.dtype)
        f_max = max(embodiment.control_hz / 2.0, self.cfg.f_min)
        fourier = fourier_time_embed(
            timestamps, 2 * self.cfg.fourier_freqs, self.cfg.f_min, f_max
        )
        steps = self.in_proj[embodiment.name](actions) + self.time_proj(fourier)[None]
        prompt = self.prompts(embodiment.index).to(actions.dtype)
        kv = torch.cat([steps, prompt.expand(B, T, -1)], dim=-1)
        x = self.queries.unsqueeze(0).expand(B, -1, -1).to(actions.dtype)
        for block in self.blocks:
            x = block(x, kv, self.self_mask)
        return self.out_norm(x)


class PerceiverDecoder(nn.Module):
    """One query per target timestamp cross-attends to the token embeddings.

    Uses its own soft-prompt table so the decoder can be refined (e.g. during
    residual post-training) without perturbing the token-producing path.
    """

    def __init__(self, cfg: PerceiverConfig, registry: EmbodimentRegistry):
        super().__init__()
        self.cfg = cfg
        d = cfg.latent_dim
        self.prompts = SoftPromptTable(registry.max_index + 1, cfg.prompt_dim)
        self.time_proj = nn.Linear(2 * cfg.fourier_freqs, d)
        self.query_proj = nn.Linear(d + cfg.prompt_dim, d)
        self.blocks = nn.ModuleList(_DecoderBlock(cfg) for _ in range(cfg.n_layers))
        self.out_norm = nn.LayerNorm(d)
        self.heads = nn.ModuleDict(
            {spec.name: nn.Linear(d, spec.action_dim) for spec in registry}
        )

    def forward(
        self,
        token_embeddings: torch.Tensor,
        embodiment: EmbodimentSpec,
        timestamps: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """token_embeddings (B, n, d) -> actions (B, T', D') in [-1, 1]."""
        if embodiment.name not in self.heads:
            raise KeyError(f"unregistered embodiment {embodiment.name!r}")
        B = token_embeddings.shape[0]
        dtype = token_embeddings.dtype
        if timestamps is None:
            timestamps = torch.as_tensor(embodiment.timestamps(), dtype=dtype)
        f_max = max(embodiment.control_hz / 2.0, self.cfg.f_min)
        fourier = fourier_time_embed(
            timestamps.to(dtype), 2 * self.cfg.fourier_freqs, self.cfg.f_min, f_max
        )
        prompt = self.prompts(embodiment.index).to(dtype)
        T = fourier.shape[0]
        q = torch.cat([self.time_proj(fourier), prompt.expand(T, -1)], dim=-1)
        x = self.query_proj(q).unsqueeze(0).expand(B, -1, -1)
        for block in self.blocks:
            x = block(x, token_embeddings)
        return torch.tanh(self.heads[embodiment.name](self.out_norm(x)))
