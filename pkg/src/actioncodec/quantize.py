"""Nearest-code vector quantization, residual stacks, and token-stream IO.

Code selection runs in float64 with ties broken by lowest index, so the
assignment is reproducible and matches a brute-force nearest-neighbor search.
Training semantics follow the usual straight-through contract: the quantized
output propagates gradients to the latents as identity, and codebook entries
receive gradients only through the codebook loss term.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "TokenSequence",
    "Codebook",
    "RVQStack",
    "QuantizeResult",
    "RVQResult",
    "quantize",
    "rvq_quantize",
    "vq_loss",
    "kmeans",
    "save_token_streams",
    "load_token_streams",
]


@dataclass
class TokenSequence:
    """Discrete codes for one chunk: (levels, n) integer matrix."""

    codes: np.ndarray
    embodiment_index: int

    def __post_init__(self) -> None:
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim == 1:
            self.codes = self.codes[None, :]
        if self.codes.ndim != 2:
            raise ValueError(f"codes must be (levels, n), got shape {self.codes.shape}")
        if np.any(self.codes < 0):
            raise ValueError("codes must be non-negative")

    @property
    def levels(self) -> int:
        return self.codes.shape[0]

    @property
    def n(self) -> int:
        return self.codes.shape[1]

    @property
    def level0(self) -> np.ndarray:
        return self.codes[0]


class Codebook(nn.Module):
    """A table of S embedding vectors with per-code usage counters."""

    def __init__(self, vocab_size: int, dim: int):
        super().__init__()
        if vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = vocab_size
        self.dim = dim
        self.weight = nn.Parameter(torch.randn(vocab_size, dim))
        self.register_buffer("usage", torch.zeros(vocab_size, dtype=torch.long), persistent=False)

    def count_usage(self, codes: torch.Tensor) -> None:
        flat = codes.reshape(-1)
        self.usage += torch.bincount(flat, minlength=self.vocab_size)

    def reset_usage(self) -> None:
        self.usage.zero_()


@dataclass
class QuantizeResult:
    codes: torch.Tensor  # long, leading shape of the input latents
    embeddings: torch.Tensor  # straight-through values e_c, gradient flows to Z
    raw_embeddings: torch.Tensor  # e_c with gradient into the codebook weight
    codebook_loss: torch.Tensor
    commitment_loss: torch.Tensor


def _nearest_codes(z: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """argmin_j ||z - e_j||^2 in float64, lowest index on ties."""
    zf = z.detach().double().reshape(-1, z.shape[-1])
    w = weight.detach().double()
    d2 = (zf * zf).sum(dim=1, keepdim=True) - 2.0 * zf @ w.T + (w * w).sum(dim=1)[None, :]
    return torch.argmin(d2, dim=1).reshape(z.shape[:-1])


def quantize(z: torch.Tensor, book: Codebook) -> QuantizeResult:
    """Snap each latent row to its nearest codebook entry."""
    if z.shape[-1] != book.dim:
        raise ValueError(f"latent dim {z.shape[-1]} != codebook dim {book.dim}")
    if not torch.all(torch.isfinite(z)):
        raise ValueError("non-finite latents")
    codes = _nearest_codes(z, book.weight)
    raw = book.weight[codes.reshape(-1)].reshape(*z.shape).to(z.dtype)
    straight_through = z + (raw - z).detach()
    codebook_loss = F.mse_loss(raw, z.detach())
    commitment_loss = F.mse_loss(z, raw.detach())
    return QuantizeResult(codes, straight_through, raw, codebook_loss, commitment_loss)


@dataclass
class RVQResult:
    codes: torch.Tensor  # long, (levels, *leading)
    cumulative: list[torch.Tensor]  # value after each level, detached from books
    embeddings: torch.Tensor  # straight-through sum over all levels
    codebook_losses: list[torch.Tensor]
    commitment_losses: list[torch.Tensor]


class RVQStack(nn.Module):
    """Ordered codebooks, each quantizing the residual left by earlier levels."""

    def __init__(self, levels: list[Codebook]):
        super().__init__()
        if not levels:
            raise ValueError("stack needs at least one codebook")
        dims = {book.dim for book in levels}
        if len(dims) != 1:
            raise ValueError("all levels must share the embedding dim")
        self.levels = nn.ModuleList(levels)
        self.frozen = [False] * len(levels)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.levels[0].dim

    @property
    def vocab_size(self) -> int:
        return self.levels[0].vocab_size

    def freeze_level(self, level: int) -> None:
        self.levels[level].weight.requires_grad_(False)
        self.frozen[level] = True


def rvq_quantize(z: torch.Tensor, stack: RVQStack) -> RVQResult:
    """Quantize z level by level against the running residual."""
    residual = z
    cumulative: list[torch.Tensor] = []
    codes = []
    codebook_losses = []
    commitment_losses = []
    total = torch.zeros_like(z)
    for book in stack.levels:
        res = quantize(residual, book)
        codes.append(res.codes)
        codebook_losses.append(res.codebook_loss)
        commitment_losses.append(res.commitment_loss)
        total = total + res.raw_embeddings.detach()
        cumulative.append(total)
        residual = residual - res.raw_embeddings.detach()
    straight_through = z + (total - z).detach()
    return RVQResult(
        codes=torch.stack(codes, dim=0),
        cumulative=cumulative,
        embeddings=straight_through,
        codebook_losses=codebook_losses,
        commitment_losses=commitment_losses,
    )


def vq_loss(
    actions: torch.Tensor,
    reconstruction: torch.Tensor,
    latents: torch.Tensor,
    code_embeddings: torch.Tensor,
    commitment_beta: float = 1.0,
) -> torch.Tensor:
    """Reconstruction + codebook + commitment terms, each mean-reduced."""
    if actions.shape != reconstruction.shape:
        raise ValueError(f"shape mismatch {actions.shape} vs {reconstruction.shape}")
    if latents.shape != code_embeddings.shape:
        raise ValueError(f"shape mismatch {latents.shape} vs {code_embeddings.shape}")
    recon = F.mse_loss(reconstruction, actions)
    codebook = F.mse_loss(code_embeddings, latents.detach())
    commitment = F.mse_loss(latents, code_embeddings.detach())
    return recon + codebook + commitment_beta * commitment


def kmeans(
    points: np.ndarray, k: int, iters: int = 256, seed: int = 0
) -> np.ndarray:
    """Plain Lloyd iterations in float64; deterministic given the seed."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    rng = np.random.default_rng(seed)
    if n >= k:
        centers = points[rng.choice(n, size=k, replace=False)].copy()
    else:
        picks = rng.choice(n, size=k, replace=True)
        centers = points[picks] + rng.normal(scale=1e-3, size=(k, points.shape[1]))
    sq_points = (points * points).sum(axis=1, keepdims=True)
    assign = np.full(n, -1)
    for _ in range(iters):
        d2 = sq_points - 2.0 * points @ centers.T + (centers * centers).sum(axis=1)[None, :]
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            mask = assign == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return centers


def save_token_streams(sequences: list[TokenSequence], path: str | Path) -> None:
    """One line per chunk: embodiment index, level count, then codes row-major."""
    with open(path, "w") as fh:
        for seq in sequences:
            flat = " ".join(str(int(c)) for c in seq.codes.reshape(-1))
            fh.write(f"{seq.embodiment_index} {seq.levels} {flat}\n")


def load_token_streams(path: str | Path) -> list[TokenSequence]:
    sequences = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            emb, levels = int(parts[0]), int(parts[1])
            flat = np.asarray([int(p) for p in parts[2:]], dtype=np.int64)
            if levels < 1 or flat.size % levels != 0:
                raise ValueError(f"malformed token stream line: {line!r}")
            sequences.append(TokenSequence(flat.reshape(levels, -1), emb))
    return sequences
