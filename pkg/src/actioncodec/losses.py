"""Auxiliary objectives: temporal contrast, sigmoid language alignment,
perturbation InfoNCE, and the L1 latent penalty."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "cosine_similarity",
    "tcl_loss",
    "tcl_loss_all_negatives",
    "clip_loss",
    "infonce_or_loss",
    "l1_penalty",
    "ContrastiveParams",
    "LanguageEmbeddingTable",
]

def _pool(z: torch.Tensor) -> torch.Tensor:
    """Mean over the token axis when given (B, n, d) latent sequences."""
    if z.ndim == 3:
        return z.mean(dim=1)
    if z.ndim == 2:
        return z
    raise ValueError(f"expected (B, d) or (B, n, d), got shape {tuple(z.shape)}")


def _unit(z: torch.Tensor) -> torch.Tensor:
    norms = z.norm(dim=-1, keepdim=True)
    if torch.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return z / norms


def cosine_similarity(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """u.v / (|u| |v|) for two vectors; errors on zero norms."""
    nu, nv = u.norm(), v.norm()
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return (u * v).sum() / (nu * nv)


def tcl_loss(
    anchors: torch.Tensor, positives: torch.Tensor, negatives: torch.Tensor
) -> torch.Tensor:
    """Two-way temporal contrast with one negative per anchor.

    Per anchor: -log( e^{s+} / (e^{s+} + e^{s-}) ) with cosine similarities,
    averaged over the batch.
    """
    a = _unit(_pool(anchors))
    p = _unit(_pool(positives))
    n = _unit(_pool(negatives))
    s_pos = (a * p).sum(dim=-1)
    s_neg = (a * n).sum(dim=-1)
    return F.softplus(s_neg - s_pos).mean()


def tcl_loss_all_negatives(anchors: torch.Tensor, positives: torch.Tensor) -> torch.Tensor:
    """Variant averaging the per-anchor loss over every other in-batch anchor."""
    a = _unit(_pool(anchors))
    p = _unit(_pool(positives))
    B = a.shape[0]
    if B < 2:
        raise ValueError("need at least 2 anchors for in-batch negatives")
    s_pos = (a * p).sum(dim=-1)  # (B,)
    s_neg = a @ a.T  # (B, B), negatives are other anchors
    losses = F.softplus(s_neg - s_pos[:, None])
    off_diag = ~torch.eye(B, dtype=torch.bool)
    return losses[off_diag].reshape(B, B - 1).mean()


def clip_loss(
    pooled: torch.Tensor,
    language_ids: torch.Tensor,
    language_embeddings: torch.Tensor,
    temperature: torch.Tensor,
    bias: torch.Tensor,
) -> torch.Tensor:
    """Pairwise sigmoid alignment over the batch grid.

    Grid cell (i, j) pairs chunk i with the language embedding of batch item j;
    the label is +1 when the two share an instruction and -1 otherwise. The
    per-pair loss is softplus(l_ij * (-t * s_ij + b)), mean-reduced.
    """
    if language_ids.max() >= language_embeddings.shape[0]:
        raise ValueError("missing language rows for some ids")
    z = _unit(_pool(pooled))
    y = _unit(language_embeddings[language_ids])
    sims = z @ y.T
    labels = torch.where(
        language_ids[:, None] == language_ids[None, :], 1.0, -1.0
    ).to(sims.dtype)
    logits = labels * (-temperature * sims + bias)
    return F.softplus(logits).mean()


def infonce_or_loss(
    anchors: torch.Tensor, positives: torch.Tensor, temperature: float = 0.1
) -> torch.Tensor:
    """InfoNCE over cosine similarities; positives sit on the diagonal."""
    a = _unit(_pool(anchors))
    p = _unit(_pool(positives))
    B = a.shape[0]
    if B < 2:
        raise ValueError("need batch size >= 2 for in-batch negatives")
    logits = a @ p.T / temperature
    targets = torch.arange(B, device=logits.device)
    return F.cross_entropy(logits, targets)


def l1_penalty(z: torch.Tensor) -> torch.Tensor:
    """Mean absolute value over all latent entries."""
    return z.abs().mean()


class ContrastiveParams(nn.Module):
    """Learnable temperature/bias plus the fixed loss-weight map."""

    def __init__(
        self,
        temperature: float = 2.0,
        bias: float = 0.0,
        weights: dict[str, float] | None = None,
        sigma: float = 0.05,
    ):
        super().__init__()
        self.t = nn.Parameter(torch.tensor(float(temperature)))
        self.b = nn.Parameter(torch.tensor(float(bias)))
        self.weights = {"vq": 1.0, "tcl": 0.1, "clip": 0.1, "l1": 1e-4, "infonce": 0.0}
        if weights:
            self.weights.update(weights)
        for name, value in self.weights.items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name!r} must be finite and >= 0")
        if sigma < 0:
            raise ValueError("perturbation sigma must be >= 0")
        self.sigma = float(sigma)


class LanguageEmbeddingTable(nn.Module):
    """Learnable lookup, one row per instruction id."""

    def __init__(self, n_instructions: int, dim: int):
        super().__init__()
        self.table = nn.Parameter(torch.randn(n_instructions, dim) / math.sqrt(dim))

    @property
    def rows(self) -> int:
        return self.table.shape[0]

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.max() >= self.rows:
            raise ValueError("missing language rows for some ids")
        return self.table[ids]
