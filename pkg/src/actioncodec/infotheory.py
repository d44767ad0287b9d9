"""Exact plug-in entropy and mutual-information diagnostics on enumerable worlds.

All quantities are in bits. On a ToyWorld every term is computed by direct
summation over the joint table, so the decomposition
H(C|V,L) = H(C|A) + I(C;A) - I(C;V,L) and the per-token chain rule
I(c_k; V,L,c_<k) = I(c_k; V,L) + I(c_k; c_<k | V,L) hold to numerical precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .toyworld import ToyWorld

__all__ = [
    "entropy_bits",
    "plugin_entropy",
    "marginal_token_entropies",
    "sequence_entropy",
    "InfoReport",
    "entropy_identities",
    "nll_decomposition",
]


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy of a probability table, zero-probability cells ignored."""
    p = np.asarray(p, dtype=np.float64).ravel()
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def plugin_entropy(samples: np.ndarray) -> float:
    """Plug-in entropy of an empirical sample of symbols (any hashable dtype)."""
    _, counts = np.unique(np.asarray(samples), return_counts=True)
    p = counts / counts.sum()
    return entropy_bits(p)


def marginal_token_entropies(codes: np.ndarray) -> np.ndarray:
    """Per-position plug-in entropies of a token corpus with rows as sequences."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError(f"expected (n_sequences, n_positions), got {codes.shape}")
    return np.array([plugin_entropy(codes[:, k]) for k in range(codes.shape[1])])


def sequence_entropy(codes: np.ndarray) -> float:
    """Plug-in entropy of whole token sequences (joint over positions)."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError(f"expected (n_sequences, n_positions), got {codes.shape}")
    _, counts = np.unique(codes, axis=0, return_counts=True)
    p = counts / counts.sum()
    return entropy_bits(p)


# Axis labels for a ToyWorld joint: 0 = V, 1 = L, 2 = A, 3.. = tokens.
_V, _L, _A = 0, 1, 2


def _h(world: ToyWorld, axes: tuple[int, ...]) -> float:
    return entropy_bits(world.marginal(axes))


@dataclass
class InfoReport:
    """All §-level diagnostics of one world, with identity residuals."""

    h_c_given_vl: float
    h_c_given_a: float
    i_c_a: float
    i_c_vl: float
    h_c: float
    i_token_vl: list[float] = field(default_factory=list)
    i_token_history_given_vl: list[float] = field(default_factory=list)
    i_token_total: list[float] = field(default_factory=list)
    residual_entropy_decomposition: float = 0.0
    residual_chain_rule: float = 0.0


def entropy_identities(world: ToyWorld) -> InfoReport:
    """Exact decomposition terms and the residuals of both identities."""
    tok = world.token_axes

    h_vl = _h(world, (_V, _L))
    h_vlc = _h(world, (_V, _L, *tok))
    h_a = _h(world, (_A,))
    h_ac = _h(world, (_A, *tok))
    h_c = _h(world, tok)

    h_c_given_vl = h_vlc - h_vl
    h_c_given_a = h_ac - h_a
    i_c_a = h_c + h_a - h_ac
    i_c_vl = h_c + h_vl - h_vlc

    residual_eq_entropy = h_c_given_vl - (h_c_given_a + i_c_a - i_c_vl)

    i_token_vl: list[float] = []
    i_token_hist: list[float] = []
    i_token_total: list[float] = []
    residual_chain = 0.0
    for k in range(world.n_tokens):
        ck = tok[k]
        hist = tok[:k]
        h_ck = _h(world, (ck,))
        # I(c_k; V, L)
        i_vl = h_ck + h_vl - _h(world, (_V, _L, ck))
        # I(c_k; V, L, c_<k)
        h_ctx = _h(world, (_V, _L, *hist))
        i_total = h_ck + h_ctx - _h(world, (_V, _L, *hist, ck))
        # I(c_k; c_<k | V, L) = H(c_k | V, L) - H(c_k | V, L, c_<k)
        h_ck_given_vl = _h(world, (_V, _L, ck)) - h_vl
        h_ck_given_ctx = _h(world, (_V, _L, *hist, ck)) - h_ctx
        i_hist = h_ck_given_vl - h_ck_given_ctx
        i_token_vl.append(i_vl)
        i_token_hist.append(i_hist)
        i_token_total.append(i_total)
        residual_chain = max(residual_chain, abs(i_total - (i_vl + i_hist)))

    return InfoReport(
        h_c_given_vl=h_c_given_vl,
        h_c_given_a=h_c_given_a,
        i_c_a=i_c_a,
        i_c_vl=i_c_vl,
        h_c=h_c,
        i_token_vl=i_token_vl,
        i_token_history_given_vl=i_token_hist,
        i_token_total=i_token_total,
        residual_entropy_decomposition=residual_eq_entropy,
        residual_chain_rule=residual_chain,
    )


def nll_decomposition(world: ToyWorld, model_table: np.ndarray) -> tuple[float, float, float]:
    """Split expected token NLL under a model into KL plus irreducible entropy.

    ``model_table`` is P_model(C | V, L) with shape (|V|, |L|, *token_cards),
    normalized over the token axes per (v, l). Returns (nll, kl, h_c_given_vl),
    which satisfy nll = kl + h_c_given_vl exactly.
    """
    model_table = np.asarray(model_table, dtype=np.float64)
    expected = (world.n_visual, world.n_language, *world.token_cards)
    if model_table.shape != expected:
        raise ValueError(f"model table shape {model_table.shape} != {expected}")
    token_axes_local = tuple(range(2, model_table.ndim))
    sums = model_table.sum(axis=token_axes_local)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("model table rows must sum to 1 over token axes")

    p_vlc = world.marginal((_V, _L, *world.token_axes))
    if np.any((p_vlc > 0) & (model_table <= 0)):
        raise ValueError("support violation: model assigns 0 where data has mass")

    mask = p_vlc > 0
    nll = float(-np.sum(p_vlc[mask] * np.log2(model_table[mask])))

    h_vl = _h(world, (_V, _L))
    h_vlc = entropy_bits(p_vlc)
    h_c_given_vl = h_vlc - h_vl

    p_vl = p_vlc.sum(axis=tuple(range(2, p_vlc.ndim)))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = p_vlc / p_vl[(...,) + (None,) * world.n_tokens]
    kl_terms = np.zeros_like(p_vlc)
    kl_terms[mask] = p_vlc[mask] * np.log2(cond[mask] / model_table[mask])
    kl = float(kl_terms.sum())
    return nll, kl, h_c_given_vl
