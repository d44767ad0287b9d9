"""Tokenizer diagnostics: overlap rate, artifact entropy, capacity, recon,
and a latency/throughput harness with a simulated per-token generation delay.

Any object with ``encode_tokens(chunk) -> TokenSequence`` (and, where needed,
``reconstruct(chunk) -> ActionChunk``) plugs into these, including baselines.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import ActionChunk
from .infotheory import entropy_bits
from .quantize import TokenSequence

__all__ = [
    "ORReport",
    "ThroughputReport",
    "overlap_rate",
    "artifact_entropy",
    "capacity_bound",
    "recon_error",
    "throughput_latency",
]


@dataclass
class ORReport:
    overlap_rate: float
    n_pairs: int
    per_embodiment: dict[int, float] = field(default_factory=dict)
    positional_overlap: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.overlap_rate <= 1.0:
            raise ValueError(f"overlap rate {self.overlap_rate} outside [0, 1]")


def _encode_many(tokenizer, chunks: list[ActionChunk]) -> list[TokenSequence]:
    batch = getattr(tokenizer, "encode_tokens_batch", None)
    if batch is not None:
        return batch(chunks)
    return [tokenizer.encode_tokens(c) for c in chunks]


def _multiset_overlap(a: np.ndarray, b: np.ndarray) -> float:
    ca, cb = Counter(a.tolist()), Counter(b.tolist())
    shared = sum(min(ca[k], cb[k]) for k in ca)
    return shared / max(len(a), len(b))


def overlap_rate(
    tokenizer, pairs: list[tuple[ActionChunk, ActionChunk]]
) -> ORReport:
    """Mean multiset-intersection fraction of level-0 codes over adjacent pairs.

    Variable-length tokenizers divide by the longer sequence. A secondary
    positional-match statistic is reported when all sequences share a length.
    """
    if not pairs:
        raise ValueError("empty pair set")
    firsts = _encode_many(tokenizer, [p[0] for p in pairs])
    seconds = _encode_many(tokenizer, [p[1] for p in pairs])
    rates = []
    positional = []
    same_length = True
    by_emb: dict[int, list[float]] = {}
    for (chunk_a, _), ta, tb in zip(pairs, firsts, seconds):
        a, b = ta.level0, tb.level0
        rate = _multiset_overlap(a, b)
        rates.append(rate)
        by_emb.setdefault(chunk_a.embodiment_index, []).append(rate)
        if len(a) == len(b):
            positional.append(float(np.mean(a == b)))
        else:
            same_length = False
    return ORReport(
        overlap_rate=float(np.mean(rates)),
        n_pairs=len(pairs),
        per_embodiment={k: float(np.mean(v)) for k, v in sorted(by_emb.items())},
        positional_overlap=float(np.mean(positional)) if same_length else None,
    )


def artifact_entropy(
    tokenizer,
    chunk: ActionChunk,
    sigma: float,
    m: int = 1024,
    seed: int = 0,
) -> float:
    """Expected token entropy under Gaussian input perturbation, in bits.

    Draws m perturbed copies of the chunk, encodes each, and sums per-position
    plug-in entropies of the empirical code histograms (an independence upper
    bound on the joint sequence entropy). The standard-normal draws depend only
    on the seed, so sweeps over sigma share perturbation directions.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if m < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(chunk.actions)):
        raise ValueError("chunk actions must be finite")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(size=(m, *chunk.actions.shape))
    perturbed = [
        ActionChunk(
            actions=chunk.actions + sigma * noise[i],
            timestamps=chunk.timestamps,
            embodiment_index=chunk.embodiment_index,
        )
        for i in range(m)
    ]
    sequences = _encode_many(tokenizer, perturbed)
    codes = np.stack([seq.codes.reshape(-1) for seq in sequences])  # (m, levels*n)
    total = 0.0
    for position in range(codes.shape[1]):
        _, counts = np.unique(codes[:, position], return_counts=True)
        total += entropy_bits(counts / counts.sum())
    return total


def capacity_bound(n: int, vocab_size: int) -> float:
    """n * log2(S) bits, the marginal-entropy ceiling of a token sequence."""
    if n < 1 or vocab_size < 1:
        raise ValueError("n and vocab_size must be >= 1")
    return n * math.log2(vocab_size)


def recon_error(tokenizer, chunks: list[ActionChunk], norm: str = "l1") -> float:
    """Mean per-element reconstruction error over the chunks."""
    if norm not in ("l1", "l2"):
        raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")
    batch = getattr(tokenizer, "reconstruct_batch", None)
    recons = batch(chunks) if batch is not None else [tokenizer.reconstruct(c) for c in chunks]
    total = 0.0
    count = 0
    for chunk, recon in zip(chunks, recons):
        diff = recon.actions - chunk.actions
        total += float(np.abs(diff).sum() if norm == "l1" else (diff**2).sum())
        count += diff.size
    return total / count


@dataclass
class ThroughputReport:
    latency_s: float
    actions_per_s: float
    budget_mean: float
    budget_std: float
    horizon: float
    encode_decode_s: float
    per_token_delay: float
    vocab_size: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def throughput_latency(
    tokenizer,
    chunks: list[ActionChunk],
    per_token_delay: float = 0.05,
    trials: int = 10,
) -> ThroughputReport:
    """Latency per chunk = measured encode+decode wall clock plus a simulated
    autoregressive generation delay of per_token_delay seconds per token."""
    if trials < 10:
        raise ValueError("need at least 10 trials")
    if not chunks:
        raise ValueError("need at least one chunk")
    budgets = np.array([len(seq.level0) for seq in _encode_many(tokenizer, chunks)], dtype=float)
    elapsed = []
    for _ in range(trials):
        start = time.perf_counter()
        for chunk in chunks:
            tokenizer.reconstruct(chunk)
        elapsed.append((time.perf_counter() - start) / len(chunks))
    encode_decode = float(np.mean(elapsed))
    budget_mean = float(budgets.mean())
    horizon = float(np.mean([c.horizon for c in chunks]))
    latency = encode_decode + per_token_delay * budget_mean
    return ThroughputReport(
        latency_s=latency,
        actions_per_s=horizon / latency,
        budget_mean=budget_mean,
        budget_std=float(budgets.std()),
        horizon=horizon,
        encode_decode_s=encode_decode,
        per_token_delay=per_token_delay,
        vocab_size=getattr(tokenizer, "vocab_size", 0),
    )
