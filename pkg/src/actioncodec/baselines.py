"""Reference tokenizers: uniform binning, decimal strings, and DCT+BPE.

All three expose the same surface as the learned tokenizer (encode_tokens /
decode_tokens / reconstruct / vocab_size), so every diagnostic runs unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct, idct

from .data import ActionChunk, EmbodimentSpec
from .quantize import TokenSequence

__all__ = [
    "BinningConfig",
    "BinningTokenizer",
    "StringConfig",
    "StringTokenizer",
    "DctBpeConfig",
    "DctBpeTokenizer",
    "dct_bpe_fit",
    "save_merges",
    "load_merges",
]


@dataclass
class BinningConfig:
    bins_per_dim: int = 1000
    horizon: int = 8

    def __post_init__(self) -> None:
        if self.bins_per_dim < 2:
            raise ValueError("need at least 2 bins")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


class BinningTokenizer:
    """Uniform quantization of each normalized action element into bins."""

    def __init__(self, config: BinningConfig):
        self.config = config

    @property
    def vocab_size(self) -> int:
        return self.config.bins_per_dim

    def encode_tokens(self, chunk: ActionChunk) -> TokenSequence:
        bins = self.config.bins_per_dim
        idx = np.floor((chunk.actions + 1.0) / 2.0 * bins).astype(np.int64)
        idx = np.clip(idx, 0, bins - 1)
        return TokenSequence(idx.reshape(1, -1), chunk.embodiment_index)

    def _centers(self, codes: np.ndarray, horizon: int) -> np.ndarray:
        bins = self.config.bins_per_dim
        values = -1.0 + (codes.astype(np.float64) + 0.5) * (2.0 / bins)
        return values.reshape(horizon, -1)

    def decode_tokens(self, tokens: TokenSequence, embodiment: EmbodimentSpec) -> ActionChunk:
        horizon = self.config.horizon
        if tokens.n % horizon != 0:
            raise ValueError(f"token count {tokens.n} not divisible by horizon {horizon}")
        actions = self._centers(tokens.level0, horizon)
        timestamps = np.arange(horizon, dtype=np.float64) / embodiment.control_hz
        return ActionChunk(actions, timestamps, embodiment.index)

    def reconstruct(self, chunk: ActionChunk) -> ActionChunk:
        tokens = self.encode_tokens(chunk)
        actions = self._centers(tokens.level0, chunk.horizon)
        return ActionChunk(actions, chunk.timestamps.copy(), chunk.embodiment_index)


_STRING_CHARSET = "0123456789-., []"
_CHAR_TO_ID = {ch: i for i, ch in enumerate(_STRING_CHARSET)}


@dataclass
class StringConfig:
    precision: int = 3
    horizon: int = 8

    def __post_init__(self) -> None:
        if not 1 <= self.precision <= 6:
            raise ValueError("precision must be in [1, 6]")


class StringTokenizer:
    """Decimal text rendering of the chunk, one token per character."""

    def __init__(self, config: StringConfig):
        self.config = config

    @property
    def vocab_size(self) -> int:
        return len(_STRING_CHARSET)

    def render(self, actions: np.ndarray) -> str:
        p = self.config.precision
        rows = [
            "[" + ", ".join(f"{v:.{p}f}" for v in row) + "]" for row in actions
        ]
        return "[" + ", ".join(rows) + "]"

    def parse(self, text: str) -> np.ndarray:
        try:
            nested = json.loads(text)
            arr = np.asarray(nested, dtype=np.float64)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ValueError("invalid action string") from exc
        if arr.ndim != 2:
            raise ValueError("invalid action string")
        return arr

    def encode_tokens(self, chunk: ActionChunk) -> TokenSequence:
        text = self.render(chunk.actions)
        codes = np.asarray([_CHAR_TO_ID[ch] for ch in text], dtype=np.int64)
        return TokenSequence(codes.reshape(1, -1), chunk.embodiment_index)

    def _decode_text(self, tokens: TokenSequence) -> np.ndarray:
        if np.any(tokens.level0 >= self.vocab_size):
            raise ValueError("invalid action string")
        text = "".join(_STRING_CHARSET[c] for c in tokens.level0)
        return self.parse(text)

    def decode_tokens(self, tokens: TokenSequence, embodiment: EmbodimentSpec) -> ActionChunk:
        actions = self._decode_text(tokens)
        timestamps = np.arange(actions.shape[0], dtype=np.float64) / embodiment.control_hz
        return ActionChunk(actions, timestamps, embodiment.index)

    def reconstruct(self, chunk: ActionChunk) -> ActionChunk:
        actions = self._decode_text(self.encode_tokens(chunk))
        return ActionChunk(actions, chunk.timestamps.copy(), chunk.embodiment_index)


# DCT coefficients are quantized into 10 bits: integers in [-512, 511].
_QUANT_LEVELS = 1024
_QUANT_OFFSET = _QUANT_LEVELS // 2
MIN_FIT_CORPUS = 1000


@dataclass
class DctBpeConfig:
    dct_keep: int = 8
    quant_scale: float = 16.0
    bpe_vocab: int = 2048
    horizon: int = 20
    merges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.dct_keep < 1:
            raise ValueError("dct_keep must be >= 1")
        if self.dct_keep > self.horizon:
            raise ValueError("dct_keep cannot exceed the horizon")
        if self.quant_scale <= 0:
            raise ValueError("quant_scale must be positive")
        if self.bpe_vocab < _QUANT_LEVELS:
            raise ValueError(f"bpe_vocab must be >= {_QUANT_LEVELS}")


def dct_forward(actions: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT along the time axis."""
    return dct(actions, type=2, norm="ortho", axis=0)


def dct_inverse(coefs: np.ndarray) -> np.ndarray:
    return idct(coefs, type=2, norm="ortho", axis=0)


def _apply_merges(stream: list[int], merges: list[tuple[int, int]]) -> list[int]:
    present = set(stream)
    for merge_index, (a, b) in enumerate(merges):
        if a not in present or b not in present:
            continue
        new_id = _QUANT_LEVELS + merge_index
        out: list[int] = []
        i = 0
        merged = False
        while i < len(stream):
            if i + 1 < len(stream) and stream[i] == a and stream[i + 1] == b:
                out.append(new_id)
                merged = True
                i += 2
            else:
                out.append(stream[i])
                i += 1
        if merged:
            stream = out
            present = set(stream)
    return stream


def _expand_merges(stream: list[int], merges: list[tuple[int, int]]) -> list[int]:
    table = {(_QUANT_LEVELS + i): pair for i, pair in enumerate(merges)}
    out: list[int] = []
    work = list(reversed(stream))
    while work:
        sym = work.pop()
        if sym < _QUANT_LEVELS:
            out.append(sym)
        elif sym in table:
            a, b = table[sym]
            work.append(b)
            work.append(a)
        else:
            raise ValueError(f"unknown symbol {sym}")
    return out


def _merge_once(stream: list[int], pair: tuple[int, int], new_id: int) -> list[int] | None:
    """Greedy left-to-right replacement; None when the pair does not occur."""
    a, b = pair
    out: list[int] = []
    i = 0
    merged = False
    while i < len(stream):
        if i + 1 < len(stream) and stream[i] == a and stream[i + 1] == b:
            out.append(new_id)
            merged = True
            i += 2
        else:
            out.append(stream[i])
            i += 1
    return out if merged else None


def _fit_bpe(streams: list[list[int]], target_vocab: int) -> list[tuple[int, int]]:
    """Greedy pair merging with incremental pair counts; ties broken by the
    smallest pair so fitting is deterministic given corpus order."""
    streams = [list(s) for s in streams]
    counts: dict[tuple[int, int], int] = {}
    where: dict[tuple[int, int], set[int]] = {}
    for si, stream in enumerate(streams):
        for p in zip(stream, stream[1:]):
            counts[p] = counts.get(p, 0) + 1
            where.setdefault(p, set()).add(si)
    merges: list[tuple[int, int]] = []
    next_id = _QUANT_LEVELS
    while next_id < target_vocab and counts:
        pair, count = max(counts.items(), key=lambda kv: (kv[1], (-kv[0][0], -kv[0][1])))
        if count < 2:
            break
        merges.append(pair)
        for si in sorted(where.get(pair, ())):
            old = streams[si]
            new = _merge_once(old, pair, next_id)
            if new is None:  # stale candidate
                continue
            for p in zip(old, old[1:]):
                counts[p] -= 1
                if counts[p] == 0:
                    del counts[p]
            for p in zip(new, new[1:]):
                counts[p] = counts.get(p, 0) + 1
                where.setdefault(p, set()).add(si)
            streams[si] = new
        where.pop(pair, None)
        next_id += 1
    return merges


class DctBpeTokenizer:
    """Frequency-domain stand-in for learned BPE tokenizers.

    Per dim: orthonormal DCT, keep the lowest dct_keep coefficients, round to
    integers with quant_scale, flatten frequency-major, then apply BPE merges.
    """

    def __init__(self, config: DctBpeConfig):
        self.config = config

    @property
    def vocab_size(self) -> int:
        return _QUANT_LEVELS + len(self.config.merges)

    def _base_stream(self, actions: np.ndarray) -> list[int]:
        coefs = dct_forward(actions)[: self.config.dct_keep]
        q = np.rint(coefs * self.config.quant_scale).astype(np.int64)
        q = np.clip(q, -_QUANT_OFFSET, _QUANT_OFFSET - 1)
        return (q.reshape(-1) + _QUANT_OFFSET).tolist()

    def _stream_to_actions(self, stream: list[int], horizon: int, action_dim: int) -> np.ndarray:
        expected = self.config.dct_keep * action_dim
        stream = list(stream)
        if len(stream) < expected:  # soft decoding: pad with the zero symbol
            stream = stream + [_QUANT_OFFSET] * (expected - len(stream))
        elif len(stream) > expected:
            stream = stream[:expected]
        q = np.asarray(stream, dtype=np.int64).reshape(self.config.dct_keep, action_dim)
        coefs = np.zeros((horizon, action_dim))
        coefs[: self.config.dct_keep] = (q - _QUANT_OFFSET) / self.config.quant_scale
        return dct_inverse(coefs)

    def encode_tokens(self, chunk: ActionChunk) -> TokenSequence:
        stream = _apply_merges(self._base_stream(chunk.actions), self.config.merges)
        return TokenSequence(np.asarray(stream, dtype=np.int64).reshape(1, -1),
                             chunk.embodiment_index)

    def decode_tokens(self, tokens: TokenSequence, embodiment: EmbodimentSpec) -> ActionChunk:
        stream = _expand_merges(tokens.level0.tolist(), self.config.merges)
        actions = self._stream_to_actions(stream, self.config.horizon, embodiment.action_dim)
        timestamps = np.arange(self.config.horizon, dtype=np.float64) / embodiment.control_hz
        return ActionChunk(actions, timestamps, embodiment.index)

    def reconstruct(self, chunk: ActionChunk) -> ActionChunk:
        stream = _expand_merges(self.encode_tokens(chunk).level0.tolist(), self.config.merges)
        actions = self._stream_to_actions(stream, chunk.horizon, chunk.action_dim)
        return ActionChunk(actions, chunk.timestamps.copy(), chunk.embodiment_index)


def dct_bpe_fit(corpus: list[ActionChunk], config: DctBpeConfig) -> DctBpeConfig:
    """Calibrate quant_scale on the corpus and fit BPE merges.

    The configured quant_scale is an upper bound on granularity; the fitted
    scale is lowered when needed so every corpus coefficient fits in 10 bits.
    """
    if len(corpus) < MIN_FIT_CORPUS:
        raise ValueError(f"need at least {MIN_FIT_CORPUS} chunks to fit, got {len(corpus)}")
    max_coef = 0.0
    for chunk in corpus:
        coefs = dct_forward(chunk.actions)[: config.dct_keep]
        max_coef = max(max_coef, float(np.abs(coefs).max()))
    quant_scale = min(config.quant_scale, (_QUANT_OFFSET - 1) / max(max_coef, 1e-9))
    fitted = DctBpeConfig(
        dct_keep=config.dct_keep,
        quant_scale=quant_scale,
        bpe_vocab=config.bpe_vocab,
        horizon=config.horizon,
        merges=[],
    )
    probe = DctBpeTokenizer(fitted)
    streams = [probe._base_stream(chunk.actions) for chunk in corpus]
    fitted.merges = _fit_bpe(streams, config.bpe_vocab)
    return fitted


def save_merges(config: DctBpeConfig, path: str | Path) -> None:
    doc = {
        "dct_keep": config.dct_keep,
        "quant_scale": config.quant_scale,
        "bpe_vocab": config.bpe_vocab,
        "horizon": config.horizon,
        "merges": [list(pair) for pair in config.merges],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_merges(path: str | Path) -> DctBpeConfig:
    doc = json.loads(Path(path).read_text())
    return DctBpeConfig(
        dct_keep=int(doc["dct_keep"]),
        quant_scale=float(doc["quant_scale"]),
        bpe_vocab=int(doc["bpe_vocab"]),
        horizon=int(doc["horizon"]),
        merges=[tuple(pair) for pair in doc["merges"]],
    )
