"""The learned tokenizer: perceiver encoder + codebook stack + perceiver decoder."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import ActionChunk, DatasetStats, EmbodimentRegistry, EmbodimentSpec
from .model import PerceiverConfig, PerceiverDecoder, PerceiverEncoder
from .quantize import Codebook, RVQStack, TokenSequence, rvq_quantize

__all__ = ["TokenizerConfig", "VQTokenizer", "save_checkpoint", "load_checkpoint"]


@dataclass
class TokenizerConfig:
    perceiver: PerceiverConfig = field(default_factory=PerceiverConfig)
    vocab_size: int = 2048
    levels: int = 1
    commitment_beta: float = 1.0

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    def to_dict(self) -> dict:
        return {
            "perceiver": self.perceiver.to_dict(),
            "vocab_size": self.vocab_size,
            "levels": self.levels,
            "commitment_beta": self.commitment_beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(
            perceiver=PerceiverConfig.from_dict(d["perceiver"]),
            vocab_size=int(d["vocab_size"]),
            levels=int(d["levels"]),
            commitment_beta=float(d["commitment_beta"]),
        )


class VQTokenizer(torch.nn.Module):
    """Maps normalized action chunks to discrete codes and back.

    ``token_budget`` counts the level-0 sequence the policy must generate;
    residual levels refine the decoder input without changing that budget.
    """

    def __init__(
        self,
        config: TokenizerConfig,
        registry: EmbodimentRegistry,
        stats: DatasetStats | None = None,
    ):
        super().__init__()
        self.config = config
        self.registry = registry
        self.stats = stats
        p = config.perceiver
        self.encoder = PerceiverEncoder(p, registry)
        self.decoder = PerceiverDecoder(p, registry)
        self.stack = RVQStack(
            [Codebook(config.vocab_size, p.latent_dim) for _ in range(config.levels)]
        )

    @property
    def n_tokens(self) -> int:
        return self.config.perceiver.n_tokens

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    @property
    def levels(self) -> int:
        return self.config.levels

    @property
    def token_budget(self) -> int:
        return self.n_tokens

    def encode_latents(
        self, actions: torch.Tensor, timestamps: torch.Tensor, embodiment: EmbodimentSpec
    ) -> torch.Tensor:
        return self.encoder(actions, timestamps, embodiment)

    def _chunk_tensor(self, chunks: list[ActionChunk]) -> torch.Tensor:
        dtype = next(self.parameters()).dtype
        return torch.as_tensor(
            np.stack([c.actions for c in chunks]), dtype=dtype
        )

    @torch.no_grad()
    def encode_tokens_batch(self, chunks: list[ActionChunk]) -> list[TokenSequence]:
        """Encode many chunks, grouped by embodiment for batched forwards."""
        groups: dict[int, list[int]] = {}
        for i, chunk in enumerate(chunks):
            groups.setdefault(chunk.embodiment_index, []).append(i)
        out: list[TokenSequence | None] = [None] * len(chunks)
        for emb_index in sorted(groups):
            idxs = groups[emb_index]
            spec = self.registry.by_index(emb_index)
            actions = self._chunk_tensor([chunks[i] for i in idxs])
            timestamps = torch.as_tensor(chunks[idxs[0]].timestamps, dtype=actions.dtype)
            z = self.encoder(actions, timestamps, spec)
            codes = rvq_quantize(z, self.stack).codes.cpu().numpy()  # (L, B, n)
            for j, i in enumerate(idxs):
                out[i] = TokenSequence(codes[:, j, :], emb_index)
        return out  # type: ignore[return-value]

    def encode_tokens(self, chunk: ActionChunk) -> TokenSequence:
        return self.encode_tokens_batch([chunk])[0]

    def token_embeddings(self, tokens: TokenSequence) -> torch.Tensor:
        """Sum of codebook rows over the levels present in the sequence."""
        if tokens.levels > self.levels:
            raise ValueError(f"sequence has {tokens.levels} levels, stack has {self.levels}")
        weight = self.stack.levels[0].weight
        total = torch.zeros(tokens.n, self.config.perceiver.latent_dim, dtype=weight.dtype)
        for level in range(tokens.levels):
            row = tokens.codes[level]
            if np.any(row >= self.vocab_size):
                raise ValueError("code out of vocabulary range")
            total = total + self.stack.levels[level].weight[torch.as_tensor(row)]
        return total

    @torch.no_grad()
    def decode_tokens(
        self, tokens: TokenSequence, embodiment: EmbodimentSpec
    ) -> ActionChunk:
        embeddings = self.token_embeddings(tokens).unsqueeze(0)
        actions = self.decoder(embeddings, embodiment)[0].cpu().double().numpy()
        return ActionChunk(
            actions=actions,
            timestamps=embodiment.timestamps(),
            embodiment_index=embodiment.index,
        )

    def reconstruct(self, chunk: ActionChunk) -> ActionChunk:
        spec = self.registry.by_index(chunk.embodiment_index)
        return self.decode_tokens(self.encode_tokens(chunk), spec)

    @torch.no_grad()
    def reconstruct_batch(self, chunks: list[ActionChunk]) -> list[ActionChunk]:
        groups: dict[int, list[int]] = {}
        for i, chunk in enumerate(chunks):
            groups.setdefault(chunk.embodiment_index, []).append(i)
        out: list[ActionChunk | None] = [None] * len(chunks)
        for emb_index in sorted(groups):
            idxs = groups[emb_index]
            spec = self.registry.by_index(emb_index)
            actions = self._chunk_tensor([chunks[i] for i in idxs])
            timestamps = torch.as_tensor(chunks[idxs[0]].timestamps, dtype=actions.dtype)
            z = self.encoder(actions, timestamps, spec)
            quantized = rvq_quantize(z, self.stack).embeddings
            decoded = self.decoder(quantized, spec).cpu().double().numpy()
            for j, i in enumerate(idxs):
                out[i] = ActionChunk(
                    actions=decoded[j],
                    timestamps=spec.timestamps(),
                    embodiment_index=emb_index,
                )
        return out  # type: ignore[return-value]


def save_checkpoint(tokenizer: VQTokenizer, out_dir: str | Path) -> None:
    """JSON manifest (names/shapes/dtype + config) plus a little-endian f32 blob."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    blob = bytearray()
    for name, tensor in tokenizer.state_dict().items():
        if tensor.dtype != torch.float32:
            continue
        arr = tensor.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        blob.extend(arr.tobytes())
    manifest = {
        "config": tokenizer.config.to_dict(),
        "embodiments": [spec.to_dict() for spec in tokenizer.registry],
        "tensors": entries,
    }
    if tokenizer.stats is not None:
        manifest["stats"] = [
            {
                "name": name,
                "index": next(
                    i for i, n in tokenizer.stats.index_to_name.items() if n == name
                ),
                "low": tokenizer.stats.bounds[name][0].tolist(),
                "high": tokenizer.stats.bounds[name][1].tolist(),
            }
            for name in sorted(tokenizer.stats.bounds)
        ]
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "params.bin").write_bytes(bytes(blob))


def load_checkpoint(out_dir: str | Path) -> VQTokenizer:
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    config = TokenizerConfig.from_dict(manifest["config"])
    registry = EmbodimentRegistry(
        [EmbodimentSpec.from_dict(d) for d in manifest["embodiments"]]
    )
    stats = None
    if "stats" in manifest:
        bounds = {}
        index_to_name = {}
        for entry in manifest["stats"]:
            bounds[entry["name"]] = (
                np.asarray(entry["low"], dtype=np.float64),
                np.asarray(entry["high"], dtype=np.float64),
            )
            index_to_name[int(entry["index"])] = entry["name"]
        stats = DatasetStats(bounds=bounds, index_to_name=index_to_name)
    tokenizer = VQTokenizer(config, registry, stats=stats)
    raw = (out_dir / "params.bin").read_bytes()
    state = {}
    offset = 0
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        state[entry["name"]] = torch.from_numpy(
            arr.reshape(entry["shape"]).copy()
        )
    missing = tokenizer.load_state_dict(state, strict=False)
    unexpected = [k for k in missing.missing_keys if not k.endswith("usage")]
    if unexpected or missing.unexpected_keys:
        raise ValueError(
            f"checkpoint does not match model: missing={unexpected}, "
            f"unexpected={missing.unexpected_keys}"
        )
    return tokenizer
