"""A small autoregressive token predictor standing in for the VLA backbone.

The policy conditions on (observation vector, instruction id) and predicts the
level-0 token sequence of a fixed tokenizer. It exists to compare tokenizers:
training-efficiency curves and the token-perturbation experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import ActionChunk, DatasetStats, EmbodimentRegistry, EmbodimentSpec, Trajectory
from .model import Attention, _feed_forward
from .quantize import TokenSequence
from .training import TrainingDivergence, build_examples

__all__ = [
    "PolicyConfig",
    "ToyPolicy",
    "TokenizedExample",
    "TokenizedDataset",
    "EfficiencyCurve",
    "PerturbationProfile",
    "tokenize_dataset",
    "train_policy",
    "perturbation_experiment",
    "decode_with_fallback",
]


@dataclass
class PolicyConfig:
    vocab_size: int
    n_tokens: int
    obs_dim: int
    n_languages: int
    width: int = 128
    layers: int = 2
    heads: int = 4
    lang_dim: int = 32
    ff_multiplier: int = 4

    def __post_init__(self) -> None:
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")


class _CausalBlock(nn.Module):
    def __init__(self, width: int, heads: int, mult: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = Attention(width, width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.ff = _feed_forward(width, mult)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, mask=mask)
        x = x + self.ff(self.norm2(x))
        return x


class ToyPolicy(nn.Module):
    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        w = config.width
        self.lang_embed = nn.Embedding(config.n_languages, config.lang_dim)
        self.context_mlp = nn.Sequential(
            nn.Linear(config.obs_dim + config.lang_dim, w), nn.GELU(), nn.Linear(w, w)
        )
        self.token_embed = nn.Embedding(config.vocab_size, w)
        self.pos_embed = nn.Parameter(torch.randn(config.n_tokens, w) / math.sqrt(w))
        self.blocks = nn.ModuleList(
            _CausalBlock(w, config.heads, config.ff_multiplier) for _ in range(config.layers)
        )
        self.out_norm = nn.LayerNorm(w)
        self.head = nn.Linear(w, config.vocab_size)
        mask = torch.tril(torch.ones(config.n_tokens, config.n_tokens, dtype=torch.bool))
        self.register_buffer("causal_mask", mask, persistent=False)

    def _context(self, obs: torch.Tensor, language_ids: torch.Tensor) -> torch.Tensor:
        lang = self.lang_embed(language_ids)
        return self.context_mlp(torch.cat([obs, lang], dim=-1))

    def forward(
        self, obs: torch.Tensor, language_ids: torch.Tensor, codes: torch.Tensor
    ) -> torch.Tensor:
        """Teacher-forced logits (B, n, S); position k predicts codes[:, k]."""
        ctx = self._context(obs, language_ids)
        n = codes.shape[1]
        seq = torch.cat(
            [ctx.unsqueeze(1), self.token_embed(codes[:, : n - 1])], dim=1
        ) + self.pos_embed[:n]
        mask = self.causal_mask[:n, :n]
        for block in self.blocks:
            seq = block(seq, mask)
        return self.head(self.out_norm(seq))

    @torch.no_grad()
    def step_distribution(
        self, obs: torch.Tensor, language_ids: torch.Tensor, prefix: torch.Tensor
    ) -> torch.Tensor:
        """Probability over the next code given a (possibly empty) prefix."""
        k = prefix.shape[1]
        ctx = self._context(obs, language_ids)
        parts = [ctx.unsqueeze(1)]
        if k:
            parts.append(self.token_embed(prefix))
        seq = torch.cat(parts, dim=1) + self.pos_embed[: k + 1]
        mask = self.causal_mask[: k + 1, : k + 1]
        for block in self.blocks:
            seq = block(seq, mask)
        logits = self.head(self.out_norm(seq[:, -1]))
        return torch.softmax(logits, dim=-1)

    @torch.no_grad()
    def generate(
        self,
        obs: torch.Tensor,
        language_ids: torch.Tensor,
        forced: dict[int, int] | None = None,
    ) -> torch.Tensor:
        """Greedy decoding; ``forced`` overrides the code at given positions."""
        B = obs.shape[0]
        codes = torch.zeros(B, 0, dtype=torch.long)
        for k in range(self.config.n_tokens):
            if forced and k in forced:
                nxt = torch.full((B,), int(forced[k]), dtype=torch.long)
            else:
                probs = self.step_distribution(obs, language_ids, codes)
                nxt = probs.argmax(dim=-1)
            codes = torch.cat([codes, nxt[:, None]], dim=1)
        return codes


@dataclass
class TokenizedExample:
    observation: np.ndarray
    language_id: int
    codes: np.ndarray  # level-0 codes, (n,)
    chunk: ActionChunk  # normalized ground truth
    embodiment_index: int


@dataclass
class TokenizedDataset:
    examples: list[TokenizedExample]
    tokenizer: object
    registry: EmbodimentRegistry
    vocab_size: int
    n_tokens: int

    @property
    def obs_dim(self) -> int:
        return self.examples[0].observation.shape[0]

    @property
    def n_languages(self) -> int:
        return max(ex.language_id for ex in self.examples) + 1

    def policy_config(self, **overrides) -> PolicyConfig:
        return PolicyConfig(
            vocab_size=self.vocab_size,
            n_tokens=self.n_tokens,
            obs_dim=self.obs_dim,
            n_languages=self.n_languages,
            **overrides,
        )


def tokenize_dataset(
    trajectories: list[Trajectory],
    tokenizer,
    stats: DatasetStats,
    registry: EmbodimentRegistry,
    stride_steps: int = 1,
) -> TokenizedDataset:
    """Freeze a tokenizer's level-0 codes for every chunk of the corpus."""
    chunk_examples = build_examples(trajectories, stats, stride_steps)
    chunks = [ex.chunk for ex in chunk_examples]
    encode_many = getattr(tokenizer, "encode_tokens_batch", None)
    if encode_many is not None:
        sequences = encode_many(chunks)
    else:
        sequences = [tokenizer.encode_tokens(c) for c in chunks]
    lengths = {len(seq.level0) for seq in sequences}
    if len(lengths) != 1:
        raise ValueError("policy training needs a fixed token budget per chunk")
    examples = [
        TokenizedExample(
            observation=ex.observation,
            language_id=ex.language_id,
            codes=seq.level0.copy(),
            chunk=ex.chunk,
            embodiment_index=ex.chunk.embodiment_index,
        )
        for ex, seq in zip(chunk_examples, sequences)
    ]
    return TokenizedDataset(
        examples=examples,
        tokenizer=tokenizer,
        registry=registry,
        vocab_size=tokenizer.vocab_size,
        n_tokens=lengths.pop(),
    )


@dataclass
class EfficiencyCurve:
    """Validation metrics sampled along policy training.

    ``val_nll_bits`` is per token; multiply by n_tokens for the sequence NLL
    (which is floored by the exact H(C | context) via the chain rule).
    """

    steps: list[int]
    token_accuracy: list[float]
    recon_l1: list[float]
    val_nll_bits: list[float]

    def steps_to_accuracy(self, threshold: float) -> int | None:
        for step, acc in zip(self.steps, self.token_accuracy):
            if acc >= threshold:
                return step
        return None


def _batch_tensors(
    examples: list[TokenizedExample], idxs: list[int]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    obs = torch.as_tensor(
        np.stack([examples[i].observation for i in idxs]), dtype=torch.float32
    )
    lang = torch.as_tensor([examples[i].language_id for i in idxs], dtype=torch.long)
    codes = torch.as_tensor(
        np.stack([examples[i].codes for i in idxs]), dtype=torch.long
    )
    return obs, lang, codes


@torch.no_grad()
def _evaluate_policy(
    policy: ToyPolicy,
    dataset: TokenizedDataset,
    idxs: list[int],
    decode_recon: bool = True,
) -> tuple[float, float, float]:
    """(token accuracy, decoded-greedy L1, validation NLL in bits)."""
    obs, lang, codes = _batch_tensors(dataset.examples, idxs)
    logits = policy(obs, lang, codes)
    accuracy = float((logits.argmax(dim=-1) == codes).float().mean())
    nll_bits = float(
        F.cross_entropy(logits.reshape(-1, logits.shape[-1]), codes.reshape(-1))
        / math.log(2)
    )
    recon_l1 = float("nan")
    if decode_recon:
        generated = policy.generate(obs, lang)
        errs = []
        for row, i in zip(generated, idxs):
            ex = dataset.examples[i]
            spec = dataset.registry.by_index(ex.embodiment_index)
            decoded = decode_with_fallback(row.numpy(), dataset.tokenizer, spec)
            errs.append(float(np.abs(decoded.actions - ex.chunk.actions).mean()))
        recon_l1 = float(np.mean(errs))
    return accuracy, recon_l1, nll_bits


def train_policy(
    dataset: TokenizedDataset,
    config: PolicyConfig,
    steps: int,
    seed: int,
    batch_size: int = 128,
    lr: float = 1e-3,
    eval_every: int = 50,
    val_fraction: float = 0.1,
    eval_samples: int = 256,
    decode_recon: bool = True,
    history_corruption: float = 0.0,
) -> tuple[ToyPolicy, EfficiencyCurve]:
    """Cross-entropy training on token sequences; deterministic given the seed.

    ``history_corruption`` replaces each teacher-forced history token with a
    uniform random code at that rate, a standard exposure-bias mitigation.
    """
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed + 1)
    n = len(dataset.examples)
    n_val = max(1, int(round(val_fraction * n)))
    val_idxs = list(range(n - n_val, n))[:eval_samples]
    train_idxs = list(range(n - n_val))
    if not train_idxs:
        raise ValueError("dataset too small to split")

    policy = ToyPolicy(config)
    optimizer = torch.optim.Adam(policy.parameters(), lr=lr)
    curve = EfficiencyCurve(steps=[], token_accuracy=[], recon_l1=[], val_nll_bits=[])

    order = torch.randperm(len(train_idxs), generator=generator).tolist()
    cursor = 0
    for step in range(steps):
        if cursor + batch_size > len(order):
            order = torch.randperm(len(train_idxs), generator=generator).tolist()
            cursor = 0
        batch = [train_idxs[j] for j in order[cursor : cursor + batch_size]]
        cursor += batch_size
        obs, lang, codes = _batch_tensors(dataset.examples, batch)
        inputs = codes
        if history_corruption > 0:
            corrupt = torch.rand(codes.shape, generator=generator) < history_corruption
            random_codes = torch.randint(
                config.vocab_size, codes.shape, generator=generator
            )
            inputs = torch.where(corrupt, random_codes, codes)
        logits = policy(obs, lang, inputs)
        loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), codes.reshape(-1))
        if not torch.isfinite(loss):
            raise TrainingDivergence(f"non-finite policy loss at step {step}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        if (step + 1) % eval_every == 0 or step == steps - 1:
            acc, recon_l1, nll = _evaluate_policy(
                policy, dataset, val_idxs, decode_recon=decode_recon
            )
            curve.steps.append(step + 1)
            curve.token_accuracy.append(acc)
            curve.recon_l1.append(recon_l1)
            curve.val_nll_bits.append(nll)
    return policy, curve


@dataclass
class PerturbationProfile:
    positions: list[int]
    mean_l1: list[float]
    stderr_l1: list[float]
    baseline_mean: float
    baseline_stderr: float


def perturbation_experiment(
    policy: ToyPolicy,
    dataset: TokenizedDataset,
    trials: int,
    seed: int,
    positions: list[int] | None = None,
) -> PerturbationProfile:
    """Inject a uniform-random code at one position during generation.

    For each trial, the policy generates greedily; the code at position j is
    replaced by a random one, generation continues, the result is decoded, and
    the L1 error against the ground-truth chunk is recorded per position.
    """
    n = policy.config.n_tokens
    if positions is None:
        positions = list(range(n))
    if any(j < 0 or j >= n for j in positions):
        raise ValueError(f"positions must lie in [0, {n})")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(dataset.examples), size=trials)
    random_codes = rng.integers(0, policy.config.vocab_size, size=(trials, len(positions)))

    errors = {j: [] for j in positions}
    baseline = []
    for t in range(trials):
        ex = dataset.examples[int(picks[t])]
        spec = dataset.registry.by_index(ex.embodiment_index)
        obs = torch.as_tensor(ex.observation, dtype=torch.float32)[None]
        lang = torch.as_tensor([ex.language_id], dtype=torch.long)
        clean = policy.generate(obs, lang)
        decoded = decode_with_fallback(clean[0].numpy(), dataset.tokenizer, spec)
        baseline.append(float(np.abs(decoded.actions - ex.chunk.actions).mean()))
        for jj, j in enumerate(positions):
            forced = {j: int(random_codes[t, jj])}
            perturbed = policy.generate(obs, lang, forced=forced)
            decoded = decode_with_fallback(perturbed[0].numpy(), dataset.tokenizer, spec)
            errors[j].append(float(np.abs(decoded.actions - ex.chunk.actions).mean()))

    def _stats(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values)
        return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(len(arr)))

    means, stderrs = [], []
    for j in positions:
        m, s = _stats(errors[j])
        means.append(m)
        stderrs.append(s)
    base_mean, base_stderr = _stats(baseline)
    return PerturbationProfile(
        positions=list(positions),
        mean_l1=means,
        stderr_l1=stderrs,
        baseline_mean=base_mean,
        baseline_stderr=base_stderr,
    )


def decode_with_fallback(codes, tokenizer, embodiment: EmbodimentSpec) -> ActionChunk:
    """Total decoding: any invalid stream yields the all-zero normalized chunk."""
    zero = ActionChunk(
        actions=np.zeros((embodiment.chunk_steps, embodiment.action_dim)),
        timestamps=embodiment.timestamps(),
        embodiment_index=embodiment.index,
    )
    try:
        if isinstance(codes, TokenSequence):
            tokens = codes
        else:
            arr = np.asarray(codes)
            if arr.ndim == 1:
                arr = arr[None, :]
            if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
                return zero
            tokens = TokenSequence(arr, embodiment.index)
        vocab = getattr(tokenizer, "vocab_size", None)
        if vocab is not None and (np.any(tokens.codes < 0) or np.any(tokens.codes >= vocab)):
            return zero
        fixed_n = getattr(tokenizer, "n_tokens", None)
        if fixed_n is not None and tokens.n != fixed_n:
            return zero
        return tokenizer.decode_tokens(tokens, embodiment)
    except (ValueError, KeyError):
        return zero
