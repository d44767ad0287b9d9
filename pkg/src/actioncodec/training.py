"""Tokenizer training: the VQ objective composed with the auxiliary losses,
plus the residual post-training stage that freezes the token-producing path."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import (
    ActionChunk,
    DatasetStats,
    EmbodimentRegistry,
    Trajectory,
    chunk_trajectory,
    compute_stats,
    normalize,
)
from .losses import (
    ContrastiveParams,
    LanguageEmbeddingTable,
    clip_loss,
    infonce_or_loss,
    l1_penalty,
    tcl_loss,
    tcl_loss_all_negatives,
)
from .metrics import overlap_rate, recon_error
from .quantize import kmeans, quantize, rvq_quantize
from .tokenizer import TokenizerConfig, VQTokenizer

__all__ = [
    "ChunkExample",
    "TrainConfig",
    "PostTrainConfig",
    "TrainingLog",
    "TrainingDivergence",
    "build_examples",
    "registry_from_trajectories",
    "adjacent_pairs",
    "train_tokenizer",
    "rvq_posttrain",
    "level0_audit",
]


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class ChunkExample:
    chunk: ActionChunk  # normalized actions
    observation: np.ndarray  # context vector at the chunk's start step
    language_id: int
    task_id: int
    successor: int | None  # global index into the example list


def registry_from_trajectories(trajectories: list[Trajectory]) -> EmbodimentRegistry:
    specs = {}
    for traj in trajectories:
        prev = specs.get(traj.embodiment.name)
        if prev is not None and prev != traj.embodiment:
            raise ValueError(f"conflicting specs for embodiment {traj.embodiment.name!r}")
        specs[traj.embodiment.name] = traj.embodiment
    return EmbodimentRegistry(list(specs.values()))


def build_examples(
    trajectories: list[Trajectory], stats: DatasetStats, stride_steps: int
) -> list[ChunkExample]:
    examples: list[ChunkExample] = []
    for traj in trajectories:
        base = len(examples)
        for chunk in chunk_trajectory(traj, stride_steps):
            offset = chunk.chunk_id * stride_steps
            successor = (
                base + chunk.successor_id if chunk.successor_id is not None else None
            )
            examples.append(
                ChunkExample(
                    chunk=normalize(chunk, stats),
                    observation=traj.observation[offset],
                    language_id=traj.language_id,
                    task_id=traj.task_id,
                    successor=successor,
                )
            )
    return examples


def adjacent_pairs(
    examples: list[ChunkExample], limit: int | None = None
) -> list[tuple[ActionChunk, ActionChunk]]:
    pairs = [
        (ex.chunk, examples[ex.successor].chunk)
        for ex in examples
        if ex.successor is not None
    ]
    return pairs[:limit] if limit else pairs


@dataclass
class TrainConfig:
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    batch_size: int = 256
    lr: float = 2e-4
    lr_floor: float = 0.1  # final fraction of the peak rate under cosine decay
    weights: dict[str, float] = field(
        default_factory=lambda: {"vq": 1.0, "tcl": 0.1, "clip": 0.1, "l1": 1e-4, "infonce": 0.0}
    )
    sigma: float = 0.05
    infonce_temperature: float = 0.1
    tcl_negatives: str = "sampled"  # or "all"
    stride_steps: int = 1
    or_stride_steps: int = 1  # adjacency stride for the OR validation pairs
    val_fraction: float = 0.1
    or_every: int = 100
    or_pairs: int = 256
    kmeans_init: bool = True
    kmeans_warmup_chunks: int = 512
    kmeans_iters: int = 64
    dead_code_epochs: int = 2
    temperature_init: float = 2.0
    bias_init: float = 0.0


LOG_COLUMNS = [
    "step", "lr", "loss_total", "recon_mse", "codebook_loss", "commitment_loss",
    "tcl", "clip", "infonce", "l1", "recon_l1", "recon_l2",
    "overlap_rate", "codebook_perplexity",
]


class TrainingLog:
    """Per-step loss terms plus periodic validation metrics; CSV-exportable."""

    def __init__(self, columns: list[str] | None = None):
        self.columns = columns or list(LOG_COLUMNS)
        self.rows: list[dict] = []

    def append(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def last(self, column: str):
        for row in reversed(self.rows):
            if column in row and row[column] is not None:
                return row[column]
        return None

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns, restval="")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row.get(k, "") for k in self.columns})


def _group_by_embodiment(
    examples: list[ChunkExample], indices: list[int]
) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(examples[i].chunk.embodiment_index, []).append(i)
    return dict(sorted(groups.items()))


def _actions_tensor(chunks: list[ActionChunk], dtype: torch.dtype) -> torch.Tensor:
    return torch.as_tensor(np.stack([c.actions for c in chunks]), dtype=dtype)


def _encode_group(
    tokenizer: VQTokenizer,
    chunks: list[ActionChunk],
    emb_index: int,
    noise_sigma: float = 0.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    spec = tokenizer.registry.by_index(emb_index)
    dtype = next(tokenizer.parameters()).dtype
    actions = _actions_tensor(chunks, dtype)
    if noise_sigma > 0:
        noise = torch.randn(actions.shape, generator=generator, dtype=dtype)
        actions = actions + noise_sigma * noise
    timestamps = torch.as_tensor(chunks[0].timestamps, dtype=dtype)
    return tokenizer.encoder(actions, timestamps, spec)


def _kmeans_init_level(
    tokenizer: VQTokenizer,
    level: int,
    examples: list[ChunkExample],
    n_chunks: int,
    iters: int,
    seed: int,
) -> None:
    """Fit level ``level`` on the residual latents of a warmup subset."""
    picks = examples[: min(n_chunks, len(examples))]
    groups = _group_by_embodiment(picks, list(range(len(picks))))
    residual_rows = []
    with torch.no_grad():
        for emb_index, idxs in groups.items():
            z = _encode_group(tokenizer, [picks[i].chunk for i in idxs], emb_index)
            residual = z.reshape(-1, z.shape[-1])
            for lower in range(level):
                res = quantize(residual, tokenizer.stack.levels[lower])
                residual = residual - res.raw_embeddings
            residual_rows.append(residual.double().numpy())
    rows = np.concatenate(residual_rows, axis=0)
    centers = kmeans(rows, tokenizer.vocab_size, iters=iters, seed=seed)
    with torch.no_grad():
        tokenizer.stack.levels[level].weight.copy_(
            torch.as_tensor(centers, dtype=tokenizer.stack.levels[level].weight.dtype)
        )


def _cosine_lr(base_lr: float, floor: float, step: int, total: int) -> float:
    if total <= 1:
        return base_lr
    progress = step / max(total - 1, 1)
    return base_lr * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))


def train_tokenizer(
    trajectories: list[Trajectory],
    config: TrainConfig,
    steps: int,
    seed: int,
) -> tuple[VQTokenizer, TrainingLog]:
    """Seed-deterministic training of the full tokenizer on raw trajectories."""
    if not trajectories:
        raise ValueError("dataset is empty")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed + 1)

    registry = registry_from_trajectories(trajectories)
    stats = compute_stats(trajectories)
    n_val = max(1, int(round(config.val_fraction * len(trajectories))))
    if len(trajectories) > n_val:
        train_trajs, val_trajs = trajectories[:-n_val], trajectories[-n_val:]
    else:
        train_trajs, val_trajs = trajectories, trajectories
    examples = build_examples(train_trajs, stats, config.stride_steps)
    val_examples = build_examples(val_trajs, stats, config.or_stride_steps)
    if not examples:
        raise ValueError("no chunks: trajectories shorter than the chunk window")
    val_pairs = adjacent_pairs(val_examples, config.or_pairs)

    tokenizer = VQTokenizer(config.tokenizer, registry, stats)
    if config.kmeans_init:
        for level in range(tokenizer.levels):
            _kmeans_init_level(
                tokenizer, level, examples, config.kmeans_warmup_chunks,
                config.kmeans_iters, seed + level,
            )

    weights = dict(config.weights)
    contrastive = ContrastiveParams(
        temperature=config.temperature_init,
        bias=config.bias_init,
        weights=weights,
        sigma=config.sigma,
    )
    n_instructions = max(ex.language_id for ex in examples) + 1
    lang_table = LanguageEmbeddingTable(
        n_instructions, config.tokenizer.perceiver.latent_dim
    )
    has_adjacency = any(ex.successor is not None for ex in examples)
    if weights.get("tcl", 0.0) > 0 and not has_adjacency:
        raise ValueError("TCL requested but the dataset has no adjacency links")

    params = (
        list(tokenizer.parameters())
        + list(contrastive.parameters())
        + list(lang_table.parameters())
    )
    optimizer = torch.optim.Adam(params, lr=config.lr)
    log = TrainingLog()

    S = tokenizer.vocab_size
    usage_prev = [np.zeros(S, dtype=np.int64) for _ in range(tokenizer.levels)]
    usage_epoch = [np.zeros(S, dtype=np.int64) for _ in range(tokenizer.levels)]
    order = torch.randperm(len(examples), generator=generator).tolist()
    cursor = 0
    epochs_seen = 0
    last_latents: torch.Tensor | None = None

    for step in range(steps):
        if cursor + config.batch_size > len(order):
            # epoch boundary: dead-code reseeding, then reshuffle
            epochs_seen += 1
            for level in range(tokenizer.levels):
                if tokenizer.stack.frozen[level]:
                    continue
                if epochs_seen >= config.dead_code_epochs:
                    dead = (usage_epoch[level] == 0) & (usage_prev[level] == 0)
                    if dead.any() and last_latents is not None:
                        picks = torch.randint(
                            last_latents.shape[0], (int(dead.sum()),), generator=generator
                        )
                        with torch.no_grad():
                            tokenizer.stack.levels[level].weight[
                                torch.as_tensor(np.flatnonzero(dead))
                            ] = last_latents[picks]
                usage_prev[level] = usage_epoch[level]
                usage_epoch[level] = np.zeros(S, dtype=np.int64)
            order = torch.randperm(len(examples), generator=generator).tolist()
            cursor = 0
        batch_idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size

        lr_now = _cosine_lr(config.lr, config.lr_floor, step, steps)
        for group in optimizer.param_groups:
            group["lr"] = lr_now

        groups = _group_by_embodiment(examples, batch_idx)
        pooled_parts, succ_pos_parts = [], []
        anchor_positions: list[int] = []  # rows of `pooled` that have a successor
        perturbed_parts = []
        lang_parts: list[int] = []
        latent_rows = []
        recon_mse = recon_l1 = 0.0
        codebook_term = commitment_term = 0.0
        batch_n = len(batch_idx)
        total_loss = torch.zeros(())
        want_infonce = weights.get("infonce", 0.0) > 0
        want_tcl = weights.get("tcl", 0.0) > 0
        rows_seen = 0

        for emb_index, idxs in groups.items():
            frac = len(idxs) / batch_n
            chunks = [examples[i].chunk for i in idxs]
            spec = tokenizer.registry.by_index(emb_index)
            z = _encode_group(tokenizer, chunks, emb_index)
            if not torch.all(torch.isfinite(z)):
                raise TrainingDivergence(
                    f"non-finite encoder latents at step {step}; lower the learning rate"
                )
            rvq = rvq_quantize(z, tokenizer.stack)
            for level in range(tokenizer.levels):
                tokenizer.stack.levels[level].count_usage(rvq.codes[level])
                usage_epoch[level] += np.bincount(
                    rvq.codes[level].reshape(-1).numpy(), minlength=S
                )
            dtype = z.dtype
            target = _actions_tensor(chunks, dtype)
            decoded = tokenizer.decoder(rvq.embeddings, spec)
            group_recon = torch.mean((decoded - target) ** 2)
            group_cb = sum(rvq.codebook_losses)
            group_commit = sum(rvq.commitment_losses)
            total_loss = total_loss + weights.get("vq", 1.0) * frac * (
                group_recon
                + group_cb
                + config.tokenizer.commitment_beta * group_commit
            )
            recon_mse += frac * float(group_recon.detach())
            recon_l1 += frac * float((decoded - target).abs().mean().detach())
            codebook_term += frac * float(group_cb.detach())
            commitment_term += frac * float(group_commit.detach())
            pooled_parts.append(z.mean(dim=1))
            latent_rows.append(z.reshape(-1, z.shape[-1]))
            lang_parts.extend(examples[i].language_id for i in idxs)

            if want_tcl:
                with_succ = [
                    (j, examples[i].successor)
                    for j, i in enumerate(idxs)
                    if examples[i].successor is not None
                ]
                if with_succ:
                    succ_chunks = [examples[s].chunk for _, s in with_succ]
                    z_succ = _encode_group(tokenizer, succ_chunks, emb_index)
                    anchor_positions.extend(rows_seen + j for j, _ in with_succ)
                    succ_pos_parts.append(z_succ.mean(dim=1))
            if want_infonce:
                z_pert = _encode_group(
                    tokenizer, chunks, emb_index,
                    noise_sigma=contrastive.sigma, generator=generator,
                )
                perturbed_parts.append(z_pert.mean(dim=1))
            rows_seen += len(idxs)

        pooled = torch.cat(pooled_parts, dim=0)
        all_latents = torch.cat(latent_rows, dim=0)
        last_latents = all_latents.detach()

        tcl_value = torch.zeros(())
        if want_tcl and anchor_positions:
            anchors = pooled[anchor_positions]
            positives = torch.cat(succ_pos_parts, dim=0)
            if config.tcl_negatives == "all" and anchors.shape[0] >= 2:
                tcl_value = tcl_loss_all_negatives(anchors, positives)
            else:
                draws = torch.randint(
                    pooled.shape[0], (len(anchor_positions),), generator=generator
                )
                # avoid pairing an anchor with itself as its negative
                pos_t = torch.as_tensor(anchor_positions)
                draws = torch.where(
                    draws == pos_t, (draws + 1) % pooled.shape[0], draws
                )
                tcl_value = tcl_loss(anchors, positives, pooled[draws])
            total_loss = total_loss + weights["tcl"] * tcl_value

        clip_value = torch.zeros(())
        if weights.get("clip", 0.0) > 0:
            lang_ids = torch.as_tensor(lang_parts)
            clip_value = clip_loss(
                pooled, lang_ids, lang_table.table, contrastive.t, contrastive.b
            )
            total_loss = total_loss + weights["clip"] * clip_value

        infonce_value = torch.zeros(())
        if want_infonce and pooled.shape[0] >= 2:
            perturbed = torch.cat(perturbed_parts, dim=0)
            infonce_value = infonce_or_loss(
                pooled, perturbed, temperature=config.infonce_temperature
            )
            total_loss = total_loss + weights["infonce"] * infonce_value

        l1_value = l1_penalty(all_latents)
        total_loss = total_loss + weights.get("l1", 0.0) * l1_value

        if not torch.isfinite(total_loss):
            raise TrainingDivergence(
                f"non-finite loss at step {step}: recon={recon_mse}, "
                f"tcl={float(tcl_value)}, clip={float(clip_value)}"
            )

        optimizer.zero_grad(set_to_none=True)
        total_loss.backward()
        optimizer.step()

        row = {
            "step": step,
            "lr": lr_now,
            "loss_total": float(total_loss.detach()),
            "recon_mse": recon_mse,
            "codebook_loss": codebook_term,
            "commitment_loss": commitment_term,
            "tcl": float(tcl_value.detach()),
            "clip": float(clip_value.detach()),
            "infonce": float(infonce_value.detach()),
            "l1": float(l1_value.detach()),
            "recon_l1": recon_l1,
            "recon_l2": recon_mse,
        }
        if (step % config.or_every == 0 or step == steps - 1) and val_pairs:
            try:
                row["overlap_rate"] = overlap_rate(tokenizer, val_pairs).overlap_rate
            except ValueError as exc:
                raise TrainingDivergence(
                    f"validation encode failed at step {step}: {exc}"
                ) from exc
            counts = usage_epoch[0] + 1e-12
            p = counts / counts.sum()
            row["codebook_perplexity"] = float(2 ** (-(p * np.log2(p)).sum()))
        log.append(**row)

    return tokenizer, log


@dataclass
class PostTrainConfig:
    batch_size: int = 256
    lr: float = 5e-4
    stride_steps: int = 1
    eval_every: int = 50
    eval_chunks: int = 512
    kmeans_warmup_chunks: int = 512
    kmeans_iters: int = 64


def rvq_posttrain(
    base: VQTokenizer,
    depth: int,
    trajectories: list[Trajectory],
    steps: int,
    seed: int,
    config: PostTrainConfig | None = None,
) -> tuple[VQTokenizer, TrainingLog]:
    """Freeze the encoder and level-0 codebook of a trained single-level
    tokenizer, then fit residual codebooks and the decoder for fidelity.

    Level-0 codes are bit-identical to the base tokenizer by construction; the
    returned model is the best decoder/residual state seen on the held-in
    evaluation slice, so its reconstruction does not regress past the base.
    """
    if depth < 2:
        raise ValueError("post-training needs depth >= 2")
    if base.levels != 1:
        raise ValueError("post-training starts from a single-level tokenizer")
    if base.stats is None:
        raise ValueError("base tokenizer is missing normalization stats")
    config = config or PostTrainConfig()
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed + 1)

    new_cfg = TokenizerConfig(
        perceiver=base.config.perceiver,
        vocab_size=base.config.vocab_size,
        levels=depth,
        commitment_beta=base.config.commitment_beta,
    )
    post = VQTokenizer(new_cfg, base.registry, base.stats)
    post.encoder.load_state_dict(base.encoder.state_dict())
    post.decoder.load_state_dict(base.decoder.state_dict())
    with torch.no_grad():
        post.stack.levels[0].weight.copy_(base.stack.levels[0].weight)
    post.encoder.requires_grad_(False)
    post.stack.freeze_level(0)

    examples = build_examples(trajectories, base.stats, config.stride_steps)
    if not examples:
        raise ValueError("no chunks: trajectories shorter than the chunk window")
    for level in range(1, depth):
        _kmeans_init_level(
            post, level, examples, config.kmeans_warmup_chunks,
            config.kmeans_iters, seed + level,
        )

    eval_chunks = [ex.chunk for ex in examples[: config.eval_chunks]]
    base_l2 = recon_error(base, eval_chunks, "l2")

    trainable = [p for p in post.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.lr)
    log = TrainingLog(columns=["step", "recon_mse", "codebook_loss", "eval_l2", "base_l2"])

    def snapshot() -> dict:
        return {k: v.detach().clone() for k, v in post.state_dict().items()}

    best_state = snapshot()
    best_l2 = recon_error(post, eval_chunks, "l2")

    order = torch.randperm(len(examples), generator=generator).tolist()
    cursor = 0
    for step in range(steps):
        if cursor + config.batch_size > len(order):
            order = torch.randperm(len(examples), generator=generator).tolist()
            cursor = 0
        batch_idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        groups = _group_by_embodiment(examples, batch_idx)
        total = torch.zeros(())
        recon_term = cb_term = 0.0
        batch_n = len(batch_idx)
        for emb_index, idxs in groups.items():
            frac = len(idxs) / batch_n
            chunks = [examples[i].chunk for i in idxs]
            spec = post.registry.by_index(emb_index)
            with torch.no_grad():
                z = _encode_group(post, chunks, emb_index)
            rvq = rvq_quantize(z, post.stack)
            decoded = post.decoder(rvq.embeddings, spec)
            target = _actions_tensor(chunks, z.dtype)
            group_recon = torch.mean((decoded - target) ** 2)
            group_cb = sum(rvq.codebook_losses[1:])
            total = total + frac * (group_recon + group_cb)
            recon_term += frac * float(group_recon.detach())
            cb_term += frac * float(group_cb.detach())
        if not torch.isfinite(total):
            raise TrainingDivergence(f"non-finite loss at post-training step {step}")
        optimizer.zero_grad(set_to_none=True)
        total.backward()
        optimizer.step()

        row = {"step": step, "recon_mse": recon_term, "codebook_loss": cb_term}
        if step % config.eval_every == 0 or step == steps - 1:
            eval_l2 = recon_error(post, eval_chunks, "l2")
            row["eval_l2"] = eval_l2
            row["base_l2"] = base_l2
            if eval_l2 < best_l2:
                best_l2 = eval_l2
                best_state = snapshot()
        log.append(**row)

    post.load_state_dict(best_state)
    return post, log


def level0_audit(
    base: VQTokenizer, post: VQTokenizer, chunks: list[ActionChunk]
) -> int:
    """Number of chunks whose level-0 codes differ between the two tokenizers."""
    base_tokens = base.encode_tokens_batch(chunks)
    post_tokens = post.encode_tokens_batch(chunks)
    return sum(
        int(not np.array_equal(a.level0, b.level0))
        for a, b in zip(base_tokens, post_tokens)
    )
