"""Command-line entry point: synth, train, posttrain, eval, compare, perturb,
transfer, report.

Every command reads a JSON config, seeds all RNGs from --seed, writes a
resolved-config copy next to its outputs, and keeps wall-clock measurements in
a separate timing file so the numeric outputs are checksum-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import torch

from .baselines import (
    BinningConfig,
    BinningTokenizer,
    DctBpeConfig,
    DctBpeTokenizer,
    StringConfig,
    StringTokenizer,
    dct_bpe_fit,
    save_merges,
)
from .data import (
    DatasetStats,
    EmbodimentRegistry,
    EmbodimentSpec,
    SynthConfig,
    chunk_trajectory,
    compute_stats,
    load_trajectories,
    normalize,
    save_trajectories,
    synth_dataset,
)
from .metrics import artifact_entropy, capacity_bound, overlap_rate, recon_error, throughput_latency
from .model import PerceiverConfig
from .policy import perturbation_experiment, tokenize_dataset, train_policy
from .quantize import save_token_streams
from .tokenizer import TokenizerConfig, load_checkpoint, save_checkpoint
from .training import (
    PostTrainConfig,
    TrainConfig,
    adjacent_pairs,
    build_examples,
    level0_audit,
    rvq_posttrain,
    train_tokenizer,
)

EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _require(config: dict, field: str, context: str = "config"):
    if field not in config:
        raise ConfigError(f"missing {context} field: {field!r}")
    return config[field]


def _load_config(path: str) -> dict:
    if path is None:
        raise ConfigError("missing required flag: --config")
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(out: Path, command: str, config: dict, seed: int, extra: dict | None = None):
    doc = {"command": command, "seed": seed, "config": config}
    if extra:
        doc.update(extra)
    (out / "resolved_config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def _tokenizer_config(raw: dict) -> TokenizerConfig:
    perceiver_keys = {
        "latent_dim", "n_tokens", "n_layers", "n_heads", "variant",
        "ff_multiplier", "prompt_dim", "fourier_freqs", "f_min",
    }
    perceiver = PerceiverConfig(**{k: v for k, v in raw.items() if k in perceiver_keys})
    return TokenizerConfig(
        perceiver=perceiver,
        vocab_size=int(raw.get("vocab_size", 2048)),
        levels=int(raw.get("levels", 1)),
        commitment_beta=float(raw.get("commitment_beta", 1.0)),
    )


def _train_config(raw_tok: dict, raw_train: dict) -> TrainConfig:
    cfg = TrainConfig(tokenizer=_tokenizer_config(raw_tok))
    for key in (
        "batch_size", "lr", "lr_floor", "weights", "sigma", "infonce_temperature",
        "tcl_negatives", "stride_steps", "or_stride_steps", "val_fraction",
        "or_every", "or_pairs", "kmeans_init", "kmeans_warmup_chunks",
        "kmeans_iters", "dead_code_epochs", "temperature_init", "bias_init",
    ):
        if key in raw_train:
            setattr(cfg, key, raw_train[key])
    return cfg


def _load_dataset(args) -> tuple[list, EmbodimentRegistry, DatasetStats]:
    if args.dataset is None:
        raise ConfigError("missing required flag: --dataset")
    dataset_path = Path(args.dataset)
    registry = EmbodimentRegistry.load(dataset_path.parent / "registry.json")
    trajectories = load_trajectories(dataset_path, registry)
    stats_path = dataset_path.parent / "stats.json"
    stats = DatasetStats.load(stats_path) if stats_path.exists() else compute_stats(trajectories)
    return trajectories, registry, stats


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    embodiments = [
        EmbodimentSpec.from_dict(d) for d in _require(config, "embodiments")
    ]
    syn = SynthConfig(
        embodiments=embodiments,
        n_tasks=int(_require(config, "n_tasks")),
        episodes_per_task=int(_require(config, "episodes_per_task")),
        duration_s=float(config.get("duration_s", 2.0)),
        amplitude=float(config.get("amplitude", 0.5)),
        jitter=float(config.get("jitter", 0.02)),
        n_basis=int(config.get("n_basis", 3)),
        goal_dim=int(config.get("goal_dim", 2)),
    )
    trajectories = synth_dataset(syn, args.seed)
    stats = compute_stats(trajectories)
    save_trajectories(trajectories, out / "dataset.jsonl")
    stats.save(out / "stats.json")
    EmbodimentRegistry(embodiments).save(out / "registry.json")
    _write_resolved(out, "synth", config, args.seed)
    print(f"wrote {len(trajectories)} trajectories to {out / 'dataset.jsonl'}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    trajectories, _, _ = _load_dataset(args)
    raw_train = _require(config, "training")
    steps = int(_require(raw_train, "steps", "training"))
    cfg = _train_config(_require(config, "tokenizer"), raw_train)
    _seed_everything(args.seed)
    tokenizer, log = train_tokenizer(trajectories, cfg, steps, args.seed)
    save_checkpoint(tokenizer, out / "checkpoint")
    log.write_csv(out / "train_log.csv")
    _write_resolved(out, "train", config, args.seed)
    final_or = log.last("overlap_rate")
    print(f"trained {steps} steps; final OR: {final_or}")
    return 0


def cmd_posttrain(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    if args.checkpoint is None:
        raise ConfigError("missing required flag: --checkpoint")
    base = load_checkpoint(args.checkpoint)
    trajectories, _, _ = _load_dataset(args)
    depth = int(_require(config, "depth"))
    steps = int(_require(config, "steps"))
    raw = config.get("training", {})
    pt_cfg = PostTrainConfig()
    for key in ("batch_size", "lr", "stride_steps", "eval_every", "eval_chunks",
                "kmeans_warmup_chunks", "kmeans_iters"):
        if key in raw:
            setattr(pt_cfg, key, raw[key])
    _seed_everything(args.seed)
    post, log = rvq_posttrain(base, depth, trajectories, steps, args.seed, pt_cfg)
    save_checkpoint(post, out / "checkpoint")
    log.write_csv(out / "posttrain_log.csv")

    audit_chunks = [
        ex.chunk for ex in build_examples(trajectories, base.stats, pt_cfg.stride_steps)
    ][: int(config.get("audit_chunks", 1000))]
    mismatches = level0_audit(base, post, audit_chunks)
    base_l2 = recon_error(base, audit_chunks, "l2")
    post_l2 = recon_error(post, audit_chunks, "l2")
    audit = {
        "audit_chunks": len(audit_chunks),
        "level0_codes_changed": mismatches,
        "base_recon_l2": base_l2,
        "post_recon_l2": post_l2,
    }
    (out / "audit.json").write_text(json.dumps(audit, indent=2) + "\n")
    _write_resolved(out, "posttrain", config, args.seed)
    print(f"level-0 codes changed: {mismatches} of {len(audit_chunks)}")
    print(f"recon L2: base {base_l2:.6f} -> post {post_l2:.6f}")
    if mismatches != 0:
        print("error: frozen level-0 audit failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    if args.checkpoint is None:
        raise ConfigError("missing required flag: --checkpoint")
    tokenizer = load_checkpoint(args.checkpoint)
    trajectories, _, _ = _load_dataset(args)
    _seed_everything(args.seed)
    stride = int(config.get("stride_steps", 1))
    max_chunks = int(config.get("max_chunks", 512))
    examples = build_examples(trajectories, tokenizer.stats, stride)
    chunks = [ex.chunk for ex in examples][:max_chunks]
    pairs = adjacent_pairs(examples, int(config.get("or_pairs", 256)))

    report = overlap_rate(tokenizer, pairs)
    sigma_grid = config.get("sigma_grid", [0.01, 0.02, 0.05, 0.1])
    n_anchors = int(config.get("artifact_anchors", 8))
    m_samples = int(config.get("artifact_samples", 256))
    anchor_rng = np.random.default_rng(args.seed)
    anchor_ids = anchor_rng.choice(len(chunks), size=min(n_anchors, len(chunks)), replace=False)
    sweep = []
    for sigma in sigma_grid:
        values = [
            artifact_entropy(tokenizer, chunks[int(i)], float(sigma), m_samples, seed=args.seed + int(i))
            for i in anchor_ids
        ]
        sweep.append({"sigma": float(sigma), "mean_bits": float(np.mean(values))})

    tokens = tokenizer.encode_tokens_batch(chunks)
    save_token_streams(tokens, out / "tokens.txt")
    metrics = {
        "overlap_rate": report.overlap_rate,
        "positional_overlap": report.positional_overlap,
        "or_pairs": report.n_pairs,
        "per_embodiment_or": report.per_embodiment,
        "artifact_entropy_sweep": sweep,
        "recon_l1": recon_error(tokenizer, chunks, "l1"),
        "recon_l2": recon_error(tokenizer, chunks, "l2"),
        "capacity_bits": capacity_bound(tokenizer.n_tokens, tokenizer.vocab_size),
        "token_budget": tokenizer.token_budget,
        "vocab_size": tokenizer.vocab_size,
        "levels": tokenizer.levels,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key in ("overlap_rate", "recon_l1", "recon_l2", "capacity_bits", "token_budget"):
            writer.writerow([key, metrics[key]])
        for entry in sweep:
            writer.writerow([f"artifact_entropy@{entry['sigma']}", entry["mean_bits"]])
    _write_resolved(out, "eval", config, args.seed)
    print(json.dumps(metrics, indent=2))
    return 0


def _compare_chunks(trajectories, stats, embodiment, horizon, stride, max_chunks, or_pairs):
    chunks, pairs = [], []
    for traj in trajectories:
        if traj.embodiment.name != embodiment:
            continue
        traj_chunks = [
            normalize(c, stats)
            for c in chunk_trajectory(traj, stride_steps=stride, length_steps=horizon)
        ]
        for a, b in zip(traj_chunks, traj_chunks[1:]):
            pairs.append((a, b))
        chunks.extend(traj_chunks)
    return chunks[:max_chunks], pairs[:or_pairs]


def _evaluate_tokenizer(name, tokenizer, chunks, pairs, per_token_delay, trials):
    or_report = overlap_rate(tokenizer, pairs)
    wall = throughput_latency(tokenizer, chunks[: min(len(chunks), 32)], per_token_delay, trials)
    row = {
        "tokenizer": name,
        "token_budget_mean": wall.budget_mean,
        "token_budget_std": wall.budget_std,
        "overlap_rate": or_report.overlap_rate,
        "horizon": wall.horizon,
        "recon_l1": recon_error(tokenizer, chunks, "l1"),
        "vocab_size": getattr(tokenizer, "vocab_size", 0),
    }
    timing = {
        "tokenizer": name,
        "latency_s": wall.latency_s,
        "throughput_actions_per_s": wall.actions_per_s,
        "encode_decode_s": wall.encode_decode_s,
        "per_token_delay": wall.per_token_delay,
    }
    return row, timing


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    trajectories, registry, stats = _load_dataset(args)
    _seed_everything(args.seed)
    names = config.get("tokenizers", ["actioncodec", "binning", "string", "dct_bpe"])
    embodiment = config.get("embodiment", registry.specs[0].name)
    spec = registry.by_name(embodiment)
    stride = int(config.get("stride_steps", 1))
    max_chunks = int(config.get("max_chunks", 256))
    or_pairs = int(config.get("or_pairs", 200))
    per_token_delay = float(config.get("per_token_delay", 0.05))
    trials = int(config.get("trials", 10))

    jobs = []
    for name in names:
        if name == "actioncodec":
            if args.checkpoint is None:
                raise ConfigError("tokenizer 'actioncodec' requires --checkpoint")
            tokenizer = load_checkpoint(args.checkpoint)
            horizon = spec.chunk_steps
        elif name == "binning":
            raw = config.get("binning", {})
            horizon = int(raw.get("horizon", 8))
            tokenizer = BinningTokenizer(
                BinningConfig(bins_per_dim=int(raw.get("bins_per_dim", 1000)), horizon=horizon)
            )
        elif name == "string":
            raw = config.get("string", {})
            horizon = int(raw.get("horizon", 8))
            tokenizer = StringTokenizer(
                StringConfig(precision=int(raw.get("precision", 3)), horizon=horizon)
            )
        elif name == "dct_bpe":
            raw = config.get("dct_bpe", {})
            horizon = int(raw.get("horizon", spec.chunk_steps))
            fit_chunks, _ = _compare_chunks(
                trajectories, stats, embodiment, horizon, stride, 10**9, 0
            )
            fitted = dct_bpe_fit(
                fit_chunks,
                DctBpeConfig(
                    dct_keep=int(raw.get("dct_keep", 8)),
                    quant_scale=float(raw.get("quant_scale", 16.0)),
                    bpe_vocab=int(raw.get("bpe_vocab", 2048)),
                    horizon=horizon,
                ),
            )
            save_merges(fitted, out / "dct_bpe_merges.json")
            tokenizer = DctBpeTokenizer(fitted)
        else:
            raise ConfigError(f"unknown tokenizer in config: {name!r}")
        chunks, pairs = _compare_chunks(
            trajectories, stats, embodiment, horizon, stride, max_chunks, or_pairs
        )
        if not chunks or not pairs:
            raise ConfigError(f"no chunks for embodiment {embodiment!r} at horizon {horizon}")
        jobs.append((name, tokenizer, chunks, pairs))

    workers = int(os.environ.get("ACTIONCODEC_THREADS", "1"))
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(min(workers, len(jobs))) as pool:
            results = pool.starmap(
                _evaluate_tokenizer,
                [(n, t, c, p, per_token_delay, trials) for n, t, c, p in jobs],
            )
    else:
        results = [
            _evaluate_tokenizer(n, t, c, p, per_token_delay, trials)
            for n, t, c, p in jobs
        ]
    rows = [r for r, _ in results]
    timings = [t for _, t in results]

    columns = ["tokenizer", "token_budget_mean", "token_budget_std", "overlap_rate",
               "horizon", "recon_l1", "vocab_size"]
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    (out / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n")
    (out / "timing.json").write_text(json.dumps(timings, indent=2) + "\n")
    _write_resolved(out, "compare", config, args.seed)

    header = f"{'Tokenizer':<12} {'Budget':>14} {'OR':>6} {'Horizon':>8} {'Latency(s)':>11} {'Actions/s':>10}"
    print(header)
    for row, timing in zip(rows, timings):
        budget = f"{row['token_budget_mean']:.1f}±{row['token_budget_std']:.1f}"
        print(
            f"{row['tokenizer']:<12} {budget:>14} {row['overlap_rate']*100:5.0f}% "
            f"{row['horizon']:>8.0f} {timing['latency_s']:>11.2f} "
            f"{timing['throughput_actions_per_s']:>10.1f}"
        )
    return 0


def cmd_perturb(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    if args.checkpoint is None:
        raise ConfigError("missing required flag: --checkpoint")
    tokenizer = load_checkpoint(args.checkpoint)
    trajectories, registry, _ = _load_dataset(args)
    _seed_everything(args.seed)
    tds = tokenize_dataset(
        trajectories, tokenizer, tokenizer.stats, registry,
        stride_steps=int(config.get("stride_steps", 2)),
    )
    raw_policy = config.get("policy", {})
    policy_cfg = tds.policy_config(
        width=int(raw_policy.get("width", 128)),
        layers=int(raw_policy.get("layers", 2)),
        heads=int(raw_policy.get("heads", 4)),
        ff_multiplier=int(raw_policy.get("ff_multiplier", 4)),
    )
    policy, curve = train_policy(
        tds, policy_cfg,
        steps=int(_require(config, "policy_steps")),
        seed=args.seed,
        batch_size=int(config.get("policy_batch", 128)),
        lr=float(config.get("policy_lr", 1e-3)),
        eval_every=int(config.get("eval_every", 100)),
    )
    profile = perturbation_experiment(
        policy, tds, trials=int(_require(config, "trials")), seed=args.seed + 1
    )
    with open(out / "perturb_profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "mean_l1", "stderr_l1", "baseline_mean", "baseline_stderr"])
        for j, m, s in zip(profile.positions, profile.mean_l1, profile.stderr_l1):
            writer.writerow([j, m, s, profile.baseline_mean, profile.baseline_stderr])
    with open(out / "policy_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "token_accuracy", "recon_l1", "val_nll_bits"])
        for row in zip(curve.steps, curve.token_accuracy, curve.recon_l1, curve.val_nll_bits):
            writer.writerow(row)
    _write_resolved(out, "perturb", config, args.seed)
    print(f"per-position mean L1: {[round(m, 4) for m in profile.mean_l1]}")
    return 0


def _velocity_cosine(a: np.ndarray, b: np.ndarray, grid: int = 50) -> float:
    """Cosine similarity of velocity profiles resampled to a common grid."""
    shared = min(a.shape[1], b.shape[1])
    va = np.diff(a[:, :shared], axis=0)
    vb = np.diff(b[:, :shared], axis=0)
    ta = np.linspace(0.0, 1.0, va.shape[0])
    tb = np.linspace(0.0, 1.0, vb.shape[0])
    tg = np.linspace(0.0, 1.0, grid)
    ra = np.stack([np.interp(tg, ta, va[:, d]) for d in range(shared)], axis=1)
    rb = np.stack([np.interp(tg, tb, vb[:, d]) for d in range(shared)], axis=1)
    num = float((ra * rb).sum())
    den = float(np.linalg.norm(ra) * np.linalg.norm(rb))
    return num / den if den > 0 else 0.0


def cmd_transfer(args) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    if args.checkpoint is None:
        raise ConfigError("missing required flag: --checkpoint")
    tokenizer = load_checkpoint(args.checkpoint)
    trajectories, registry, _ = _load_dataset(args)
    _seed_everything(args.seed)
    source = registry.by_name(_require(config, "source"))
    target = registry.by_name(_require(config, "target"))
    n_chunks = int(config.get("n_chunks", 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # disjoint windows intended
        examples = build_examples(
            [t for t in trajectories if t.embodiment.name == source.name],
            tokenizer.stats,
            stride_steps=int(config.get("stride_steps", source.chunk_steps)),
        )
    if not examples:
        raise ConfigError(f"no chunks for source embodiment {source.name!r}")
    picks = np.random.default_rng(args.seed).choice(
        len(examples), size=min(n_chunks, len(examples)), replace=False
    )
    records = []
    for i in sorted(int(p) for p in picks):
        chunk = examples[i].chunk
        tokens = tokenizer.encode_tokens(chunk)
        source_decoded = tokenizer.decode_tokens(tokens, source)
        target_decoded = tokenizer.decode_tokens(tokens, target)
        records.append(
            {
                "chunk_index": i,
                "codes": tokens.codes.tolist(),
                "source_actions": source_decoded.actions.tolist(),
                "target_actions": target_decoded.actions.tolist(),
                "velocity_cosine": _velocity_cosine(
                    source_decoded.actions, target_decoded.actions
                ),
            }
        )
    doc = {
        "source": source.name,
        "target": target.name,
        "chunks": records,
        "mean_velocity_cosine": float(np.mean([r["velocity_cosine"] for r in records])),
    }
    (out / "transfer.json").write_text(json.dumps(doc, indent=2) + "\n")
    _write_resolved(out, "transfer", config, args.seed)
    print(f"{source.name} -> {target.name}: mean velocity cosine "
          f"{doc['mean_velocity_cosine']:.4f} over {len(records)} chunks")
    return 0


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = _out_dir(args)
    made = []

    train_log = out / "train_log.csv"
    if train_log.exists():
        rows = list(csv.DictReader(open(train_log)))
        steps = [int(r["step"]) for r in rows]
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        axes[0].plot(steps, [float(r["recon_l1"]) for r in rows], label="recon L1")
        axes[0].plot(steps, [float(r["loss_total"]) for r in rows], label="total loss")
        axes[0].set_xlabel("step")
        axes[0].legend()
        or_pts = [(int(r["step"]), float(r["overlap_rate"])) for r in rows if r.get("overlap_rate")]
        if or_pts:
            axes[1].plot(*zip(*or_pts), marker="o")
            axes[1].set_xlabel("step")
            axes[1].set_ylabel("overlap rate")
        fig.tight_layout()
        fig.savefig(out / "train_log.png", dpi=120)
        plt.close(fig)
        made.append("train_log.png")

    comparison = out / "comparison.csv"
    if comparison.exists():
        rows = list(csv.DictReader(open(comparison)))
        names = [r["tokenizer"] for r in rows]
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        axes[0].bar(names, [float(r["token_budget_mean"]) for r in rows])
        axes[0].set_ylabel("token budget")
        axes[1].bar(names, [100 * float(r["overlap_rate"]) for r in rows])
        axes[1].set_ylabel("overlap rate (%)")
        fig.tight_layout()
        fig.savefig(out / "comparison.png", dpi=120)
        plt.close(fig)
        made.append("comparison.png")

    profile = out / "perturb_profile.csv"
    if profile.exists():
        rows = list(csv.DictReader(open(profile)))
        positions = [int(r["position"]) for r in rows]
        means = [float(r["mean_l1"]) for r in rows]
        errs = [float(r["stderr_l1"]) for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.errorbar(positions, means, yerr=errs, marker="o", label="perturbed")
        ax.axhline(float(rows[0]["baseline_mean"]), linestyle="--", label="baseline")
        ax.set_xlabel("perturbed position")
        ax.set_ylabel("decoded L1 error")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "perturb_profile.png", dpi=120)
        plt.close(fig)
        made.append("perturb_profile.png")

    if not made:
        print("no known CSV artifacts found in --out; nothing to plot", file=sys.stderr)
        return 1
    print(f"wrote plots: {', '.join(made)}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "posttrain": cmd_posttrain,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "perturb": cmd_perturb,
    "transfer": cmd_transfer,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actioncodec",
        description="Train and evaluate learned action tokenizers on synthetic corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--checkpoint", type=str, default=None)
        p.add_argument("--dataset", type=str, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
