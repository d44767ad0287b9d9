"""Budget/overlap/latency table across tokenizers, in the shape of the
published efficiency comparison: binning and string run at horizon 8, the
learned tokenizer and the DCT+BPE scheme cover the full 1-second window."""

from __future__ import annotations

import torch

from actioncodec import (
    BinningConfig,
    BinningTokenizer,
    DctBpeConfig,
    DctBpeTokenizer,
    EmbodimentSpec,
    PerceiverConfig,
    StringConfig,
    StringTokenizer,
    SynthConfig,
    TokenizerConfig,
    VQTokenizer,
    compute_stats,
    dct_bpe_fit,
    normalize,
    overlap_rate,
    synth_dataset,
    throughput_latency,
)
from actioncodec.data import chunk_trajectory
from actioncodec.training import registry_from_trajectories


def cut(trajectories, stats, horizon, name="arm7"):
    chunks, pairs = [], []
    for traj in trajectories:
        if traj.embodiment.name != name:
            continue
        windows = [
            normalize(c, stats)
            for c in chunk_trajectory(traj, stride_steps=1, length_steps=horizon)
        ]
        pairs.extend(zip(windows, windows[1:]))
        chunks.extend(windows)
    return chunks, pairs


def main() -> None:
    spec = EmbodimentSpec(name="arm7", index=0, control_hz=20.0, action_dim=7)
    corpus = synth_dataset(
        SynthConfig(embodiments=[spec], n_tasks=4, episodes_per_task=14, jitter=0.05),
        seed=0,
    )
    stats = compute_stats(corpus)
    registry = registry_from_trajectories(corpus)

    torch.manual_seed(0)
    learned = VQTokenizer(
        TokenizerConfig(
            perceiver=PerceiverConfig(latent_dim=64, n_tokens=16, n_layers=1, n_heads=4,
                                      ff_multiplier=2, prompt_dim=8, fourier_freqs=16),
            vocab_size=2048,
        ),
        registry,
        stats=stats,
    )

    chunks20, pairs20 = cut(corpus, stats, horizon=20)
    chunks8, pairs8 = cut(corpus, stats, horizon=8)
    fitted = dct_bpe_fit(chunks20[:1200], DctBpeConfig(dct_keep=8, bpe_vocab=2048, horizon=20))

    rows = [
        ("binning", BinningTokenizer(BinningConfig(horizon=8)), chunks8, pairs8),
        ("string", StringTokenizer(StringConfig(precision=3, horizon=8)), chunks8, pairs8),
        ("dct_bpe", DctBpeTokenizer(fitted), chunks20, pairs20),
        ("actioncodec", learned, chunks20, pairs20),
    ]
    print(f"{'tokenizer':<12} {'budget':>14} {'OR':>6} {'horizon':>8} "
          f"{'latency(s)':>11} {'actions/s':>10}")
    for name, tok, chunks, pairs in rows:
        report = overlap_rate(tok, pairs[:200])
        wall = throughput_latency(tok, chunks[:24], per_token_delay=0.05, trials=10)
        budget = f"{wall.budget_mean:.1f}±{wall.budget_std:.1f}"
        print(f"{name:<12} {budget:>14} {report.overlap_rate*100:5.0f}% "
              f"{wall.horizon:>8.0f} {wall.latency_s:>11.2f} {wall.actions_per_s:>10.1f}")
    print("\n(the learned tokenizer here is untrained: budget and latency are "
          "structural; train it for meaningful OR)")


if __name__ == "__main__":
    main()
