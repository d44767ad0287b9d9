"""Train a small tokenizer and read out its diagnostics.

Shows the full loop: synthetic corpus -> tokenizer training with the composed
objective -> overlap rate, artifact-entropy sweep, capacity bound, and
reconstruction error on held-out chunks.
"""

from __future__ import annotations

from actioncodec import (
    EmbodimentSpec,
    PerceiverConfig,
    SynthConfig,
    TokenizerConfig,
    TrainConfig,
    artifact_entropy,
    capacity_bound,
    overlap_rate,
    recon_error,
    synth_dataset,
    train_tokenizer,
)
from actioncodec.training import adjacent_pairs, build_examples


def main() -> None:
    spec = EmbodimentSpec(name="arm7", index=0, control_hz=20.0, action_dim=7)
    corpus = synth_dataset(
        SynthConfig(embodiments=[spec], n_tasks=4, episodes_per_task=10, jitter=0.05),
        seed=0,
    )

    config = TrainConfig(
        tokenizer=TokenizerConfig(
            perceiver=PerceiverConfig(
                latent_dim=64, n_tokens=8, n_layers=1, n_heads=4,
                ff_multiplier=2, prompt_dim=8, fourier_freqs=16,
            ),
            vocab_size=256,
        ),
        batch_size=128,
        stride_steps=5,
        or_every=100,
    )
    tokenizer, log = train_tokenizer(corpus, config, steps=300, seed=0)
    print("training trace (step, recon L1, OR):")
    for row in log.rows:
        if "overlap_rate" in row:
            print(f"  {row['step']:>4} {row['recon_l1']:.4f} {row['overlap_rate']:.3f}")

    examples = build_examples(corpus[-4:], tokenizer.stats, stride_steps=1)
    chunks = [ex.chunk for ex in examples]
    pairs = adjacent_pairs(examples, limit=150)

    report = overlap_rate(tokenizer, pairs)
    print(f"\noverlap rate: {report.overlap_rate:.3f} over {report.n_pairs} pairs "
          f"(positional {report.positional_overlap:.3f})")
    print(f"capacity bound: {capacity_bound(tokenizer.n_tokens, tokenizer.vocab_size):.0f} bits")
    print(f"recon L1 (held-out): {recon_error(tokenizer, chunks[:100], 'l1'):.4f}")

    anchor = chunks[0]
    print("artifact entropy sweep (bits, one anchor):")
    for sigma in (0.01, 0.02, 0.05, 0.1):
        bits = artifact_entropy(tokenizer, anchor, sigma, m=256, seed=1)
        print(f"  sigma={sigma:<5} {bits:6.3f}")


if __name__ == "__main__":
    main()
