"""actioncodec: learned action tokenizers with information-theoretic diagnostics."""

from .baselines import (
    BinningConfig,
    BinningTokenizer,
    DctBpeConfig,
    DctBpeTokenizer,
    StringConfig,
    StringTokenizer,
    dct_bpe_fit,
)
from .data import (
    ActionChunk,
    DatasetStats,
    EmbodimentRegistry,
    EmbodimentSpec,
    SynthConfig,
    Trajectory,
    chunk_trajectory,
    compute_stats,
    denormalize,
    load_trajectories,
    normalize,
    save_trajectories,
    synth_dataset,
)
from .infotheory import (
    InfoReport,
    entropy_bits,
    entropy_identities,
    marginal_token_entropies,
    nll_decomposition,
    sequence_entropy,
)
from .losses import (
    ContrastiveParams,
    LanguageEmbeddingTable,
    clip_loss,
    cosine_similarity,
    infonce_or_loss,
    l1_penalty,
    tcl_loss,
)
from .metrics import (
    ORReport,
    artifact_entropy,
    capacity_bound,
    overlap_rate,
    recon_error,
    throughput_latency,
)
from .model import PerceiverConfig, fourier_time_embed
from .policy import (
    PolicyConfig,
    ToyPolicy,
    decode_with_fallback,
    perturbation_experiment,
    tokenize_dataset,
    train_policy,
)
from .quantize import (
    Codebook,
    RVQStack,
    TokenSequence,
    quantize,
    rvq_quantize,
    vq_loss,
)
from .tokenizer import TokenizerConfig, VQTokenizer, load_checkpoint, save_checkpoint
from .toyworld import ToyWorld, build_toy_world
from .training import (
    PostTrainConfig,
    TrainConfig,
    TrainingDivergence,
    level0_audit,
    rvq_posttrain,
    train_tokenizer,
)

__version__ = "0.1.0"
