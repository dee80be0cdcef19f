# Copyright (c) 2026 The CMM Authors
# SPDX-License-Identifier: Apache-2.0
"""Cross-modal mapping for few-shot classification over cached embeddings."""

from ._cmm import (
    Checkpoint,
    CmmError,
    EmbeddingCache,
    FewShotTask,
    Split,
    SynthConfig,
    TrainConfig,
    evaluate,
    flip_analysis,
    gap_report,
    gaussian_mle,
    grid_search_alpha,
    kl_gaussian,
    load_cache,
    load_checkpoint,
    map_features,
    sample_fewshot,
    synth_generate,
    train,
    wasserstein2_gaussian,
    write_cache,
    write_checkpoint,
)

__all__ = [
    "Checkpoint",
    "CmmError",
    "EmbeddingCache",
    "FewShotTask",
    "Split",
    "SynthConfig",
    "TrainConfig",
    "evaluate",
    "flip_analysis",
    "gap_report",
    "gaussian_mle",
    "grid_search_alpha",
    "kl_gaussian",
    "load_cache",
    "load_checkpoint",
    "map_features",
    "sample_fewshot",
    "synth_generate",
    "train",
    "wasserstein2_gaussian",
    "write_cache",
    "write_checkpoint",
]
