"""Training-data attribution lab.

Thin python surface over the C++ core: datasets and deterministic sampling,
retraining oracles, gradient-based influence estimators, the learned
encoder + attention-pooling scorer, and rank-based evaluation protocols.
"""

from tdalab._core import (
    AirRep,
    Dataset,
    Model,
    NumericError,
    UsageError,
    airrep_subset_scores,
    classify_by_top1,
    embed_gradients,
    generate_instance,
    group_constants,
    group_influence,
    hessian,
    influence_exact,
    influence_matrix_exact,
    init_airrep,
    instance_labels,
    lds,
    load_embeddings,
    loo_influence_oracle,
    normalize_labels,
    ranking_loss,
    rds_score,
    save_embeddings,
    sample_subsets,
    select_topk,
    spearman,
    split_pool,
    synth_planted_dataset,
    tracin_score,
    train_airrep,
    train_model,
)

__all__ = [
    "AirRep",
    "Dataset",
    "Model",
    "NumericError",
    "UsageError",
    "airrep_subset_scores",
    "classify_by_top1",
    "embed_gradients",
    "generate_instance",
    "group_constants",
    "group_influence",
    "hessian",
    "influence_exact",
    "influence_matrix_exact",
    "init_airrep",
    "instance_labels",
    "lds",
    "load_embeddings",
    "loo_influence_oracle",
    "normalize_labels",
    "ranking_loss",
    "rds_score",
    "save_embeddings",
    "sample_subsets",
    "select_topk",
    "spearman",
    "split_pool",
    "synth_planted_dataset",
    "tracin_score",
    "train_airrep",
    "train_model",
]
