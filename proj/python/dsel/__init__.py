"""Labeled-data selection and category discovery on frozen embeddings."""

from ._dsel import (
    DiscoveryModel,
    DselError,
    EmbeddingSet,
    HyperParams,
    Scene,
    beta_pdf,
    beta_weights,
    binning_select,
    category_similarity,
    clustering_accuracy,
    domain_similarity,
    generate_scene,
    greedy_select,
    harden_weights,
    kmeans,
    load_checkpoint,
    load_embeddings,
    merge_sources,
    pairwise_cost,
    save_embeddings,
    semi_supervised_kmeans,
    set_warnings_enabled,
    solve_emd,
    split_accuracy,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
