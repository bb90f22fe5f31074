"""Few-shot classification over pre-extracted embeddings with a cooperative
bi-path metric (inductive cosine plus base-class similarity distributions),
an LLE-reduced variant, and a seeded episodic evaluation harness."""

__version__ = "0.1.0"

from .cbm import CbmConfig, cbm_scores, combined_score, similarity_distribution, transductive_score
from .embedding_store import (
    BaseMatrix,
    EmbeddingDataset,
    FeatureMap,
    SyntheticSpec,
    build_base_matrix,
    gap,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .harness import Method, ProtocolConfig, Report, SweepGrid, evaluate, sample_episode, sweep
from .inductive import Episode, class_prototype, classify, inductive_scores
from .lle import LleConfig, LleModel, cbm_lle_scores, fit_lle, knn, local_weights, transform
from .metrics import cosine, dense_classification_loss, neg_euclidean, neg_kl, softmax
