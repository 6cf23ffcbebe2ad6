"""Contrastive location-image pretraining toolkit.

A spherical-harmonics + Siren location encoder trained with a symmetric
contrastive objective against precomputed image features, with a synthetic
world generator, downstream evaluation harness, and embedding analyses.
"""

__version__ = "0.1.0"

from .sphere import GeoCoordinate, sh_basis, sh_basis_batch, to_spherical
from .siren import LocationEncoder, SirenConfig
from .contrastive import ImageProjection, Temperature, clip_loss, l2_normalize_rows
from .dataio import (LabeledDataset, PairDataset, SplitSpec, SyntheticWorldSpec,
                     generate_world, jitter, split)
from .pretrain import PretrainConfig, PretrainResult, embed, pretrain
from .checkpoint import load_checkpoint, save_checkpoint
from .downstream import (EvalReport, HeadConfig, SearchSpace, evaluate_task,
                         featurize, metric_accuracy, metric_r2, random_search,
                         train_head)
from .analysis import PCAResult, SimilarityGrid, pca, similarity_map

__all__ = [
    "GeoCoordinate", "sh_basis", "sh_basis_batch", "to_spherical",
    "LocationEncoder", "SirenConfig",
    "ImageProjection", "Temperature", "clip_loss", "l2_normalize_rows",
    "LabeledDataset", "PairDataset", "SplitSpec", "SyntheticWorldSpec",
    "generate_world", "jitter", "split",
    "PretrainConfig", "PretrainResult", "embed", "pretrain",
    "load_checkpoint", "save_checkpoint",
    "EvalReport", "HeadConfig", "SearchSpace", "evaluate_task", "featurize",
    "metric_accuracy", "metric_r2", "random_search", "train_head",
    "PCAResult", "SimilarityGrid", "pca", "similarity_map",
]
