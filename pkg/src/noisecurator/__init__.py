"""Learn per-sample quality weights for noisily labelled data and sample clean subsets."""

from .bilevel import BilevelConfig, BilevelReweighter, SampleWeights, run_bilevel
from .data import Dataset, SplitSpec, load_dataset, make_gaussian_blobs, save_dataset, split
from .model import ClassifierParams, FeatureSpec, featurize
from .noise import NoiseSpec, inject_noise
from .sampling import normalize_weights, sample_subset, top_k
from .training import SoftmaxClassifier, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BilevelConfig",
    "BilevelReweighter",
    "ClassifierParams",
    "Dataset",
    "FeatureSpec",
    "NoiseSpec",
    "SampleWeights",
    "SoftmaxClassifier",
    "SplitSpec",
    "TrainConfig",
    "featurize",
    "inject_noise",
    "load_dataset",
    "make_gaussian_blobs",
    "normalize_weights",
    "run_bilevel",
    "sample_subset",
    "save_dataset",
    "split",
    "top_k",
    "train",
]
