"""gpzkit: desk-scale analysis of split neural networks.

Train a small MLP on a synthetic Gaussian mixture, dump per-layer
activations, measure class-conditional radius statistics, locate the
representation transition zone, bound the information leakage of each
candidate split, check first-order training dynamics against a brute-force
oracle, probe invertibility with a learned decoder, and price the split in
FLOPs/bytes/energy.  Every stage is exposed through an HTTP service and a
thin CLI client, with bit-exact binary artifacts in between.
"""
__version__ = "0.1.0"

from .activations import ActivationBatch, ActivationSet
from .datagen import Dataset, class_centers, gaussian_mixture
from .gpz import DEFAULT_TAU, GpzReport, LayerRadiusProfile, drop_percentages, locate, stability_check
from .micronet import (
    IDENTITY,
    RELU,
    Layer,
    MlpModel,
    TargetScheme,
    TrainingDiverged,
    TrainResult,
    count_params,
    extract,
    forward,
    init_model,
    jacobian,
    make_targets,
    softmax,
    train,
    train_regression,
)
from .repr_stats import ClassEntry, ClassStats, class_stats, layer_profiles, normalized_radius
from .seeds import STAGES, derive_seed

__all__ = [
    "__version__",
    "ActivationBatch", "ActivationSet",
    "Dataset", "class_centers", "gaussian_mixture",
    "DEFAULT_TAU", "GpzReport", "LayerRadiusProfile", "drop_percentages", "locate", "stability_check",
    "IDENTITY", "RELU", "Layer", "MlpModel", "TargetScheme", "TrainingDiverged", "TrainResult",
    "count_params", "extract", "forward", "init_model", "jacobian", "make_targets",
    "softmax", "train", "train_regression",
    "ClassEntry", "ClassStats", "class_stats", "layer_profiles", "normalized_radius",
    "STAGES", "derive_seed",
]
