"""Binary-weight network training and artifact export.

Train small sign-weight networks with a straight-through estimator, fold
batch norm into per-channel affines, and write the two artifacts the
simulator consumes: a packed weight file and a golden-vector JSON whose
integer feature maps it must reproduce bit-for-bit.
"""

from .checkpoint import Checkpoint, FoldedLayer
from .errors import DatasetMissing, FormatError, TrainerError
from .recipes import (
    DEFAULT_TOPOLOGY,
    TrainRecipe,
    cifar10_recipe,
    mnist_recipe,
    parse_topology,
    recipe_for,
    svhn_recipe,
)
from .train import train
from .vectors import emit_vectors, predict, replay
from .weightfile import export, weight_blob

__all__ = [
    "Checkpoint", "FoldedLayer", "DatasetMissing", "FormatError",
    "TrainerError", "DEFAULT_TOPOLOGY", "TrainRecipe", "cifar10_recipe",
    "mnist_recipe", "parse_topology", "recipe_for", "svhn_recipe", "train",
    "emit_vectors", "predict", "replay", "export", "weight_blob",
]
