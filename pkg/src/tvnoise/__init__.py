"""Label-noise learning with total-variation regularization.

Simultaneously estimates a classifier for the clean labels and the
class-conditional noise transition matrix from noisily labeled data.
"""

from .datagen import GaussianMixtureSpec, LabeledDataset, corrupt_labels, sample_mixture
from .model import MlpClassifier
from .simplex import ProbVector, kl_divergence, tv_distance, validate_simplex
from .trainer import TrainConfig, TrainReport, train
from .transition import (
    ConfusionMatrix,
    DirichletPosterior,
    TransitionMatrix,
    average_tv,
    compose,
    decompose,
    make_noise,
)

__version__ = "0.1.0"
