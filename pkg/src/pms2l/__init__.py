"""Penalized semi-supervised multiclass learning with cluster-based confidence."""

from .clustering import Clusterer, Partition, fit_kmeans, minimal_matching_distance
from .confident import ConfidentClusterSet, identify, predominant_classes
from .data import Dataset, Sample, SplitSpec, load_libsvm, make_synthetic_blobs, split
from .errors import ArgumentError, ConfigurationError, DataError, MissingPrerequisite, Pms2lError
from .objective import margin, penalized_risk, phi_rho, unlabeled_margin
from .trainer import LinearModel, TrainConfig, fit, fit_supervised, predict

__version__ = "0.1.0"
