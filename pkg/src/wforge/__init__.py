"""Sparse linear max-margin entanglement witnesses for qubit and qudit states."""
from .featurize import FeatureBasis, build_basis, featurize
from .qcore import ParticleSpec, PauliString
from .trainer import Dataset, TrainConfig, WitnessModel, train_full_batch, train_online
from .witness import assemble, classify, noise_tolerance, rfe

__all__ = [
    "Dataset",
    "FeatureBasis",
    "ParticleSpec",
    "PauliString",
    "TrainConfig",
    "WitnessModel",
    "assemble",
    "build_basis",
    "classify",
    "featurize",
    "noise_tolerance",
    "rfe",
    "train_full_batch",
    "train_online",
]
__version__ = "0.1.0"
