"""Multimodal survival fusion: decoupled features, random segment
reorganization, dense mixture-of-experts, discrete-time hazards."""

from .data import Cohort, PatientRecord, SynthConfig, assign_time_bins, generate_synthetic_cohort
from .pipeline import FusionSurvivalModel, TrainConfig, build_model
from .train import cross_validate, run_ablation, train_model

__all__ = [
    "Cohort",
    "PatientRecord",
    "SynthConfig",
    "TrainConfig",
    "FusionSurvivalModel",
    "assign_time_bins",
    "build_model",
    "cross_validate",
    "generate_synthetic_cohort",
    "run_ablation",
    "train_model",
]

__version__ = "0.1.0"
