"""Anomaly-aware bidirectional GAN for semi-supervised anomaly detection."""

from .errors import (
    CheckpointError,
    CorruptCheckpointError,
    CorruptDataError,
    DatasetError,
    InsufficientDataError,
    InvalidInputError,
    InvalidSpecError,
    ResourceLimitError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .metrics import AggregateReport, ExperimentResult, aggregate, auroc, fid, frechet_distance
from .networks import ArchitecturePreset, ModelBundle, build_model, image_preset, tabular_preset
from .objectives import PairScoreBatch, ScoreBatch, TargetScheme
from .scenario import LabeledDataset, ScenarioData, ScenarioSpec, build_scenario, load_dataset, make_ring_dataset
from .scoring import ScoreVector, latent_norm_score, recon_error_score, select_criterion
from .trainer import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
