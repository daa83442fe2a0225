"""Anomaly scores from a trained bundle and validation-based criterion choice."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidInputError, UndefinedMetricError
from .metrics import auroc

RECON_ERROR = "recon_error"
LATENT_NORM = "latent_norm"
CRITERIA = (RECON_ERROR, LATENT_NORM)


@dataclass
class ScoreVector:
    scores: np.ndarray  # higher = more anomalous
    criterion: str
    sample_ids: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.sample_ids is None:
            self.sample_ids = np.arange(len(self.scores))
        self.sample_ids = np.asarray(self.sample_ids)
        if len(self.sample_ids) != len(self.scores):
            raise InvalidInputError("one sample id per score required")

    def __len__(self) -> int:
        return len(self.scores)


def _batched(model, x, fn, batch_size: int):
    """Run ``fn`` over ``x`` in eval mode without autograd, restoring the previous mode."""
    x = torch.as_tensor(np.asarray(x), dtype=torch.float32)
    was_training = getattr(model, "training", None)
    if hasattr(model, "eval"):
        model.eval()
    try:
        with torch.no_grad():
            parts = [fn(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    finally:
        if was_training and hasattr(model, "train"):
            model.train(True)
    if not parts:
        return np.zeros(0)
    return np.concatenate([np.asarray(torch.as_tensor(p).double()) for p in parts])


def recon_error_score(model, x_batch, sample_ids=None, batch_size: int = 512) -> ScoreVector:
    """Squared L2 distance between ``x`` and ``G(E(x))``, summed over all dimensions."""
    def fn(x):
        x_hat = torch.as_tensor(model.reconstruct(x))
        if x_hat.shape != x.shape:
            raise InvalidInputError(f"reconstruction shape {tuple(x_hat.shape)} != input {tuple(x.shape)}")
        return ((x.double() - x_hat.double()) ** 2).reshape(len(x), -1).sum(dim=1)

    return ScoreVector(_batched(model, x_batch, fn, batch_size), RECON_ERROR, sample_ids)


def latent_norm_score(model, x_batch, sample_ids=None, batch_size: int = 512) -> ScoreVector:
    """Euclidean norm of the latent code ``E(x)``."""
    def fn(x):
        z = torch.as_tensor(model.encode(x)).double()
        return torch.linalg.vector_norm(z.reshape(len(x), -1), dim=1)

    return ScoreVector(_batched(model, x_batch, fn, batch_size), LATENT_NORM, sample_ids)


SCORERS = {RECON_ERROR: recon_error_score, LATENT_NORM: latent_norm_score}


def score(model, x_batch, criterion: str, sample_ids=None) -> ScoreVector:
    if criterion not in SCORERS:
        raise InvalidInputError(f"unknown criterion {criterion!r}")
    return SCORERS[criterion](model, x_batch, sample_ids)


def select_criterion(model, val_x, val_y) -> tuple[str, dict[str, float]]:
    """Pick the criterion with the higher validation AUROC; ties go to reconstruction error.

    Returns the chosen criterion and the validation AUROC of every criterion.
    """
    val_y = np.asarray(val_y)
    if len(np.unique(val_y)) < 2:
        raise UndefinedMetricError("validation set must contain normal and anomalous samples")
    aurocs = {name: auroc(score(model, val_x, name).scores, val_y) for name in CRITERIA}
    best = RECON_ERROR if aurocs[RECON_ERROR] >= aurocs[LATENT_NORM] else LATENT_NORM
    return best, aurocs


SCORE_CSV_HEADER = ("sample_id", "score", "label", "criterion")


def write_score_csv(path, scores: ScoreVector, labels) -> None:
    labels = np.asarray(labels)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_CSV_HEADER)
        for sid, s, lab in zip(scores.sample_ids, scores.scores, labels):
            w.writerow([int(sid), repr(float(s)), int(lab), scores.criterion])


def read_score_csv(path) -> tuple[ScoreVector, np.ndarray]:
    ids, vals, labels, criteria = [], [], [], set()
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(int(row["sample_id"]))
            vals.append(float(row["score"]))
            labels.append(int(row["label"]))
            criteria.add(row["criterion"])
    if len(criteria) > 1:
        raise InvalidInputError(f"{path} mixes criteria {sorted(criteria)}")
    criterion = criteria.pop() if criteria else RECON_ERROR
    return ScoreVector(np.asarray(vals), criterion, np.asarray(ids)), np.asarray(labels)
