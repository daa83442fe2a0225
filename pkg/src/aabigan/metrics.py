"""AUROC, multi-run aggregation and Frechet distance."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedMetricError
from .scenario import ScenarioSpec

logger = logging.getLogger(__name__)

GROUP_KEYS = ("dataset", "gamma_l", "gamma_p", "k_l", "c")


def auroc(scores, labels) -> float:
    """Probability that a random anomaly (label 1) outscores a random normal; ties count 1/2.

    Computed from mid-ranks (Mann-Whitney U), which gives the same numerator
    as explicit pair counting.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels differ in length")
    if np.isnan(scores).any():
        raise InvalidInputError("NaN score")
    if not np.isin(labels, (0, 1)).all():
        raise InvalidInputError("labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both normal and anomalous labels")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ExperimentResult:
    scenario: ScenarioSpec
    auroc: float
    criterion: str
    runtime_seconds: float = 0.0
    seed: int = 0
    dataset: str = ""
    c: float = 0.75
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.auroc <= 1.0:
            raise InvalidInputError(f"AUROC {self.auroc} outside [0, 1]")

    def key(self, name: str):
        if name == "dataset":
            return self.dataset
        if name == "c":
            return self.c
        if name == "k_l":
            return self.scenario.k_l
        if name == "seed":
            return self.seed
        return getattr(self.scenario, name)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "auroc": self.auroc,
            "criterion": self.criterion,
            "runtime_seconds": self.runtime_seconds,
            "seed": self.seed,
            "dataset": self.dataset,
            "c": self.c,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(
            scenario=ScenarioSpec.from_dict(d["scenario"]),
            auroc=float(d["auroc"]),
            criterion=d["criterion"],
            runtime_seconds=float(d.get("runtime_seconds", 0.0)),
            seed=int(d.get("seed", 0)),
            dataset=d.get("dataset", ""),
            c=float(d.get("c", 0.75)),
            extra=d.get("extra", {}),
        )


@dataclass
class AggregateReport:
    """Mean and population std of AUROC, in percentage points."""

    mean_auroc: float
    std_auroc: float
    n_experiments: int
    group: dict

    def to_dict(self) -> dict:
        return {**self.group, "mean": self.mean_auroc, "std": self.std_auroc, "n": self.n_experiments}


def aggregate(results: Sequence[ExperimentResult], group_by: Sequence[str] = ("dataset", "gamma_l")) -> list[AggregateReport]:
    if not results:
        raise InvalidInputError("nothing to aggregate")
    for k in group_by:
        if k not in GROUP_KEYS + ("seed",):
            raise InvalidInputError(f"cannot group by {k!r}")
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in results:
        groups[tuple(r.key(k) for k in group_by)].append(r.auroc)
    reports = []
    for key in sorted(groups, key=lambda t: tuple(str(v) for v in t)):
        values = 100.0 * np.asarray(groups[key])
        reports.append(AggregateReport(
            mean_auroc=float(values.mean()),
            std_auroc=float(values.std(ddof=0)),
            n_experiments=len(values),
            group=dict(zip(group_by, key)),
        ))
    return reports


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """Frechet distance between N(mu1, sigma1) and N(mu2, sigma2).

    The trace of sqrt(sigma1 @ sigma2) is taken from the eigenvalues of the
    symmetric product sqrt(sigma1) @ sigma2 @ sqrt(sigma1).
    """
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, np.float64)), np.atleast_1d(np.asarray(mu2, np.float64))
    sigma1, sigma2 = np.atleast_2d(np.asarray(sigma1, np.float64)), np.atleast_2d(np.asarray(sigma2, np.float64))
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape or sigma1.shape != (mu1.size, mu1.size):
        raise InvalidInputError("moment shapes disagree")
    for arr in (mu1, mu2, sigma1, sigma2):
        if not np.isfinite(arr).all():
            raise InvalidInputError("non-finite moments")
    root1 = _psd_sqrt(sigma1)
    middle = root1 @ sigma2 @ root1
    eig = np.linalg.eigvalsh((middle + middle.T) / 2.0)
    if (eig < 0).any():
        if eig.min() < -1e-8 * max(1.0, np.abs(eig).max()):
            logger.warning("clamping negative eigenvalues (min %.3g) in covariance product", eig.min())
        eig = np.clip(eig, 0.0, None)
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.sqrt(eig).sum())
    if value < 0:
        if value < -1e-6:
            logger.warning("Frechet distance %.3g below zero", value)
        value = 0.0
    return value


def fid(features_real, features_gen) -> float:
    """Frechet distance between Gaussian fits of two feature matrices (rows = samples).

    Higher-rank inputs such as image batches are flattened per sample, so raw
    pixels serve as the default features.
    """
    a = np.asarray(features_real, dtype=np.float64)
    b = np.asarray(features_gen, dtype=np.float64)
    a = a[:, None] if a.ndim == 1 else a.reshape(len(a), -1)
    b = b[:, None] if b.ndim == 1 else b.reshape(len(b), -1)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidInputError("feature matrices need equal column counts")
    if len(a) < 2 or len(b) < 2:
        raise InvalidInputError("need at least two rows per feature matrix")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InvalidInputError("non-finite features")
    return frechet_distance(
        a.mean(axis=0), np.cov(a, rowvar=False), b.mean(axis=0), np.cov(b, rowvar=False)
    )
