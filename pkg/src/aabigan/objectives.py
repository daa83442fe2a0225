"""Least-squares adversarial objectives for the anomaly-aware bidirectional GAN.

Every loss takes batches of raw discriminator scores and returns the sum of
per-population mean squared deviations from a target value. Scores may be
plain sequences, numpy arrays or torch tensors; torch inputs stay on the
autograd graph so the trainer can differentiate through them.

Populations:

* ``pos``  -- D(x+, E(x+)) on normal samples
* ``neg``  -- D(x-, E(x-)) on collected anomalies (may be empty)
* ``gen``  -- D(G(z), z) on generated pairs

Target values (a, b, c): normal pairs are pushed to ``a``, anomaly pairs to
the midpoint ``(a + b) / 2``, generated pairs to ``b``; the generator and
encoder push every population towards ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import torch

from .errors import InvalidInputError

__all__ = [
    "TargetScheme",
    "ScoreBatch",
    "PairScoreBatch",
    "aa_discriminator_loss",
    "aa_generator_encoder_loss",
    "bilsgan_discriminator_loss",
    "bilsgan_generator_encoder_loss",
    "recon_discriminator_loss",
    "recon_generator_encoder_loss",
    "aa_discriminator_grad",
    "aa_generator_encoder_grad",
    "bilsgan_discriminator_grad",
    "bilsgan_generator_encoder_grad",
    "recon_discriminator_grad",
    "recon_generator_encoder_grad",
]

Scores = Any  # sequence of floats, np.ndarray or torch.Tensor


@dataclass(frozen=True)
class TargetScheme:
    """Regression targets of the discriminator (a, b) and of G/E (c)."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.75

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInputError(f"target {name} must be finite")
        if self.a == self.b:
            raise InvalidInputError("targets a and b must differ")

    @property
    def anomaly_target(self) -> float:
        return (self.a + self.b) / 2.0

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass
class ScoreBatch:
    pos_scores: Scores
    gen_scores: Scores
    neg_scores: Scores = ()


@dataclass
class PairScoreBatch:
    """D' scores on (x+, x+), (x-, x-) and (x+, G(E(x+))) pairs."""

    real_pos_scores: Scores
    recon_scores: Scores
    real_neg_scores: Scores = ()


def _as_scores(scores: Scores):
    if isinstance(scores, torch.Tensor):
        return scores.reshape(-1)
    return np.asarray(scores, dtype=np.float64).reshape(-1)


def _size(scores) -> int:
    return int(scores.shape[0])


def _sq_dev_mean(scores, target: float):
    # empty populations contribute exactly zero
    if _size(scores) == 0:
        if isinstance(scores, torch.Tensor):
            return scores.new_zeros(())
        return 0.0
    if isinstance(scores, torch.Tensor):
        return ((scores - target) ** 2).mean()
    # exactly rounded sum, so the value does not depend on score order
    return math.fsum((scores - target) ** 2) / scores.size


def _sq_dev_grad(scores, target: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return np.zeros(0)
    return 2.0 * (scores - target) / scores.size


def _require(scores, name: str):
    if _size(scores) == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    return scores


def _unpack(batch: ScoreBatch):
    pos = _require(_as_scores(batch.pos_scores), "pos_scores")
    gen = _require(_as_scores(batch.gen_scores), "gen_scores")
    neg = _as_scores(batch.neg_scores)
    return pos, neg, gen


def _unpack_pairs(pairs: PairScoreBatch):
    real_pos = _require(_as_scores(pairs.real_pos_scores), "real_pos_scores")
    recon = _require(_as_scores(pairs.recon_scores), "recon_scores")
    if _size(real_pos) != _size(recon):
        raise InvalidInputError(
            "real_pos_scores and recon_scores must be paired over one mini-batch"
        )
    return real_pos, _as_scores(pairs.real_neg_scores), recon


def aa_discriminator_loss(batch: ScoreBatch, scheme: TargetScheme = TargetScheme()):
    """Discriminator objective with the anomaly midpoint term.

    ``mean((pos - a)^2) + mean((neg - (a+b)/2)^2) + mean((gen - b)^2)``
    """
    pos, neg, gen = _unpack(batch)
    return (
        _sq_dev_mean(pos, scheme.a)
        + _sq_dev_mean(neg, scheme.anomaly_target)
        + _sq_dev_mean(gen, scheme.b)
    )


def aa_generator_encoder_loss(batch: ScoreBatch, scheme: TargetScheme = TargetScheme()):
    """Generator/encoder objective: all three populations regress to ``c``."""
    pos, neg, gen = _unpack(batch)
    return (
        _sq_dev_mean(pos, scheme.c)
        + _sq_dev_mean(neg, scheme.c)
        + _sq_dev_mean(gen, scheme.c)
    )


def bilsgan_discriminator_loss(pos_scores: Scores, gen_scores: Scores):
    """Plain bidirectional LSGAN discriminator loss (targets 1 and 0)."""
    pos = _require(_as_scores(pos_scores), "pos_scores")
    gen = _require(_as_scores(gen_scores), "gen_scores")
    return _sq_dev_mean(pos, 1.0) + _sq_dev_mean(gen, 0.0)


def bilsgan_generator_encoder_loss(pos_scores: Scores, gen_scores: Scores):
    pos = _require(_as_scores(pos_scores), "pos_scores")
    gen = _require(_as_scores(gen_scores), "gen_scores")
    return _sq_dev_mean(pos, 0.5) + _sq_dev_mean(gen, 0.5)


def recon_discriminator_loss(pairs: PairScoreBatch, scheme: TargetScheme = TargetScheme()):
    """Pair-discriminator (D') term only; add :func:`aa_discriminator_loss` for the full objective."""
    real_pos, real_neg, recon = _unpack_pairs(pairs)
    return (
        _sq_dev_mean(real_pos, scheme.a)
        + _sq_dev_mean(real_neg, scheme.anomaly_target)
        + _sq_dev_mean(recon, scheme.b)
    )


def recon_generator_encoder_loss(pairs: PairScoreBatch, scheme: TargetScheme = TargetScheme()):
    real_pos, real_neg, recon = _unpack_pairs(pairs)
    return (
        _sq_dev_mean(real_pos, scheme.c)
        + _sq_dev_mean(real_neg, scheme.c)
        + _sq_dev_mean(recon, scheme.c)
    )


# Analytic gradients w.r.t. each score. Each returns arrays shaped like the
# inputs, in the same population order as the corresponding batch type.

def aa_discriminator_grad(batch: ScoreBatch, scheme: TargetScheme = TargetScheme()) -> ScoreBatch:
    pos, neg, gen = _unpack(batch)
    return ScoreBatch(
        pos_scores=_sq_dev_grad(pos, scheme.a),
        neg_scores=_sq_dev_grad(neg, scheme.anomaly_target),
        gen_scores=_sq_dev_grad(gen, scheme.b),
    )


def aa_generator_encoder_grad(batch: ScoreBatch, scheme: TargetScheme = TargetScheme()) -> ScoreBatch:
    pos, neg, gen = _unpack(batch)
    return ScoreBatch(
        pos_scores=_sq_dev_grad(pos, scheme.c),
        neg_scores=_sq_dev_grad(neg, scheme.c),
        gen_scores=_sq_dev_grad(gen, scheme.c),
    )


def bilsgan_discriminator_grad(pos_scores: Scores, gen_scores: Scores) -> tuple[np.ndarray, np.ndarray]:
    pos = _require(_as_scores(pos_scores), "pos_scores")
    gen = _require(_as_scores(gen_scores), "gen_scores")
    return _sq_dev_grad(pos, 1.0), _sq_dev_grad(gen, 0.0)


def bilsgan_generator_encoder_grad(pos_scores: Scores, gen_scores: Scores) -> tuple[np.ndarray, np.ndarray]:
    pos = _require(_as_scores(pos_scores), "pos_scores")
    gen = _require(_as_scores(gen_scores), "gen_scores")
    return _sq_dev_grad(pos, 0.5), _sq_dev_grad(gen, 0.5)


def recon_discriminator_grad(pairs: PairScoreBatch, scheme: TargetScheme = TargetScheme()) -> PairScoreBatch:
    real_pos, real_neg, recon = _unpack_pairs(pairs)
    return PairScoreBatch(
        real_pos_scores=_sq_dev_grad(real_pos, scheme.a),
        real_neg_scores=_sq_dev_grad(real_neg, scheme.anomaly_target),
        recon_scores=_sq_dev_grad(recon, scheme.b),
    )


def recon_generator_encoder_grad(pairs: PairScoreBatch, scheme: TargetScheme = TargetScheme()) -> PairScoreBatch:
    real_pos, real_neg, recon = _unpack_pairs(pairs)
    return PairScoreBatch(
        real_pos_scores=_sq_dev_grad(real_pos, scheme.c),
        real_neg_scores=_sq_dev_grad(real_neg, scheme.c),
        recon_scores=_sq_dev_grad(recon, scheme.c),
    )

