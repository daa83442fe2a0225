import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from aabigan.errors import InvalidInputError
from aabigan.metrics import auroc
from aabigan.networks import build_model, tabular_preset
from aabigan.scoring import (
    LATENT_NORM,
    RECON_ERROR,
    ScoreVector,
    latent_norm_score,
    read_score_csv,
    recon_error_score,
    select_criterion,
    write_score_csv,
)


class Stub:
    """Minimal model: fixed encode/reconstruct functions."""

    def __init__(self, encode=None, reconstruct=None):
        self._encode = encode or (lambda x: x)
        self._reconstruct = reconstruct or (lambda x: x)

    def encode(self, x):
        return self._encode(x)

    def reconstruct(self, x):
        return self._reconstruct(x)


def test_identity_reconstruction_scores_zero():
    x = np.random.default_rng(0).standard_normal((6, 3))
    v = recon_error_score(Stub(), x)
    assert v.criterion == RECON_ERROR
    assert np.all(v.scores == 0.0)


def test_recon_error_of_zero_versus_ones_is_dimension():
    x = np.zeros((2, 3, 4, 4))
    v = recon_error_score(Stub(reconstruct=torch.ones_like), x)
    np.testing.assert_array_equal(v.scores, [48.0, 48.0])


def test_latent_norm_examples():
    assert latent_norm_score(Stub(encode=torch.zeros_like), np.ones((3, 2))).scores.tolist() == [0.0] * 3
    v = latent_norm_score(Stub(encode=lambda x: torch.tensor([[3.0, 4.0]])), np.zeros((1, 2)))
    assert v.scores[0] == pytest.approx(5.0)


def test_scores_invariant_to_batch_order():
    model = build_model(tabular_preset(5), seed=1)
    x = np.random.default_rng(1).standard_normal((40, 5)).astype(np.float32)
    perm = np.random.default_rng(2).permutation(40)
    a = recon_error_score(model, x).scores
    b = recon_error_score(model, x[perm]).scores
    np.testing.assert_allclose(a[perm], b, rtol=1e-6)


def test_scoring_leaves_training_mode_unchanged():
    model = build_model(tabular_preset(5), seed=1).train()
    recon_error_score(model, np.zeros((3, 5), np.float32))
    assert model.training
    model.eval()
    latent_norm_score(model, np.zeros((3, 5), np.float32))
    assert not model.training


def test_shape_mismatch_raises():
    model = build_model(tabular_preset(5), seed=1)
    with pytest.raises(InvalidInputError):
        recon_error_score(model, np.zeros((3, 4), np.float32))
    with pytest.raises(InvalidInputError):
        recon_error_score(Stub(reconstruct=lambda x: x[:, :1]), np.zeros((3, 4)))


def _criterion_stub(recon_scores, latent_scores):
    # row index is carried in the input so the stub can look up fixed scores
    recon = torch.tensor(recon_scores, dtype=torch.float64)
    latent = torch.tensor(latent_scores, dtype=torch.float64)

    def reconstruct(x):
        idx = x[:, 0].long()
        out = x.clone().double()
        out[:, 0] += torch.sqrt(recon[idx])
        return out

    def encode(x):
        return latent[x[:, 0].long()].unsqueeze(1)

    return Stub(encode, reconstruct)


def test_select_criterion_prefers_higher_auroc():
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    recon = [0.1, 0.2, 0.3, 0.9, 0.5, 0.6, 0.7, 0.8]  # one normal outranks all anomalies
    latent = [0.8, 0.6, 0.1, 0.2, 0.5, 0.7, 0.3, 0.4]
    x = np.arange(8, dtype=np.float32)[:, None]
    model = _criterion_stub(recon, latent)
    best, aurocs = select_criterion(model, x, y)
    assert aurocs[RECON_ERROR] == pytest.approx(auroc(recon, y), abs=1e-6)
    assert aurocs[RECON_ERROR] > aurocs[LATENT_NORM]
    assert best == RECON_ERROR
    best, _ = select_criterion(_criterion_stub(latent, recon), x, y)
    assert best == LATENT_NORM


def test_select_criterion_tie_goes_to_recon():
    y = np.array([0, 1, 0, 1])
    same = [0.1, 0.4, 0.2, 0.9]
    x = np.arange(4, dtype=np.float32)[:, None]
    best, aurocs = select_criterion(_criterion_stub(same, np.sqrt(same)), x, y)
    assert aurocs[RECON_ERROR] == aurocs[LATENT_NORM]
    assert best == RECON_ERROR


def test_select_criterion_needs_both_labels():
    with pytest.raises(InvalidInputError):
        select_criterion(Stub(), np.zeros((3, 2)), [0, 0, 0])


def test_score_csv_round_trip(tmp_path):
    v = ScoreVector(np.array([0.5, 1.25, 1e-17]), RECON_ERROR, np.array([10, 4, 7]))
    write_score_csv(tmp_path / "s.csv", v, [0, 1, 1])
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "sample_id,score,label,criterion"
    back, labels = read_score_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.scores, v.scores)
    np.testing.assert_array_equal(back.sample_ids, v.sample_ids)
    assert labels.tolist() == [0, 1, 1]


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=30), st.integers(0, 1000))
def test_scores_are_non_negative(values, seed):
    x = np.asarray(values, dtype=np.float32).reshape(-1, 1)
    model = build_model(tabular_preset(1, (8, 4)), seed=seed)
    assert (recon_error_score(model, x).scores >= 0).all()
    assert (latent_norm_score(model, x).scores >= 0).all()
