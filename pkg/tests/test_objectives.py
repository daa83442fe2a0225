import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from aabigan.errors import InvalidInputError
from aabigan.objectives import (
    PairScoreBatch,
    ScoreBatch,
    TargetScheme,
    aa_discriminator_grad,
    aa_discriminator_loss,
    aa_generator_encoder_loss,
    bilsgan_discriminator_loss,
    bilsgan_generator_encoder_loss,
    recon_discriminator_loss,
    recon_generator_encoder_loss,
)

from helpers import LOSSES, gradient_errors, random_populations, random_scheme

S = TargetScheme(1.0, 0.0, 0.75)
HALF = TargetScheme(1.0, 0.0, 0.5)

scores = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=12)
maybe_empty = st.lists(st.floats(-3, 3, allow_nan=False), min_size=0, max_size=12)


def test_target_scheme_defaults():
    s = TargetScheme()
    assert (s.a, s.b, s.c) == (1.0, 0.0, 0.75)
    assert s.anomaly_target == 0.5


def test_target_scheme_rejects_equal_targets():
    with pytest.raises(InvalidInputError):
        TargetScheme(0.5, 0.5, 0.5)
    with pytest.raises(InvalidInputError):
        TargetScheme(1.0, 0.0, float("nan"))


@pytest.mark.parametrize("pos,neg,gen,scheme,expected", [
    ([1, 1], [0.5, 0.5], [0, 0], S, 0.0),
    ([0.8], [0.2], [0.3], S, 0.22),
    ([0.7, 0.7], [], [0.1], S, 0.10),
])
def test_aa_discriminator_examples(pos, neg, gen, scheme, expected):
    assert aa_discriminator_loss(ScoreBatch(pos, gen, neg), scheme) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("pos,neg,gen,scheme,expected", [
    ([0.75, 0.75], [0.75], [0.75], S, 0.0),
    ([0.5], [0.5], [0.5], S, 0.1875),
    ([1.0], [], [0.0], HALF, 0.5),
])
def test_aa_generator_encoder_examples(pos, neg, gen, scheme, expected):
    assert aa_generator_encoder_loss(ScoreBatch(pos, gen, neg), scheme) == pytest.approx(expected, abs=1e-12)


def test_bilsgan_examples():
    assert bilsgan_discriminator_loss([1], [0]) == 0.0
    assert bilsgan_discriminator_loss([0.5], [0.5]) == pytest.approx(0.5, abs=1e-12)
    assert bilsgan_generator_encoder_loss([0.5], [0.5]) == 0.0
    assert bilsgan_generator_encoder_loss([1], [0]) == pytest.approx(0.5, abs=1e-12)
    assert bilsgan_generator_encoder_loss([0.75, 0.25], [0.5]) == pytest.approx(0.0625, abs=1e-12)


@pytest.mark.parametrize("real_pos,real_neg,recon,expected", [
    ([1], [0.5], [0], 0.0),
    ([0.5], [], [0.5], 0.5),
    ([1, 1], [0.5], [0.2, 0.4], 0.10),
])
def test_recon_discriminator_examples(real_pos, real_neg, recon, expected):
    pairs = PairScoreBatch(real_pos, recon, real_neg)
    assert recon_discriminator_loss(pairs, S) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("real_pos,real_neg,recon,expected", [
    ([0.75], [0.75], [0.75], 0.0),
    ([1], [1], [1], 0.1875),
    ([0.75], [], [0.25], 0.25),
])
def test_recon_generator_encoder_examples(real_pos, real_neg, recon, expected):
    pairs = PairScoreBatch(real_pos, recon, real_neg)
    assert recon_generator_encoder_loss(pairs, S) == pytest.approx(expected, abs=1e-12)


def test_empty_required_populations_rejected():
    with pytest.raises(InvalidInputError):
        aa_discriminator_loss(ScoreBatch([], [0.1]))
    with pytest.raises(InvalidInputError):
        aa_generator_encoder_loss(ScoreBatch([0.1], []))
    with pytest.raises(InvalidInputError):
        bilsgan_discriminator_loss([], [0.0])
    with pytest.raises(InvalidInputError):
        recon_discriminator_loss(PairScoreBatch([], []))


def test_pair_lengths_must_match():
    with pytest.raises(InvalidInputError):
        recon_discriminator_loss(PairScoreBatch([1.0, 1.0], [0.0]))


def test_torch_inputs_stay_differentiable():
    pos = torch.tensor([0.8, 0.6], requires_grad=True)
    gen = torch.tensor([0.3], requires_grad=True)
    loss = aa_discriminator_loss(ScoreBatch(pos, gen, torch.zeros(0)), S)
    loss.backward()
    assert torch.allclose(pos.grad, torch.tensor([-0.2, -0.4]))
    assert torch.allclose(gen.grad, torch.tensor([0.6]))


@given(pos=scores, gen=scores, c=st.floats(-1, 2))
def test_reduction_to_bilsgan(pos, gen, c):
    batch = ScoreBatch(pos, gen, [])
    assert aa_discriminator_loss(batch, TargetScheme(1.0, 0.0, c)) == bilsgan_discriminator_loss(pos, gen)
    assert aa_generator_encoder_loss(batch, HALF) == bilsgan_generator_encoder_loss(pos, gen)


@given(pos=scores, neg=maybe_empty, gen=scores)
def test_losses_non_negative(pos, neg, gen):
    batch = ScoreBatch(pos, gen, neg)
    assert aa_discriminator_loss(batch, S) >= 0
    assert aa_generator_encoder_loss(batch, S) >= 0


@given(pos=scores, neg=maybe_empty, gen=scores, seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(pos, neg, gen, seed):
    rng = np.random.default_rng(seed)
    shuffled = ScoreBatch(rng.permutation(pos), rng.permutation(gen), rng.permutation(neg) if neg else [])
    batch = ScoreBatch(pos, gen, neg)
    assert aa_discriminator_loss(shuffled, S) == aa_discriminator_loss(batch, S)
    assert aa_generator_encoder_loss(shuffled, S) == aa_generator_encoder_loss(batch, S)


@given(n_pos=st.integers(1, 5), n_neg=st.integers(0, 5), n_gen=st.integers(1, 5))
def test_zero_exactly_at_targets(n_pos, n_neg, n_gen):
    batch = ScoreBatch([S.a] * n_pos, [S.b] * n_gen, [S.anomaly_target] * n_neg)
    assert aa_discriminator_loss(batch, S) == 0.0
    at_c = ScoreBatch([S.c] * n_pos, [S.c] * n_gen, [S.c] * n_neg)
    assert aa_generator_encoder_loss(at_c, S) == 0.0


@given(pos=scores, gen=scores, delta=st.floats(1e-3, 1.0))
def test_moving_one_score_off_target_increases_loss(pos, gen, delta):
    # per-score quadratic: the minimizer of each score is its target
    at_target = ScoreBatch([S.a] * len(pos), [S.b] * len(gen), [])
    moved = ScoreBatch([S.a + delta] + [S.a] * (len(pos) - 1), [S.b] * len(gen), [])
    assert aa_discriminator_loss(moved, S) > aa_discriminator_loss(at_target, S)


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sorted(LOSSES).index(name))
    _, _, pops_names = LOSSES[name]
    for _ in range(50):
        pops = random_populations(rng, pops_names)
        err_np, err_torch = gradient_errors(name, pops, random_scheme(rng))
        assert err_np < 1e-6
        assert err_torch < 1e-6


def test_analytic_gradient_frozen_value():
    # d/ds mean((s - a)^2) = 2 (s - a) / n ; pos=[0.8, 0.6], a=1 -> [-0.2, -0.4]
    g = aa_discriminator_grad(ScoreBatch([0.8, 0.6], [0.3], [0.2]), S)
    np.testing.assert_allclose(g.pos_scores, [-0.2, -0.4], atol=1e-15)
    np.testing.assert_allclose(g.neg_scores, [-0.6], atol=1e-15)
    np.testing.assert_allclose(g.gen_scores, [0.6], atol=1e-15)
