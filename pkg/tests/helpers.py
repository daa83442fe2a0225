"""Independent reference implementations used by several test modules."""

import numpy as np
import torch

from aabigan.objectives import (
    PairScoreBatch,
    ScoreBatch,
    TargetScheme,
    aa_discriminator_grad,
    aa_discriminator_loss,
    aa_generator_encoder_grad,
    aa_generator_encoder_loss,
    bilsgan_discriminator_grad,
    bilsgan_discriminator_loss,
    bilsgan_generator_encoder_grad,
    bilsgan_generator_encoder_loss,
    recon_discriminator_grad,
    recon_discriminator_loss,
    recon_generator_encoder_grad,
    recon_generator_encoder_loss,
)

FD_STEP = 1e-5
GRAD_FLOOR = 1e-3


def pair_count_auroc(scores, labels) -> float:
    """O(n^2) count of anomaly/normal pairs where the anomaly scores higher; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def central_difference(f, pops, h=FD_STEP):
    """Gradient of scalar ``f(pops)`` w.r.t. every entry of every population, by central differences."""
    grads = []
    for k, arr in enumerate(pops):
        g = np.zeros_like(arr)
        for i in range(arr.size):
            up = [p.copy() for p in pops]
            dn = [p.copy() for p in pops]
            up[k][i] += h
            dn[k][i] -= h
            g[i] = (f(up) - f(dn)) / (2 * h)
        grads.append(g)
    return grads


def relative_error(g, ref) -> float:
    g, ref = np.asarray(g, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    if g.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(g), np.abs(ref)), GRAD_FLOOR)
    return float(np.max(np.abs(g - ref) / denom))


# name -> (loss(pops, scheme), grad(pops, scheme) -> list of arrays, population names)
def _aa(loss_fn, grad_fn):
    def loss(p, s):
        return loss_fn(ScoreBatch(pos_scores=p[0], neg_scores=p[1], gen_scores=p[2]), s)

    def grad(p, s):
        g = grad_fn(ScoreBatch(pos_scores=p[0], neg_scores=p[1], gen_scores=p[2]), s)
        return [g.pos_scores, g.neg_scores, g.gen_scores]

    return loss, grad, ("pos", "neg", "gen")


def _recon(loss_fn, grad_fn):
    def loss(p, s):
        return loss_fn(PairScoreBatch(real_pos_scores=p[0], real_neg_scores=p[1], recon_scores=p[2]), s)

    def grad(p, s):
        g = grad_fn(PairScoreBatch(real_pos_scores=p[0], real_neg_scores=p[1], recon_scores=p[2]), s)
        return [g.real_pos_scores, g.real_neg_scores, g.recon_scores]

    return loss, grad, ("real_pos", "real_neg", "recon")


def _bilsgan(loss_fn, grad_fn):
    return (lambda p, s: loss_fn(p[0], p[1])), (lambda p, s: list(grad_fn(p[0], p[1]))), ("pos", "gen")


LOSSES = {
    "aa_discriminator_loss": _aa(aa_discriminator_loss, aa_discriminator_grad),
    "aa_generator_encoder_loss": _aa(aa_generator_encoder_loss, aa_generator_encoder_grad),
    "bilsgan_discriminator_loss": _bilsgan(bilsgan_discriminator_loss, bilsgan_discriminator_grad),
    "bilsgan_generator_encoder_loss": _bilsgan(bilsgan_generator_encoder_loss, bilsgan_generator_encoder_grad),
    "recon_discriminator_loss": _recon(recon_discriminator_loss, recon_discriminator_grad),
    "recon_generator_encoder_loss": _recon(recon_generator_encoder_loss, recon_generator_encoder_grad),
}


def random_populations(rng, names, allow_empty_neg=True):
    """Random score lists; the paired populations share one length."""
    n = int(rng.integers(1, 9))
    pops = []
    for name in names:
        if name in ("neg", "real_neg"):
            size = int(rng.integers(0 if allow_empty_neg else 1, 9))
        else:
            size = n
        pops.append(rng.uniform(-1.5, 2.5, size=size))
    return pops


def random_scheme(rng) -> TargetScheme:
    a = float(rng.uniform(0.5, 1.5))
    b = float(rng.uniform(-0.5, 0.4))
    return TargetScheme(a, b, float(rng.uniform(-0.5, 1.5)))


def gradient_errors(name, pops, scheme):
    """(numpy analytic vs FD, torch autograd vs FD) worst relative errors for one loss."""
    loss, grad, _ = LOSSES[name]
    fd = central_difference(lambda p: loss(p, scheme), pops)
    analytic = grad(pops, scheme)
    tensors = [torch.tensor(p, dtype=torch.float64, requires_grad=True) for p in pops]
    value = loss(tensors, scheme)
    value.backward()
    autograd = [t.grad.numpy() if t.grad is not None else np.zeros(len(t)) for t in tensors]
    err_np = max(relative_error(a, f) for a, f in zip(analytic, fd))
    err_torch = max(relative_error(a, f) for a, f in zip(autograd, fd))
    return err_np, err_torch
