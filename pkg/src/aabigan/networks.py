"""Encoder, generator and the two discriminators, for images and tabular data.

Images use channel-first tensors of shape ``(N, 3, 32, 32)`` scaled to
[-1, 1]. Tabular rows are ``(N, n_features)`` standardized floats.

The joint discriminator embeds ``x`` and ``z`` in separate branches and scores
their concatenation; the pair discriminator stacks ``x`` and ``x_hat`` along
the channel/feature axis. Both return one raw (unsquashed) score per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import InvalidInputError

IMAGE_SHAPE = (3, 32, 32)
IMAGE_LATENT_DIM = 100
TABULAR_HIDDEN = (256, 64, 16)
DCGAN_FILTERS = (64, 128, 256)

NETWORK_NAMES = ("encoder", "generator", "joint_discriminator", "pair_discriminator")


@dataclass(frozen=True)
class ArchitecturePreset:
    kind: str  # "image-dcgan" or "tabular-mlp"
    input_shape: tuple[int, ...]
    latent_dim: int
    hidden_units: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "image-dcgan":
            if tuple(self.input_shape) != IMAGE_SHAPE:
                raise InvalidInputError(f"image-dcgan requires input shape {IMAGE_SHAPE}")
        elif self.kind == "tabular-mlp":
            if len(self.input_shape) != 1 or self.input_shape[0] < 1:
                raise InvalidInputError("tabular-mlp requires a 1-D input shape")
            if not self.hidden_units or any(h < 1 for h in self.hidden_units):
                raise InvalidInputError("hidden_units must be positive integers")
            if self.hidden_units[-1] != self.latent_dim:
                raise InvalidInputError("the last hidden layer of the MLP is the latent code")
        else:
            raise InvalidInputError(f"unknown architecture kind {self.kind!r}")
        if self.latent_dim < 1:
            raise InvalidInputError("latent_dim must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "latent_dim": self.latent_dim,
            "hidden_units": list(self.hidden_units),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitecturePreset":
        return cls(
            kind=d["kind"],
            input_shape=tuple(d["input_shape"]),
            latent_dim=int(d["latent_dim"]),
            hidden_units=tuple(d.get("hidden_units", ())),
        )


def image_preset(latent_dim: int = IMAGE_LATENT_DIM) -> ArchitecturePreset:
    return ArchitecturePreset("image-dcgan", IMAGE_SHAPE, latent_dim)


def tabular_preset(n_features: int, hidden_units: Sequence[int] = TABULAR_HIDDEN) -> ArchitecturePreset:
    hidden_units = tuple(int(h) for h in hidden_units)
    return ArchitecturePreset("tabular-mlp", (int(n_features),), hidden_units[-1], hidden_units)


@dataclass(frozen=True)
class LatentPrior:
    """Standard normal prior over latent codes."""

    dim: int

    def sample(self, n: int, generator: torch.Generator | None = None) -> torch.Tensor:
        if n < 1:
            raise InvalidInputError("need at least one prior sample")
        return torch.randn(n, self.dim, generator=generator)


# -- building blocks --------------------------------------------------------

def _mlp(sizes: Sequence[int], final_activation: bool = False) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(nn.Linear(n_in, n_out))
        if i < len(sizes) - 2 or final_activation:
            layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


def _conv_body(in_channels: int, batch_norm: bool) -> nn.Sequential:
    # 32x32 -> 16 -> 8 -> 4
    layers: list[nn.Module] = []
    channels = (in_channels,) + DCGAN_FILTERS
    for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(nn.Conv2d(c_in, c_out, 4, 2, 1, bias=not batch_norm or i == 0))
        if batch_norm and i > 0:
            layers.append(nn.BatchNorm2d(c_out))
        layers.append(nn.LeakyReLU(0.2))
    layers.append(nn.Flatten())
    return nn.Sequential(*layers)


_CONV_FEATURES = DCGAN_FILTERS[-1] * 4 * 4


class ImageEncoder(nn.Module):
    def __init__(self, latent_dim: int):
        super().__init__()
        self.body = _conv_body(3, batch_norm=True)
        self.head = nn.Linear(_CONV_FEATURES, latent_dim)

    def forward(self, x):
        return self.head(self.body(x))


class ImageGenerator(nn.Module):
    def __init__(self, latent_dim: int):
        super().__init__()
        f1, f2, f3 = DCGAN_FILTERS
        self.project = nn.Sequential(
            nn.Linear(latent_dim, f3 * 4 * 4, bias=False),
            nn.Unflatten(1, (f3, 4, 4)),
            nn.BatchNorm2d(f3),
            nn.ReLU(True),
        )
        self.net = nn.Sequential(
            nn.ConvTranspose2d(f3, f2, 4, 2, 1, bias=False),
            nn.BatchNorm2d(f2),
            nn.ReLU(True),
            nn.ConvTranspose2d(f2, f1, 4, 2, 1, bias=False),
            nn.BatchNorm2d(f1),
            nn.ReLU(True),
            nn.ConvTranspose2d(f1, 3, 4, 2, 1),
            nn.Tanh(),
        )

    def forward(self, z):
        return self.net(self.project(z))


class ImageJointDiscriminator(nn.Module):
    def __init__(self, latent_dim: int):
        super().__init__()
        self.x_branch = _conv_body(3, batch_norm=False)
        self.z_branch = nn.Sequential(nn.Linear(latent_dim, 512), nn.LeakyReLU(0.2))
        self.head = nn.Sequential(
            nn.Linear(_CONV_FEATURES + 512, 1024), nn.LeakyReLU(0.2), nn.Linear(1024, 1)
        )

    def forward(self, x, z):
        h = torch.cat([self.x_branch(x), self.z_branch(z)], dim=1)
        return self.head(h).squeeze(1)


class ImagePairDiscriminator(nn.Module):
    def __init__(self):
        super().__init__()
        self.body = _conv_body(6, batch_norm=False)
        self.head = nn.Linear(_CONV_FEATURES, 1)

    def forward(self, x, x_hat):
        return self.head(self.body(torch.cat([x, x_hat], dim=1))).squeeze(1)


class TabularEncoder(nn.Module):
    def __init__(self, n_features: int, hidden: Sequence[int]):
        super().__init__()
        self.net = _mlp([n_features, *hidden])

    def forward(self, x):
        return self.net(x)


class TabularGenerator(nn.Module):
    def __init__(self, n_features: int, hidden: Sequence[int]):
        super().__init__()
        # mirror of the encoder; identity output for standardized features
        self.net = _mlp([*reversed(hidden), n_features])

    def forward(self, z):
        return self.net(z)


class TabularJointDiscriminator(nn.Module):
    def __init__(self, n_features: int, hidden: Sequence[int]):
        super().__init__()
        x_sizes = [n_features, *hidden[:-1]] if len(hidden) > 1 else [n_features, hidden[0]]
        self.x_branch = _mlp(x_sizes, final_activation=True)
        z_width = x_sizes[-1]
        self.z_branch = _mlp([hidden[-1], z_width], final_activation=True)
        self.head = _mlp([x_sizes[-1] + z_width, z_width, 1])

    def forward(self, x, z):
        h = torch.cat([self.x_branch(x), self.z_branch(z)], dim=1)
        return self.head(h).squeeze(1)


class TabularPairDiscriminator(nn.Module):
    def __init__(self, n_features: int, hidden: Sequence[int]):
        super().__init__()
        sizes = [2 * n_features, *hidden[:-1]] if len(hidden) > 1 else [2 * n_features, hidden[0]]
        self.net = _mlp([*sizes, 1])

    def forward(self, x, x_hat):
        return self.net(torch.cat([x, x_hat], dim=1)).squeeze(1)


def _dcgan_init(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


# -- bundle -----------------------------------------------------------------

@dataclass
class ModelBundle:
    """E, G, D and D' together with the latent prior and architecture preset."""

    preset: ArchitecturePreset
    encoder: nn.Module
    generator: nn.Module
    joint_discriminator: nn.Module
    pair_discriminator: nn.Module
    prior: LatentPrior = field(init=False)

    def __post_init__(self):
        self.prior = LatentPrior(self.preset.latent_dim)

    @property
    def latent_dim(self) -> int:
        return self.preset.latent_dim

    def networks(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in NETWORK_NAMES}

    def ge_parameters(self) -> list[nn.Parameter]:
        return [*self.encoder.parameters(), *self.generator.parameters()]

    def dd_parameters(self) -> list[nn.Parameter]:
        return [*self.joint_discriminator.parameters(), *self.pair_discriminator.parameters()]

    def train(self, mode: bool = True) -> "ModelBundle":
        for net in self.networks().values():
            net.train(mode)
        return self

    def eval(self) -> "ModelBundle":
        return self.train(False)

    @property
    def training(self) -> bool:
        return self.encoder.training

    def _check_x(self, x) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=torch.float32)
        if x.dim() < 2 or tuple(x.shape[1:]) != tuple(self.preset.input_shape):
            raise InvalidInputError(
                f"expected data batch of shape (N, {', '.join(map(str, self.preset.input_shape))}), "
                f"got {tuple(x.shape)}"
            )
        return x

    def _check_z(self, z) -> torch.Tensor:
        z = torch.as_tensor(z, dtype=torch.float32)
        if z.dim() != 2 or z.shape[1] != self.latent_dim:
            raise InvalidInputError(f"expected latent batch of shape (N, {self.latent_dim}), got {tuple(z.shape)}")
        return z

    def encode(self, x) -> torch.Tensor:
        return self.encoder(self._check_x(x))

    def generate(self, z) -> torch.Tensor:
        return self.generator(self._check_z(z))

    def reconstruct(self, x) -> torch.Tensor:
        return self.generate(self.encode(x))

    def discriminate_joint(self, x, z) -> torch.Tensor:
        x, z = self._check_x(x), self._check_z(z)
        if x.shape[0] != z.shape[0]:
            raise InvalidInputError("x and z batches must have equal length")
        return self.joint_discriminator(x, z)

    def discriminate_pair(self, x, x_hat) -> torch.Tensor:
        x, x_hat = self._check_x(x), self._check_x(x_hat)
        if x.shape[0] != x_hat.shape[0]:
            raise InvalidInputError("x and x_hat batches must have equal length")
        return self.pair_discriminator(x, x_hat)

    def sample_prior(self, n: int, seed: int | None = None, generator: torch.Generator | None = None) -> torch.Tensor:
        if generator is None and seed is not None:
            generator = torch.Generator().manual_seed(seed)
        return self.prior.sample(n, generator)

    def state_dicts(self) -> dict[str, dict[str, torch.Tensor]]:
        return {name: net.state_dict() for name, net in self.networks().items()}

    def load_state_dicts(self, states: dict[str, dict[str, torch.Tensor]]) -> None:
        for name, net in self.networks().items():
            net.load_state_dict(states[name])


def build_model(preset: ArchitecturePreset, seed: int = 0) -> ModelBundle:
    """Instantiate all four networks for ``preset`` with seeded initialization."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        if preset.kind == "image-dcgan":
            nets = (
                ImageEncoder(preset.latent_dim),
                ImageGenerator(preset.latent_dim),
                ImageJointDiscriminator(preset.latent_dim),
                ImagePairDiscriminator(),
            )
            for net in nets:
                net.apply(_dcgan_init)
        else:
            d, hidden = preset.input_shape[0], preset.hidden_units
            nets = (
                TabularEncoder(d, hidden),
                TabularGenerator(d, hidden),
                TabularJointDiscriminator(d, hidden),
                TabularPairDiscriminator(d, hidden),
            )
    return ModelBundle(preset, *nets)


def to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        return t.detach().cpu().numpy()
    return np.asarray(t)
