"""Alternating Adam training of (D, D') and (G, E), with checkpoints and history.

Per mini-batch both objectives are evaluated on the same forward pass and
their gradients are taken before either player moves; the (D, D') step is
applied first, then the (G, E) step.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch

from .errors import (
    CheckpointError,
    CorruptCheckpointError,
    InvalidInputError,
    TrainingDivergedError,
)
from .metrics import auroc
from .networks import NETWORK_NAMES, ArchitecturePreset, ModelBundle, build_model
from .objectives import (
    PairScoreBatch,
    ScoreBatch,
    TargetScheme,
    aa_discriminator_loss,
    aa_generator_encoder_loss,
    bilsgan_discriminator_loss,
    bilsgan_generator_encoder_loss,
    recon_discriminator_loss,
    recon_generator_encoder_loss,
)
from .scenario import round_half_away
from .scoring import CRITERIA, score

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "aabigan-checkpoint"
CHECKPOINT_VERSION = 1
UPDATE_ORDER = "J_GE and J_DD' from pre-update weights; (D, D') stepped before (G, E)"
OBJECTIVES = ("anomaly-aware", "bilsgan")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr_ge: float = 1e-4
    lr_dd: float = 2.5e-5
    adam_betas: tuple[float, float] = (0.5, 0.999)
    scheme: TargetScheme = field(default_factory=TargetScheme)
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 keeps only the final checkpoint
    use_pair_discriminator: bool = True
    objective: str = "anomaly-aware"
    patience: int | None = 10  # early stopping on validation AUROC; None disables
    min_epochs: int | None = None  # no early stop before this epoch; None means epochs // 4
    log_every: int = 1  # steps

    def __post_init__(self):
        if isinstance(self.scheme, dict):
            self.scheme = TargetScheme(**self.scheme)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be positive")
        if self.lr_ge <= 0 or self.lr_dd <= 0:
            raise InvalidInputError("learning rates must be positive")
        if len(self.adam_betas) != 2 or not all(0 <= b < 1 for b in self.adam_betas):
            raise InvalidInputError("adam betas must lie in [0, 1)")
        if self.objective not in OBJECTIVES:
            raise InvalidInputError(f"objective must be one of {OBJECTIVES}")
        if self.checkpoint_every < 0 or self.log_every < 1:
            raise InvalidInputError("checkpoint_every must be >= 0 and log_every >= 1")
        if self.patience is not None and self.patience < 1:
            raise InvalidInputError("patience must be positive or None")
        if self.min_epochs is None:
            self.min_epochs = self.epochs // 4
        if self.min_epochs < 0:
            raise InvalidInputError("min_epochs must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainHistory:
    steps: list[dict] = field(default_factory=list)  # step, epoch, j_dd, j_ge
    epochs: list[dict] = field(default_factory=list)  # epoch, val_auroc (+ per criterion)

    def records(self) -> Iterator[dict]:
        for r in self.steps:
            yield {"type": "step", **r}
        for r in self.epochs:
            yield {"type": "epoch", **r}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records():
                fh.write(json.dumps(r) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "TrainHistory":
        h = cls()
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                r = json.loads(line)
                kind = r.pop("type")
                (h.steps if kind == "step" else h.epochs).append(r)
        return h

    def loss_trace(self) -> np.ndarray:
        return np.array([[r["j_dd"], r["j_ge"]] for r in self.steps], dtype=np.float64)


# -- batching ---------------------------------------------------------------

def anomaly_batch_size(batch_size: int, n_plus: int, n_minus: int) -> int:
    if n_minus == 0:
        return 0
    return min(batch_size, round_half_away(batch_size * n_minus / n_plus))


def make_minibatch(data, batch_size: int, rng: np.random.Generator, latent_dim: int,
                   plus_indices: np.ndarray | None = None):
    """Draw one mini-batch ``(x_plus, x_minus, z)``.

    ``plus_indices`` selects the normal rows (the epoch iterator passes slices
    of a permutation); otherwise they are drawn without replacement. Anomalies
    are drawn with replacement in proportion |X-|/|X+|.
    """
    x_plus_all, x_minus_all = data.train_normal, data.train_anomaly
    n_plus, n_minus = len(x_plus_all), len(x_minus_all)
    if batch_size > n_plus:
        raise InvalidInputError(f"batch_size {batch_size} exceeds |X+| = {n_plus}")
    if plus_indices is None:
        plus_indices = rng.choice(n_plus, size=batch_size, replace=False)
    b = len(plus_indices)
    k = anomaly_batch_size(b, n_plus, n_minus)
    minus_indices = rng.integers(0, n_minus, size=k) if k else np.zeros(0, dtype=np.int64)
    z = rng.standard_normal((b, latent_dim)).astype(np.float32)
    return (
        torch.as_tensor(x_plus_all[plus_indices]),
        torch.as_tensor(x_minus_all[minus_indices]) if k else torch.as_tensor(x_minus_all[:0]),
        torch.from_numpy(z),
    )


def iterate_minibatches(data, batch_size: int, rng: np.random.Generator, latent_dim: int):
    """One epoch: X+ visited once in random order; a short final batch is kept."""
    n_plus = len(data.train_normal)
    if batch_size > n_plus:
        raise InvalidInputError(f"batch_size {batch_size} exceeds |X+| = {n_plus}")
    perm = rng.permutation(n_plus)
    for start in range(0, n_plus, batch_size):
        yield make_minibatch(data, batch_size, rng, latent_dim, perm[start:start + batch_size])


# -- objectives on a mini-batch ---------------------------------------------

def compute_objectives(model: ModelBundle, x_plus, x_minus, z, config: TrainConfig):
    """Return ``(J_DD', J_GE)`` for one mini-batch on the current weights."""
    n_plus = len(x_plus)
    x_real = torch.cat([x_plus, x_minus]) if len(x_minus) else x_plus
    z_real = model.encode(x_real)
    z_plus = z_real[:n_plus]
    if config.use_pair_discriminator:
        x_fake = model.generate(torch.cat([z, z_plus]))
        x_gen, x_hat = x_fake[: len(z)], x_fake[len(z):]
    else:
        x_gen = model.generate(z)
    real_scores = model.discriminate_joint(x_real, z_real)
    batch = ScoreBatch(
        pos_scores=real_scores[:n_plus],
        gen_scores=model.discriminate_joint(x_gen, z),
        neg_scores=real_scores[n_plus:],
    )
    scheme = config.scheme
    if config.objective == "bilsgan":
        j_dd = bilsgan_discriminator_loss(batch.pos_scores, batch.gen_scores)
        j_ge = bilsgan_generator_encoder_loss(batch.pos_scores, batch.gen_scores)
    else:
        j_dd = aa_discriminator_loss(batch, scheme)
        j_ge = aa_generator_encoder_loss(batch, scheme)
    if config.use_pair_discriminator:
        same = model.discriminate_pair(x_real, x_real)
        pairs = PairScoreBatch(
            real_pos_scores=same[:n_plus],
            recon_scores=model.discriminate_pair(x_plus, x_hat),
            real_neg_scores=same[n_plus:],
        )
        j_dd = j_dd + recon_discriminator_loss(pairs, scheme)
        j_ge = j_ge + recon_generator_encoder_loss(pairs, scheme)
    return j_dd, j_ge


def _dd_params(model: ModelBundle, config: TrainConfig):
    params = list(model.joint_discriminator.parameters())
    if config.use_pair_discriminator:
        params += list(model.pair_discriminator.parameters())
    return params


def make_optimizers(model: ModelBundle, config: TrainConfig):
    opt_dd = torch.optim.Adam(_dd_params(model, config), lr=config.lr_dd, betas=config.adam_betas)
    opt_ge = torch.optim.Adam(model.ge_parameters(), lr=config.lr_ge, betas=config.adam_betas)
    return opt_dd, opt_ge


def train_step(model: ModelBundle, batch, config: TrainConfig, opt_dd, opt_ge) -> tuple[float, float]:
    """One iteration of the alternating update; returns the pre-update objective values."""
    x_plus, x_minus, z = batch
    j_dd, j_ge = compute_objectives(model, x_plus, x_minus, z, config)
    dd_params = _dd_params(model, config)
    ge_params = model.ge_parameters()
    g_dd = torch.autograd.grad(j_dd, dd_params, retain_graph=True)
    g_ge = torch.autograd.grad(j_ge, ge_params)
    for p, g in zip(dd_params, g_dd):
        p.grad = g
    for p, g in zip(ge_params, g_ge):
        p.grad = g
    opt_dd.step()
    opt_ge.step()
    return float(j_dd.detach()), float(j_ge.detach())


def validation_auroc(model: ModelBundle, val) -> dict[str, float]:
    out = {name: auroc(score(model, val.x, name).scores, val.y) for name in CRITERIA}
    out["best"] = max(out.values())
    return out


def _has_usable_val(data) -> bool:
    val = getattr(data, "val", None)
    return val is not None and len(val) > 0 and len(np.unique(val.y)) == 2


def train(model: ModelBundle, data, config: TrainConfig, run_dir=None,
          epoch_callback: Callable[[int, ModelBundle], dict] | None = None) -> tuple[ModelBundle, TrainHistory]:
    """Train ``model`` in place on ``data`` (anything with ``train_normal``/``train_anomaly``).

    With a usable validation split and ``config.patience`` set, training stops
    once validation AUROC has not improved for ``patience`` epochs (never before
    ``min_epochs``) and the best epoch's weights are restored. Checkpoints and ``history.jsonl`` go to
    ``run_dir`` when given. ``epoch_callback(epoch, model)`` may return extra
    values (e.g. an FID) to store in the epoch record.
    """
    if len(data.train_normal) == 0:
        raise InvalidInputError("X+ is empty")
    run_dir = Path(run_dir) if run_dir is not None else None
    rng = np.random.default_rng(config.seed)
    opt_dd, opt_ge = make_optimizers(model, config)
    history = TrainHistory()
    use_val = _has_usable_val(data)
    best_auroc, best_state, best_epoch, stale = -math.inf, None, 0, 0
    last_ckpt: str | None = None
    step = 0
    epoch = 0
    model.train()
    for epoch in range(1, config.epochs + 1):
        for batch in iterate_minibatches(data, config.batch_size, rng, model.latent_dim):
            j_dd, j_ge = train_step(model, batch, config, opt_dd, opt_ge)
            step += 1
            if not (math.isfinite(j_dd) and math.isfinite(j_ge)):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step} (J_DD'={j_dd}, J_GE={j_ge}); "
                    f"last good checkpoint: {last_ckpt}",
                    last_ckpt,
                )
            if step % config.log_every == 0:
                history.steps.append({"step": step, "epoch": epoch, "j_dd": j_dd, "j_ge": j_ge})
        record = {"epoch": epoch}
        if use_val:
            aurocs = validation_auroc(model, data.val)
            record["val_auroc"] = aurocs["best"]
            record.update({f"val_{k}": v for k, v in aurocs.items() if k != "best"})
        if epoch_callback is not None:
            record.update(epoch_callback(epoch, model) or {})
        model.train()
        if len(record) > 1:
            history.epochs.append(record)
        if use_val:
            if aurocs["best"] > best_auroc:
                best_auroc, best_epoch, stale = aurocs["best"], epoch, 0
                best_state = copy.deepcopy(model.state_dicts())
            else:
                stale += 1
        if run_dir is not None:
            history.write_jsonl(run_dir / "history.jsonl")
            if config.checkpoint_every and epoch % config.checkpoint_every == 0:
                last_ckpt = str(save_checkpoint(model, history, run_dir / f"ckpt-{epoch}",
                                                config=config, step=step, epoch=epoch))
        if use_val and config.patience is not None and stale >= config.patience and epoch >= config.min_epochs:
            logger.info("early stop at epoch %d (best %d, val AUROC %.4f)", epoch, best_epoch, best_auroc)
            break
    if best_state is not None and config.patience is not None:
        model.load_state_dicts(best_state)
    model.eval()
    if run_dir is not None:
        history.write_jsonl(run_dir / "history.jsonl")
        save_checkpoint(model, history, run_dir / f"ckpt-{epoch}", config=config, step=step, epoch=epoch,
                        extra={"final": True, "selected_epoch": best_epoch if best_state is not None else epoch})
    return model, history


# -- checkpoints ------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(model: ModelBundle, history: TrainHistory, path, config: TrainConfig | None = None,
                    step: int = 0, epoch: int = 0, extra: dict | None = None) -> Path:
    """Write one ``.npz`` weight archive per network plus ``manifest.json`` and ``history.jsonl``.

    The directory is assembled under a temporary name and renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        files = {}
        for name, state in model.state_dicts().items():
            fname = f"{name}.npz"
            np.savez(tmp / fname, **{k: v.detach().cpu().numpy() for k, v in state.items()})
            files[name] = {"file": fname, "sha256": _sha256(tmp / fname)}
        history.write_jsonl(tmp / "history.jsonl")
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "preset": model.preset.to_dict(),
            "latent_dim": model.latent_dim,
            "scheme": (config.scheme if config else TargetScheme()).as_dict(),
            "step": step,
            "epoch": epoch,
            "update_order": UPDATE_ORDER,
            "config": config.to_dict() if config else None,
            "files": files,
            "history_sha256": _sha256(tmp / "history.jsonl"),
            **(extra or {}),
        }
        with open(tmp / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise CheckpointError(f"no checkpoint manifest at {mpath}")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(f"unreadable manifest {mpath}: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpointError(f"{mpath} is not an {CHECKPOINT_FORMAT} manifest")
    return manifest


def load_checkpoint(path, expected_preset: ArchitecturePreset | None = None) -> tuple[ModelBundle, TrainHistory]:
    path = Path(path)
    manifest = read_manifest(path)
    preset = ArchitecturePreset.from_dict(manifest["preset"])
    if expected_preset is not None and preset != expected_preset:
        raise CheckpointError(f"checkpoint preset {preset} does not match expected {expected_preset}")
    states = {}
    for name in NETWORK_NAMES:
        entry = manifest["files"].get(name)
        if entry is None:
            raise CorruptCheckpointError(f"manifest lists no archive for {name}")
        fpath = path / entry["file"]
        if not fpath.exists():
            raise CorruptCheckpointError(f"missing archive {fpath}")
        if _sha256(fpath) != entry["sha256"]:
            raise CorruptCheckpointError(f"archive {fpath} does not match its manifest checksum")
        with np.load(fpath) as archive:
            states[name] = {k: torch.from_numpy(archive[k].copy()) for k in archive.files}
    hpath = path / "history.jsonl"
    if hpath.exists() and _sha256(hpath) != manifest.get("history_sha256"):
        raise CorruptCheckpointError(f"{hpath} does not match its manifest checksum")
    model = build_model(preset)
    try:
        model.load_state_dicts(states)
    except (RuntimeError, KeyError) as exc:
        raise CorruptCheckpointError(f"weights in {path} do not fit preset {preset}: {exc}") from exc
    model.eval()
    history = TrainHistory.read_jsonl(hpath) if hpath.exists() else TrainHistory()
    return model, history


def latest_checkpoint(run_dir) -> Path:
    run_dir = Path(run_dir)
    ckpts = []
    for p in run_dir.glob("ckpt-*"):
        suffix = p.name[len("ckpt-"):]
        if p.is_dir() and suffix.isdigit():
            ckpts.append((int(suffix), p))
    if not ckpts:
        raise CheckpointError(f"no checkpoint in {run_dir}")
    return max(ckpts)[1]
