import json
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from aabigan.errors import CheckpointError, CorruptCheckpointError, InvalidInputError, TrainingDivergedError
from aabigan.networks import build_model, tabular_preset
from aabigan.objectives import TargetScheme
from aabigan.trainer import (
    TrainConfig,
    TrainHistory,
    compute_objectives,
    latest_checkpoint,
    load_checkpoint,
    make_minibatch,
    make_optimizers,
    read_manifest,
    save_checkpoint,
    train,
    train_step,
)


def _data(n_plus=64, n_minus=0, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return SimpleNamespace(
        train_normal=rng.standard_normal((n_plus, dim)).astype(np.float32),
        train_anomaly=(rng.standard_normal((n_minus, dim)) + 4).astype(np.float32),
    )


def _config(**kw):
    base = dict(epochs=3, batch_size=16, seed=0, patience=None)
    base.update(kw)
    return TrainConfig(**base)


def _weights(model):
    return {k: {n: t.clone() for n, t in sd.items()} for k, sd in model.state_dicts().items()}


def _same_weights(a, b):
    return all(torch.equal(a[k][n], b[k][n]) for k in a for n in a[k])


def test_config_defaults_and_validation():
    c = TrainConfig()
    assert (c.lr_ge, c.lr_dd, c.batch_size) == (1e-4, 2.5e-5, 128)
    assert c.adam_betas == (0.5, 0.999)
    with pytest.raises(InvalidInputError):
        TrainConfig(adam_betas=(1.0, 0.9))
    with pytest.raises(InvalidInputError):
        TrainConfig(objective="wgan")
    assert TrainConfig.from_dict(_config(lr_dd=3e-4).to_dict()) == _config(lr_dd=3e-4)


def test_minibatch_anomaly_share():
    x_plus, x_minus, z = make_minibatch(_data(1000, 50), 100, np.random.default_rng(0), 4)
    assert len(x_plus) == 100 and len(x_minus) == 5 and z.shape == (100, 4)


def test_minibatch_empty_anomalies():
    _, x_minus, _ = make_minibatch(_data(100, 0), 10, np.random.default_rng(0), 4)
    assert x_minus.shape == (0, 2)


def test_minibatch_cap_and_precondition():
    _, x_minus, _ = make_minibatch(_data(10, 500), 10, np.random.default_rng(0), 4)
    assert len(x_minus) == 10
    with pytest.raises(InvalidInputError):
        make_minibatch(_data(10), 11, np.random.default_rng(0), 4)


def test_full_batch_covers_normals_exactly():
    data = _data(32)
    x_plus, _, _ = make_minibatch(data, 32, np.random.default_rng(3), 4)
    rows = {tuple(r) for r in x_plus.numpy().tolist()}
    assert rows == {tuple(r) for r in data.train_normal.tolist()}


def _run_trace(objective, scheme, pair):
    model = build_model(tabular_preset(2, (16, 8)), seed=5)
    cfg = _config(objective=objective, scheme=scheme, use_pair_discriminator=pair)
    _, history = train(model, _data(), cfg)
    return history.loss_trace(), _weights(model)


@pytest.mark.parametrize("pair", [False, True])
def test_reduction_to_bilsgan_is_bitwise(pair):
    scheme = TargetScheme(1.0, 0.0, 0.5)
    aa, w_aa = _run_trace("anomaly-aware", scheme, pair)
    bi, w_bi = _run_trace("bilsgan", scheme, pair)
    assert len(aa) == 12
    assert np.array_equal(aa, bi)
    assert _same_weights(w_aa, w_bi)


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        model = build_model(tabular_preset(2, (16, 8)), seed=1)
        _, h = train(model, _data(n_minus=6), _config())
        runs.append((h.loss_trace(), _weights(model)))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert _same_weights(runs[0][1], runs[1][1])


def test_small_discriminator_step_decreases_its_objective():
    model = build_model(tabular_preset(2, (16, 8)), seed=2)
    cfg = _config(lr_dd=1e-6, lr_ge=1e-6)
    batch = make_minibatch(_data(64, 8), 32, np.random.default_rng(0), model.latent_dim)
    opt_dd, _ = make_optimizers(model, cfg)
    before, _ = compute_objectives(model, *batch, cfg)
    before.backward(inputs=list(model.joint_discriminator.parameters()) + list(model.pair_discriminator.parameters()))
    opt_dd.step()
    after, _ = compute_objectives(model, *batch, cfg)
    assert after.item() < before.item()


def test_train_step_uses_pre_update_weights():
    model = build_model(tabular_preset(2, (16, 8)), seed=2)
    cfg = _config()
    batch = make_minibatch(_data(64, 8), 16, np.random.default_rng(0), model.latent_dim)
    j_dd, j_ge = (float(v.detach()) for v in compute_objectives(model, *batch, cfg))
    opt_dd, opt_ge = make_optimizers(model, cfg)
    assert train_step(model, batch, cfg, opt_dd, opt_ge) == (j_dd, j_ge)


def test_nan_aborts_with_diagnostic(tmp_path):
    data = _data()
    data.train_normal[3, 0] = np.nan
    model = build_model(tabular_preset(2, (16, 8)), seed=0)
    with pytest.raises(TrainingDivergedError, match="non-finite"):
        train(model, data, _config(), run_dir=tmp_path)


def test_empty_normal_set_rejected():
    with pytest.raises(InvalidInputError):
        train(build_model(tabular_preset(2), seed=0), _data(0), _config())


def test_history_finite_and_callback(tmp_path):
    seen = []

    def callback(epoch, model):
        seen.append(epoch)
        return {"probe": float(epoch) * 2}

    model = build_model(tabular_preset(2, (16, 8)), seed=0)
    _, history = train(model, _data(n_minus=4), _config(checkpoint_every=2), run_dir=tmp_path,
                       epoch_callback=callback)
    assert seen == [1, 2, 3]
    assert np.isfinite(history.loss_trace()).all()
    assert [r["probe"] for r in history.epochs] == [2.0, 4.0, 6.0]
    back = TrainHistory.read_jsonl(tmp_path / "history.jsonl")
    assert back == history
    assert (tmp_path / "ckpt-2").is_dir() and latest_checkpoint(tmp_path).name == "ckpt-3"
    manifest = read_manifest(tmp_path / "ckpt-3")
    assert manifest["final"] is True and "(D, D')" in manifest["update_order"]


@pytest.fixture
def checkpoint(tmp_path):
    model = build_model(tabular_preset(3, (16, 8)), seed=4)
    history = TrainHistory(steps=[{"step": 1, "epoch": 1, "j_dd": 0.5, "j_ge": 0.25}])
    path = save_checkpoint(model, history, tmp_path / "ckpt-1", config=_config(), step=1, epoch=1)
    return model, history, path


def test_checkpoint_round_trip_is_exact(checkpoint):
    model, history, path = checkpoint
    loaded, loaded_history = load_checkpoint(path, expected_preset=model.preset)
    probe = torch.randn(7, 3)
    model.eval()
    assert torch.equal(model.reconstruct(probe), loaded.reconstruct(probe))
    assert torch.equal(model.encode(probe), loaded.encode(probe))
    assert loaded_history == history


def test_checkpoint_preset_mismatch(checkpoint):
    _, _, path = checkpoint
    with pytest.raises(CheckpointError, match="preset"):
        load_checkpoint(path, expected_preset=tabular_preset(4))


def test_truncated_archive_is_corrupt(checkpoint):
    _, _, path = checkpoint
    manifest = json.loads((path / "manifest.json").read_text())
    archive = path / next(iter(manifest["files"].values()))["file"]
    archive.write_bytes(archive.read_bytes()[:50])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope")
    with pytest.raises(CheckpointError):
        latest_checkpoint(tmp_path)
