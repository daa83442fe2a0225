"""Command line entry point: train, evaluate, sweep, verify, report.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import os
import shutil
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import (
    CheckpointError,
    DatasetError,
    InsufficientDataError,
    InvalidInputError,
    InvalidSpecError,
    ResourceLimitError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .metrics import GROUP_KEYS, ExperimentResult, aggregate, auroc
from .networks import build_model, image_preset, tabular_preset
from .objectives import TargetScheme
from .scenario import (
    DATA_ROOT_ENV,
    IMAGE_DATASETS,
    ScenarioData,
    ScenarioSpec,
    build_scenario,
    class_groups,
    load_dataset,
)
from .scoring import CRITERIA, read_score_csv, score, select_criterion, write_score_csv
from .trainer import TrainConfig, latest_checkpoint, load_checkpoint, train
from . import oracle

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

CONFIG_FILE = "effective_config.yaml"
SCENARIO_FILE = "scenario.json"
RESULTS_FILE = "results.json"
LOCK_FILE = ".lock"

IMAGE_EPOCHS = 20
TABULAR_EPOCHS = 200

DEFAULTS = {
    "dataset": {"name": "ring", "path": None, "root": None, "label_column": "label"},
    "scenario": {
        "normal_classes": [0],
        "collected_anomaly_classes": [1],
        "gamma_l": 0.05,
        "gamma_p": 0.0,
        "seed": 0,
        "val_fraction": 0.2,
    },
    "model": {"hidden_units": [256, 64, 16], "latent_dim": 100},
    "train": {
        "epochs": None,  # 20 for images, 200 otherwise
        "batch_size": 128,
        "lr_ge": 1e-4,
        "lr_dd": 2.5e-5,
        "adam_betas": [0.5, 0.999],
        "scheme": {"a": 1.0, "b": 0.0, "c": 0.75},
        "seed": 0,
        "checkpoint_every": 0,
        "use_pair_discriminator": True,
        "objective": "anomaly-aware",
        "patience": 10,
        "min_epochs": None,  # epochs // 4
        "log_every": 1,
    },
    "output_dir": "runs/run",
    "plot": True,
}

SWEEP_AXES = ("normal_class", "anomaly_class", "class_pair", "gamma_l", "gamma_p", "k_l", "c", "seed")


class UsageError(Exception):
    pass


class ArgParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- configuration ------------------------------------------------------------

def _check_type(path: str, default, value):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"{path}: expected true/false, got {value!r}")
    elif isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{path}: expected a number, got {value!r}")
        if isinstance(default, int) and not float(value).is_integer():
            raise UsageError(f"{path}: expected an integer, got {value!r}")
        return type(default)(value)
    elif isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise UsageError(f"{path}: expected a list, got {value!r}")
        return list(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise UsageError(f"{path}: expected a string, got {value!r}")
    return value


def merge_config(base: dict, update: dict, path: str = "") -> dict:
    """Recursively overlay ``update`` on ``base``; unknown keys are usage errors."""
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        full = f"{path}{key}"
        if key not in base:
            raise UsageError(f"{full}: unknown configuration key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"{full}: expected a mapping, got {value!r}")
            out[key] = merge_config(base[key], value, full + ".")
        else:
            out[key] = _check_type(full, base[key], value)
    return out


def set_dotted(cfg: dict, dotted: str, value) -> dict:
    update: dict = {}
    cursor = update
    parts = dotted.split(".")
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[parts[-1]] = value
    return merge_config(cfg, update)


def parse_assignment(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise UsageError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise UsageError(f"{key}: cannot parse value {raw!r}: {exc}") from None


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    return data


@dataclass
class RunConfig:
    dataset: dict
    scenario: ScenarioSpec
    model: dict
    train: TrainConfig
    output_dir: str
    plot: bool

    @property
    def is_image(self) -> bool:
        return self.dataset["name"].lower() in IMAGE_DATASETS

    def to_dict(self) -> dict:
        scen = self.scenario.to_dict()
        scen.pop("k_l", None)
        return {
            "dataset": dict(self.dataset),
            "scenario": {k: (list(v) if isinstance(v, tuple) else v) for k, v in scen.items()},
            "model": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.model.items()},
            "train": self.train.to_dict(),
            "output_dir": self.output_dir,
            "plot": self.plot,
        }


def resolve_config(raw: dict) -> RunConfig:
    """Validate a merged config dict and fill in data-dependent defaults."""
    raw = merge_config(DEFAULTS, raw)
    is_image = str(raw["dataset"]["name"]).lower() in IMAGE_DATASETS
    tr = dict(raw["train"])
    if tr["epochs"] is None:
        tr["epochs"] = IMAGE_EPOCHS if is_image else TABULAR_EPOCHS
    try:
        scenario = ScenarioSpec(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in raw["scenario"].items()})
    except (InvalidSpecError, InvalidInputError, TypeError) as exc:
        raise UsageError(f"scenario: {exc}") from None
    try:
        tr["scheme"] = TargetScheme(**tr["scheme"])
    except (InvalidInputError, TypeError) as exc:
        raise UsageError(f"train.scheme: {exc}") from None
    try:
        train_cfg = TrainConfig(**tr)
    except (InvalidInputError, TypeError) as exc:
        raise UsageError(f"train: {exc}") from None
    hidden = raw["model"]["hidden_units"]
    if not hidden or any((not isinstance(h, int)) or h < 1 for h in hidden):
        raise UsageError(f"model.hidden_units: expected positive integers, got {hidden!r}")
    if raw["model"]["latent_dim"] < 1:
        raise UsageError("model.latent_dim: must be positive")
    return RunConfig(raw["dataset"], scenario, raw["model"], train_cfg, str(raw["output_dir"]), bool(raw["plot"]))


def config_from_args(args) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        raw = merge_config(DEFAULTS, load_config_file(args.config))
    else:
        raw = copy.deepcopy(DEFAULTS)
    shortcuts = {
        "dataset": "dataset.name",
        "data_path": "dataset.path",
        "out": "output_dir",
        "epochs": "train.epochs",
        "gamma_l": "scenario.gamma_l",
        "gamma_p": "scenario.gamma_p",
        "c": "train.scheme.c",
        "normal_classes": "scenario.normal_classes",
        "anomaly_classes": "scenario.collected_anomaly_classes",
    }
    for attr, dotted in shortcuts.items():
        value = getattr(args, attr, None)
        if value is not None:
            raw = set_dotted(raw, dotted, value)
    if getattr(args, "seed", None) is not None:
        raw = set_dotted(raw, "scenario.seed", args.seed)
        raw = set_dotted(raw, "train.seed", args.seed)
    for assignment in getattr(args, "set", None) or []:
        raw = set_dotted(raw, *parse_assignment(assignment))
    return resolve_config(raw)


def config_to_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def read_run_config(run_dir) -> RunConfig:
    path = Path(run_dir) / CONFIG_FILE
    if not path.exists():
        raise CheckpointError(f"{run_dir} is not a run directory (no {CONFIG_FILE})")
    return resolve_config(load_config_file(path))


# -- run plumbing --------------------------------------------------------------

class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file holding the owner's pid."""

    def __init__(self, run_dir):
        self.path = Path(run_dir) / LOCK_FILE

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def acquire(self) -> bool:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                return False
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            return True
        return False

    def release(self) -> None:
        self.path.unlink(missing_ok=True)

    def __enter__(self):
        if not self.acquire():
            raise RuntimeError(f"{self.path.parent} is locked by another process")
        return self

    def __exit__(self, *exc):
        self.release()


def prepare_data(cfg: RunConfig) -> ScenarioData:
    ds = load_dataset(cfg.dataset["name"], cfg.dataset.get("root"), cfg.dataset.get("path"),
                      cfg.dataset.get("label_column", "label"))
    return build_scenario(ds, cfg.scenario)


def make_preset(cfg: RunConfig, data: ScenarioData):
    if cfg.is_image:
        return image_preset(cfg.model["latent_dim"])
    return tabular_preset(data.train_normal.shape[1], tuple(cfg.model["hidden_units"]))


def cmd_train(cfg: RunConfig, force: bool = False) -> Path:
    run_dir = Path(cfg.output_dir)
    if run_dir.exists() and any(run_dir.glob("ckpt-*")) and not force:
        raise UsageError(f"{run_dir} already holds checkpoints; pass --force to overwrite")
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        for old in run_dir.glob("ckpt-*"):
            shutil.rmtree(old)
        for stale in (RESULTS_FILE, "history.jsonl"):
            (run_dir / stale).unlink(missing_ok=True)
        (run_dir / CONFIG_FILE).write_text(config_to_yaml(cfg))
        data = prepare_data(cfg)
        with open(run_dir / SCENARIO_FILE, "w") as fh:
            json.dump(data.metadata, fh)
        model = build_model(make_preset(cfg, data), seed=cfg.train.seed)
        start = time.perf_counter()
        train(model, data, cfg.train, run_dir)
        (run_dir / "train_time.json").write_text(json.dumps({"seconds": time.perf_counter() - start}))
    return run_dir


def evaluate_model(model, data: ScenarioData, split: str = "test") -> dict:
    """Choose the criterion on validation data, then score ``split`` with every criterion."""
    target = data.test if split == "test" else data.val
    chosen, val_aurocs = select_criterion(model, data.val.x, data.val.y)
    vectors = {name: score(model, target.x, name, sample_ids=target.ids) for name in CRITERIA}
    split_aurocs = {name: auroc(v.scores, target.y) for name, v in vectors.items()}
    return {
        "criterion": chosen,
        "auroc": split_aurocs[chosen],
        "val_auroc": val_aurocs,
        "split_auroc": split_aurocs,
        "scores": vectors,
        "labels": target.y,
    }


def cmd_evaluate(run_dir, split: str = "test") -> ExperimentResult:
    run_dir = Path(run_dir)
    if split not in ("test", "val"):
        raise UsageError(f"split must be 'test' or 'val', got {split!r}")
    cfg = read_run_config(run_dir)
    ckpt = latest_checkpoint(run_dir)
    data = prepare_data(cfg)
    meta_path = run_dir / SCENARIO_FILE
    if meta_path.exists():
        saved = json.loads(meta_path.read_text())
        if saved.get("test_ids") != data.metadata["test_ids"]:
            raise RuntimeError(f"rebuilt scenario differs from {meta_path}; dataset changed?")
    model, _ = load_checkpoint(ckpt, expected_preset=make_preset(cfg, data))
    start = time.perf_counter()
    ev = evaluate_model(model, data, split)
    write_score_csv(run_dir / "scores.csv", ev["scores"][ev["criterion"]], ev["labels"])
    for name, vec in ev["scores"].items():
        write_score_csv(run_dir / f"scores_{name}.csv", vec, ev["labels"])
    train_time = run_dir / "train_time.json"
    runtime = json.loads(train_time.read_text())["seconds"] if train_time.exists() else 0.0
    result = ExperimentResult(
        scenario=cfg.scenario,
        auroc=ev["auroc"],
        criterion=ev["criterion"],
        runtime_seconds=runtime + time.perf_counter() - start,
        seed=cfg.train.seed,
        dataset=cfg.dataset["name"],
        c=cfg.train.scheme.c,
        extra={"split": split, "checkpoint": ckpt.name, "val_auroc": ev["val_auroc"],
               "split_auroc": ev["split_auroc"]},
    )
    with open(run_dir / RESULTS_FILE, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    return result


# -- sweep ---------------------------------------------------------------------

def parse_axes(specs) -> dict[str, list]:
    axes: dict[str, list] = {}
    for spec in specs or []:
        if "=" not in spec:
            raise UsageError(f"--axis expects name=v1,v2,..., got {spec!r}")
        name, values = spec.split("=", 1)
        name = name.strip()
        if name not in SWEEP_AXES:
            raise UsageError(f"--axis {name}: not a sweep axis (choose from {', '.join(SWEEP_AXES)})")
        if name in axes:
            raise UsageError(f"--axis {name} given twice")
        if name == "class_pair":
            if values.strip() != "all":
                raise UsageError("--axis class_pair only accepts 'all'")
            axes[name] = ["all"]
            continue
        parsed = [yaml.safe_load(v) for v in values.split(",") if v.strip()]
        if not parsed:
            raise UsageError(f"--axis {name}: no values")
        axes[name] = parsed
    if "class_pair" in axes and ({"normal_class", "anomaly_class"} & axes.keys()):
        raise UsageError("class_pair cannot be combined with normal_class/anomaly_class")
    return axes


def dataset_classes(cfg: RunConfig) -> list:
    name = cfg.dataset["name"].lower()
    if name in IMAGE_DATASETS:
        return list(range(10))
    if name == "ring":
        return [0, 1, 2, 3, 4]
    return load_dataset(cfg.dataset["name"], cfg.dataset.get("root"), cfg.dataset.get("path"),
                        cfg.dataset.get("label_column", "label")).classes


def expand_cells(base: RunConfig, axes: dict[str, list], out_dir: Path) -> list[tuple[str, RunConfig | None, str]]:
    """Cross product of axis values; returns (cell name, config or None, error)."""
    classes = None
    grid = dict(axes)
    if "class_pair" in grid:
        classes = dataset_classes(base)
        grid.pop("class_pair")
        pairs = list(itertools.permutations(classes, 2))
        grid = {"pair": pairs, **grid}
    names = list(grid)
    cells = []
    for values in itertools.product(*(grid[n] for n in names)):
        assignment = dict(zip(names, values))
        raw = base.to_dict()
        label_parts = []
        for n, v in assignment.items():
            if n == "pair":
                raw["scenario"]["normal_classes"] = [v[0]]
                raw["scenario"]["collected_anomaly_classes"] = [v[1]]
                label_parts += [f"normal_class={v[0]}", f"anomaly_class={v[1]}"]
                continue
            label_parts.append(f"{n}={v}")
            if n == "normal_class":
                raw["scenario"]["normal_classes"] = [v]
            elif n == "anomaly_class":
                raw["scenario"]["collected_anomaly_classes"] = [v]
            elif n in ("gamma_l", "gamma_p"):
                raw["scenario"][n] = v
            elif n == "c":
                raw["train"]["scheme"]["c"] = v
            elif n == "seed":
                raw["scenario"]["seed"] = v
                raw["train"]["seed"] = v
        if "normal_class" in assignment and "anomaly_class" in assignment \
                and assignment["normal_class"] == assignment["anomaly_class"]:
            continue
        if "k_l" in assignment:
            if classes is None:
                classes = dataset_classes(base)
            normal = raw["scenario"]["normal_classes"]
            anomalies = [c for c in classes if c not in normal]
            k = assignment["k_l"]
            if not isinstance(k, int) or not 1 <= k <= len(anomalies):
                name = "__".join(label_parts) or "base"
                cells.append((name, None, f"k_l={k} outside 1..{len(anomalies)}"))
                continue
            raw["scenario"]["collected_anomaly_classes"] = anomalies[:k]
        name = "__".join(label_parts) or "base"
        raw["output_dir"] = str(out_dir / "cells" / name)
        try:
            cells.append((name, resolve_config(raw), ""))
        except UsageError as exc:
            cells.append((name, None, str(exc)))
    return cells


def _sweep_group_keys(axes: dict) -> list[str]:
    keys = ["dataset"]
    for a in axes:
        if a in ("gamma_l", "gamma_p", "k_l", "c"):
            keys.append(a)
    return keys


def cmd_sweep(base: RunConfig, axes: dict[str, list], out_dir, resume: bool = True, dry_run: bool = False) -> dict:
    out_dir = Path(out_dir)
    cells = expand_cells(base, axes, out_dir)
    if dry_run:
        return {"cells": [c[0] for c in cells], "n_cells": len(cells)}
    out_dir.mkdir(parents=True, exist_ok=True)
    status = {}
    results: list[ExperimentResult] = []
    cell_group: dict[str, tuple] = {}
    group_keys = _sweep_group_keys(axes)
    for name, cfg, error in cells:
        cell_dir = out_dir / "cells" / name
        if cfg is None:
            status[name] = "invalid"
            cell_dir.mkdir(parents=True, exist_ok=True)
            (cell_dir / "error.json").write_text(json.dumps({"error": error}))
            continue
        cell_group[name] = tuple(
            cfg.dataset["name"] if k == "dataset" else
            cfg.train.scheme.c if k == "c" else
            cfg.scenario.k_l if k == "k_l" else getattr(cfg.scenario, k)
            for k in group_keys
        )
        done = cell_dir / RESULTS_FILE
        if resume and done.exists():
            results.append(ExperimentResult.from_dict(json.loads(done.read_text())))
            status[name] = "skipped"
            continue
        lock = RunLock(cell_dir)
        if not lock.acquire():
            status[name] = "locked"
            continue
        lock.release()
        try:
            cmd_train(cfg, force=True)
            results.append(cmd_evaluate(cell_dir))
            (cell_dir / "error.json").unlink(missing_ok=True)
            status[name] = "done"
        except Exception as exc:  # recorded per cell; the sweep continues
            logger.exception("sweep cell %s failed", name)
            cell_dir.mkdir(parents=True, exist_ok=True)
            (cell_dir / "error.json").write_text(json.dumps({"error": f"{type(exc).__name__}: {exc}"}))
            status[name] = "failed"
    with open(out_dir / "results.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict()) + "\n")
    rows = []
    if results:
        expected: dict[tuple, int] = {}
        for g in cell_group.values():
            expected[g] = expected.get(g, 0) + 1
        for rep in aggregate(results, group_keys):
            key = tuple(rep.group[k] for k in group_keys)
            n_expected = expected.get(key, rep.n_experiments)
            rows.append({**rep.to_dict(), "expected": n_expected, "complete": rep.n_experiments == n_expected})
    _write_table(out_dir / "aggregate.csv", rows, group_keys + ["mean", "std", "n", "expected", "complete"])
    with open(out_dir / "aggregate.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    (out_dir / "status.json").write_text(json.dumps(status, indent=2))
    return {"status": status, "aggregate": rows}


# -- report --------------------------------------------------------------------

def _write_table(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def find_result_dirs(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if (p / RESULTS_FILE).exists():
            found.append(p)
        elif p.is_dir():
            found += sorted(r.parent for r in p.rglob(RESULTS_FILE))
    seen, out = set(), []
    for p in found:
        if p.resolve() not in seen:
            seen.add(p.resolve())
            out.append(p)
    return out


def markdown_table(rows: list[dict], group_by: list[str]) -> str:
    """Rows keyed by the first grouping key, one column per combination of the others."""
    def cell(r):
        return f"{r['mean']:.1f} ± {r['std']:.1f}"

    if len(group_by) < 2:
        header = f"| {group_by[0] if group_by else 'group'} | AUROC (%) |\n|---|---|\n"
        return header + "".join(f"| {r.get(group_by[0], 'all') if group_by else 'all'} | {cell(r)} |\n" for r in rows)
    row_key, col_keys = group_by[0], group_by[1:]
    cols = sorted({tuple(r[k] for k in col_keys) for r in rows}, key=lambda t: tuple(str(v) for v in t))
    row_vals = sorted({r[row_key] for r in rows}, key=str)
    lookup = {(r[row_key], tuple(r[k] for k in col_keys)): r for r in rows}
    names = [", ".join(f"{k}={v}" for k, v in zip(col_keys, c)) for c in cols]
    lines = [f"| {row_key} | " + " | ".join(names) + " |", "|---|" + "---|" * len(cols)]
    for rv in row_vals:
        cells = [cell(lookup[(rv, c)]) if (rv, c) in lookup else "" for c in cols]
        lines.append(f"| {rv} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(paths, out_dir, group_by=("dataset", "gamma_l"), plot: bool = True) -> dict:
    if not paths:
        raise UsageError("report needs at least one run directory")
    run_dirs = find_result_dirs(paths)
    if not run_dirs:
        raise UsageError(f"no completed runs ({RESULTS_FILE}) under {', '.join(map(str, paths))}")
    group_by = list(group_by)
    for k in group_by:
        if k not in GROUP_KEYS + ("seed",):
            raise UsageError(f"--group-by {k}: choose from {', '.join(GROUP_KEYS + ('seed',))}")
    results = [ExperimentResult.from_dict(json.loads((d / RESULTS_FILE).read_text())) for d in run_dirs]
    rows = [rep.to_dict() for rep in aggregate(results, group_by)]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_table(out_dir / "report.csv", rows, group_by + ["mean", "std", "n"])
    with open(out_dir / "report.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    (out_dir / "report.md").write_text(markdown_table(rows, group_by))
    figures = []
    if plot:
        from .plotting import recon_error_boxplot

        for d in run_dirs:
            scores_path, meta_path = d / "scores_recon_error.csv", d / SCENARIO_FILE
            if not (scores_path.exists() and meta_path.exists()):
                continue
            meta = json.loads(meta_path.read_text())
            vec, _ = read_score_csv(scores_path)
            cls_of = dict(zip(meta["test_ids"], meta["test_classes"]))
            if not all(int(i) in cls_of for i in vec.sample_ids):
                continue
            spec = ScenarioSpec.from_dict(meta["spec"])
            groups = class_groups([cls_of[int(i)] for i in vec.sample_ids], spec)
            figures.append(str(recon_error_boxplot(vec.scores, groups, out_dir / f"recon_boxplot_{d.name}.png",
                                                   title=d.name)))
    return {"rows": rows, "runs": [str(d) for d in run_dirs], "figures": figures}


# -- argument parsing ----------------------------------------------------------

def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (dotted key)")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    p.add_argument("--dataset", help="dataset name (ring, mnist, fmnist, cifar10, or a tabular file stem)")
    p.add_argument("--data-path", help="explicit tabular dataset file (.csv or .mat)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, help="sets both the scenario and training seed")
    p.add_argument("--gamma-l", type=float)
    p.add_argument("--gamma-p", type=float)
    p.add_argument("--c", type=float, help="generator/encoder target c")
    p.add_argument("--normal-classes", type=int, nargs="+")
    p.add_argument("--anomaly-classes", type=int, nargs="+")


def build_parser() -> ArgParser:
    parser = ArgParser(prog="aabigan", description="Anomaly-aware bidirectional GAN experiments. "
                       f"Datasets are read from ${DATA_ROOT_ENV} (default ./data).")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=ArgParser)

    p = sub.add_parser("train", help="train one run")
    _add_config_args(p)
    p.add_argument("--out", help="run directory")
    p.add_argument("--force", action="store_true", help="overwrite existing checkpoints")
    p.add_argument("--evaluate", action="store_true", help="evaluate on the test split after training")

    p = sub.add_parser("evaluate", help="score a trained run")
    p.add_argument("run_dir")
    p.add_argument("--split", default="test", choices=("test", "val"))

    p = sub.add_parser("sweep", help="run a cross product of scenarios")
    _add_config_args(p)
    p.add_argument("--out", required=False, help="sweep directory")
    p.add_argument("--axis", action="append", metavar="NAME=V1,V2",
                   help=f"sweep axis; one of {', '.join(SWEEP_AXES)} (class_pair=all enumerates ordered pairs)")
    p.add_argument("--no-resume", action="store_true", help="rerun cells that already have results")
    p.add_argument("--dry-run", action="store_true", help="list the cells without running them")

    p = sub.add_parser("verify", help="run the analytic verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--json", dest="json_path", help="also write the JSON report here")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("report", help="tabulate completed runs")
    p.add_argument("runs", nargs="*")
    p.add_argument("--out", default="report")
    p.add_argument("--group-by", default="dataset,gamma_l", help="comma-separated grouping keys")
    p.add_argument("--no-plot", action="store_true", help="skip reconstruction-error boxplots")
    return parser


def _run(args) -> int:
    if args.command is None:
        raise UsageError("choose a command: train, evaluate, sweep, verify, report")
    if args.command in ("train", "sweep"):
        cfg = config_from_args(args)
        if args.print_config:
            print(config_to_yaml(cfg), end="")
            return EXIT_OK
    if args.command == "train":
        run_dir = cmd_train(cfg, force=args.force)
        print(f"trained run in {run_dir}")
        if args.evaluate:
            res = cmd_evaluate(run_dir)
            print(f"test AUROC {res.auroc:.4f} ({res.criterion})")
        return EXIT_OK
    if args.command == "evaluate":
        res = cmd_evaluate(args.run_dir, args.split)
        print(json.dumps(res.to_dict()))
        return EXIT_OK
    if args.command == "sweep":
        if not args.out and not args.dry_run:
            raise UsageError("sweep needs --out")
        summary = cmd_sweep(cfg, parse_axes(args.axis), args.out or ".", resume=not args.no_resume,
                            dry_run=args.dry_run)
        if args.dry_run:
            print("\n".join(summary["cells"]))
            print(f"{summary['n_cells']} cells")
            return EXIT_OK
        counts: dict[str, int] = {}
        for s in summary["status"].values():
            counts[s] = counts.get(s, 0) + 1
        print(", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
        for row in summary["aggregate"]:
            print(json.dumps(row))
        return EXIT_RUNTIME if counts.get("failed") or counts.get("invalid") else EXIT_OK
    if args.command == "verify":
        report = oracle.run_verification_suite(seed=args.seed, n_instances=args.instances)
        payload = json.dumps(report.to_dict(), indent=2)
        if args.json_path:
            Path(args.json_path).write_text(payload)
        if args.format == "json":
            print(payload)
        else:
            print("\n".join(report.summary_lines()))
        return EXIT_OK if report.passed else EXIT_VERIFY
    if args.command == "report":
        group_by = [k.strip() for k in args.group_by.split(",") if k.strip()]
        summary = cmd_report(args.runs, args.out, group_by, plot=not args.no_plot)
        print((Path(args.out) / "report.md").read_text(), end="")
        for f in summary["figures"]:
            print(f"wrote {f}")
        return EXIT_OK
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return _run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, TrainingDivergedError, InsufficientDataError, UndefinedMetricError,
            InvalidInputError, InvalidSpecError, ResourceLimitError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
