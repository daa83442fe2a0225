"""Datasets and semi-supervised experiment scenarios.

A scenario fixes which classes are normal, which anomaly classes were
"collected" (``X-``), how many collected anomalies there are per normal
sample (``gamma_l``) and how many unlabeled anomalies pollute the normal set
(``gamma_p``). Validation and test sets are drawn from held-out data only.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import itertools
import math
import os
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CorruptDataError,
    DatasetError,
    InsufficientDataError,
    InvalidInputError,
    InvalidSpecError,
)

DATA_ROOT_ENV = "AABIGAN_DATA_ROOT"

# md5 of the published archives
_IDX_FILES = {
    "mnist": {
        "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
        "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
        "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
        "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
    },
    "fmnist": {
        "train-images-idx3-ubyte.gz": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
        "train-labels-idx1-ubyte.gz": "25c81989df183df01b3e8a0aad5dffbe",
        "t10k-images-idx3-ubyte.gz": "bef4ecab320f06d8554ea6380940ec79",
        "t10k-labels-idx1-ubyte.gz": "bb300cfdad3c16e7a12a480ee83cd310",
    },
}
_CIFAR_FILES = {
    "data_batch_1": "c99cafc152244af753f735de768cd75f",
    "data_batch_2": "d4bba439e000b95fd0a9bffe97cbabec",
    "data_batch_3": "54ebc095f3ab1f0389bbae665268c751",
    "data_batch_4": "634d18415352ddfa80567beed471001a",
    "data_batch_5": "482c414d41f54cd18b22e5b47cb7c3cb",
    "test_batch": "40351d587109b95175f43aff81a1287e",
}
_IDX_DIRS = {"mnist": ("mnist", "MNIST/raw", "MNIST"), "fmnist": ("fmnist", "FashionMNIST/raw", "fashion-mnist")}
_DOWNLOAD_HINT = {
    "mnist": "http://yann.lecun.com/exdb/mnist/ (or torchvision.datasets.MNIST(download=True))",
    "fmnist": "https://github.com/zalandoresearch/fashion-mnist (data/fashion/*.gz)",
    "cifar10": "https://www.cs.toronto.edu/~kriz/cifar-10-python.tar.gz (extract in the data root)",
}

IMAGE_DATASETS = ("mnist", "fmnist", "cifar10")
TABULAR_HELD_OUT_FRACTION = 0.4


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero (so 2.5 -> 3)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass
class LabeledDataset:
    """Samples with class labels and an optional train/test partition.

    Image samples are kept as uint8 ``(N, C, 32, 32)`` and scaled to [-1, 1]
    by :meth:`take`. Tabular samples are float rows.
    """

    samples: np.ndarray
    labels: np.ndarray
    name: str
    kind: str  # "image" or "tabular"
    is_test: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if len(self.samples) != len(self.labels):
            raise InvalidInputError("samples and labels differ in length")
        if self.is_test is not None:
            self.is_test = np.asarray(self.is_test, dtype=bool)
            if len(self.is_test) != len(self.labels):
                raise InvalidInputError("partition mask differs in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> list:
        return sorted(np.unique(self.labels).tolist())

    @property
    def sample_shape(self) -> tuple[int, ...]:
        if self.kind == "image":
            return (3, 32, 32)
        return tuple(self.samples.shape[1:])

    def take(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        x = self.samples[indices]
        if self.kind == "image":
            x = x.astype(np.float32) / 127.5 - 1.0
            if x.shape[1] == 1:
                x = np.repeat(x, 3, axis=1)
            return x
        return np.asarray(x, dtype=np.float32)


# -- loaders ----------------------------------------------------------------

def _md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            raw = fh.read()
    except (OSError, EOFError) as exc:
        raise CorruptDataError(f"cannot read {path}: {exc}") from exc
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise CorruptDataError(f"{path}: bad idx magic number {magic}")
    ndim = raw[3]
    dims = [int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim)]
    offset = 4 + 4 * ndim
    if len(raw) - offset != int(np.prod(dims)):
        raise CorruptDataError(f"{path}: truncated idx payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=offset).reshape(dims)


def _find_idx_dir(name: str, root: Path) -> Path:
    for sub in _IDX_DIRS[name]:
        d = root / sub
        if (d / "train-images-idx3-ubyte.gz").exists() or (d / "train-images-idx3-ubyte").exists():
            return d
    raise DatasetError(
        f"{name} files not found under {root} (looked in {', '.join(_IDX_DIRS[name])}); "
        f"download from {_DOWNLOAD_HINT[name]}"
    )


def _load_idx_dataset(name: str, root: Path, verify_checksum: bool):
    d = _find_idx_dir(name, root)
    arrays = {}
    for gz_name, md5 in _IDX_FILES[name].items():
        path = d / gz_name
        if not path.exists():
            path = d / gz_name[:-3]
            if not path.exists():
                raise DatasetError(f"missing {gz_name} in {d}; download from {_DOWNLOAD_HINT[name]}")
        elif verify_checksum and _md5(path) != md5:
            raise CorruptDataError(f"checksum mismatch for {path}")
        magic = 2051 if "images" in gz_name else 2049
        arrays[gz_name.split("-idx")[0]] = _read_idx(path, magic)
    x = np.concatenate([arrays["train-images"], arrays["t10k-images"]])[:, None]
    y = np.concatenate([arrays["train-labels"], arrays["t10k-labels"]]).astype(np.int64)
    n_train = len(arrays["train-labels"])
    if len(arrays["train-images"]) != n_train or len(arrays["t10k-images"]) != len(arrays["t10k-labels"]):
        raise CorruptDataError(f"{name}: image/label counts disagree")
    return x, y, n_train


def _load_cifar10(root: Path, verify_checksum: bool):
    d = root / "cifar-10-batches-py"
    if not d.is_dir():
        raise DatasetError(f"cifar10 not found at {d}; download from {_DOWNLOAD_HINT['cifar10']}")
    xs, ys = [], []
    for fname, md5 in _CIFAR_FILES.items():
        path = d / fname
        if not path.exists():
            raise DatasetError(f"missing {path}; download from {_DOWNLOAD_HINT['cifar10']}")
        if verify_checksum and _md5(path) != md5:
            raise CorruptDataError(f"checksum mismatch for {path}")
        with open(path, "rb") as fh:
            try:
                batch = pickle.load(fh, encoding="bytes")
            except Exception as exc:  # noqa: BLE001 - any unpickling failure means corruption
                raise CorruptDataError(f"cannot unpickle {path}: {exc}") from exc
        xs.append(np.asarray(batch[b"data"], dtype=np.uint8).reshape(-1, 3, 32, 32))
        ys.append(np.asarray(batch[b"labels"], dtype=np.int64))
    n_train = sum(len(y) for y in ys[:-1])  # the last file is the test batch
    return np.concatenate(xs), np.concatenate(ys), n_train


def _resize_to_32(x: np.ndarray, chunk: int = 5000) -> np.ndarray:
    import torch
    import torch.nn.functional as F

    if x.shape[-2:] == (32, 32):
        return x
    out = np.empty((len(x), x.shape[1], 32, 32), dtype=np.uint8)
    for i in range(0, len(x), chunk):
        t = torch.from_numpy(x[i:i + chunk].astype(np.float32))
        r = F.interpolate(t, size=(32, 32), mode="bilinear", align_corners=False)
        out[i:i + chunk] = r.round().clamp(0, 255).to(torch.uint8).numpy()
    return out


def default_data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "data"))


def load_image_dataset(name: str, root_path: str | os.PathLike | None = None,
                       verify_checksum: bool = True) -> LabeledDataset:
    """Load MNIST, Fashion-MNIST or CIFAR-10 from their published archive formats.

    Grayscale digits are resized to 32x32; :meth:`LabeledDataset.take` replicates
    them to three channels and scales pixels to [-1, 1].
    """
    name = name.lower()
    root = Path(root_path) if root_path is not None else default_data_root()
    if name in _IDX_FILES:
        x, y, n_train = _load_idx_dataset(name, root, verify_checksum)
    elif name == "cifar10":
        x, y, n_train = _load_cifar10(root, verify_checksum)
    else:
        raise InvalidInputError(f"unknown image dataset {name!r}; choose from {IMAGE_DATASETS}")
    is_test = np.zeros(len(y), dtype=bool)
    is_test[n_train:] = True
    return LabeledDataset(_resize_to_32(x), y, name, "image", is_test)


def standardize(x: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Zero-mean, unit-variance columns using ``reference`` statistics; constant columns become 0."""
    ref = x if reference is None else reference
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return ((x - mean) / std).astype(np.float32)


def load_tabular_csv(path: str | os.PathLike, label_column: str = "label",
                     standardize_features: bool = True) -> LabeledDataset:
    """Read a benchmark CSV (header row, numeric features, 0/1 label column)."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise InvalidInputError(f"{path}: label column {label_column!r} missing (columns: {header})")
        li = header.index(label_column)
        rows, labels = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            values = []
            for ci, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InvalidInputError(
                        f"{path}: non-numeric value {cell!r} at row {rownum}, column {header[ci]!r}"
                    ) from None
                values.append(v)
            if len(values) != len(header):
                raise InvalidInputError(f"{path}: row {rownum} has {len(values)} fields, expected {len(header)}")
            lab = values.pop(li)
            if lab not in (0.0, 1.0):
                raise InvalidInputError(f"{path}: label at row {rownum} must be 0 or 1, got {lab}")
            rows.append(values)
            labels.append(int(lab))
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    if standardize_features and len(x):
        x = standardize(x)
    return LabeledDataset(x.astype(np.float32), np.asarray(labels, dtype=np.int64), path.stem, "tabular")


def load_tabular_mat(path: str | os.PathLike) -> LabeledDataset:
    """Read a MATLAB file holding a feature matrix ``X`` and 0/1 labels ``y``."""
    from scipy.io import loadmat

    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    try:
        mat = loadmat(path)
    except NotImplementedError:
        raise DatasetError(f"{path} is a v7.3 MATLAB file; convert it to CSV with a 'label' column") from None
    except ValueError as exc:
        raise CorruptDataError(f"{path}: unreadable MATLAB file ({exc})") from exc
    if "X" not in mat or "y" not in mat:
        raise CorruptDataError(f"{path}: expected variables 'X' and 'y'")
    x = np.asarray(mat["X"], dtype=np.float64)
    y = np.asarray(mat["y"]).reshape(-1)
    if x.ndim != 2 or len(x) != len(y):
        raise CorruptDataError(f"{path}: X has shape {x.shape} but y has {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise CorruptDataError(f"{path}: labels must be 0 or 1")
    if not np.isfinite(x).all():
        raise CorruptDataError(f"{path}: non-finite feature values")
    return LabeledDataset(x.astype(np.float32), y.astype(np.int64), path.stem, "tabular")


def load_dataset(name: str, root_path: str | os.PathLike | None = None, path: str | os.PathLike | None = None,
                 label_column: str = "label") -> LabeledDataset:
    """Resolve a dataset by name.

    ``ring`` is generated; image names read their archives under the data root;
    anything else is a tabular file, either ``path`` or ``<root>/<name>.csv`` /
    ``<root>/<name>.mat``. Tabular features are left raw here because
    :func:`build_scenario` standardizes on the training rows.
    """
    if name == "ring":
        return make_ring_dataset()
    if name.lower() in IMAGE_DATASETS:
        return load_image_dataset(name, root_path)
    if path is None:
        root = Path(root_path) if root_path is not None else default_data_root()
        candidates = [root / f"{name}.csv", root / f"{name}.mat", root / name / f"{name}.csv",
                      root / name / f"{name}.mat"]
        found = [c for c in candidates if c.exists()]
        if not found:
            raise DatasetError(
                f"dataset {name!r} not found; looked for {', '.join(map(str, candidates))}. "
                f"Set {DATA_ROOT_ENV} to the directory holding it."
            )
        path = found[0]
    path = Path(path)
    if path.suffix == ".mat":
        ds = load_tabular_mat(path)
    else:
        ds = load_tabular_csv(path, label_column, standardize_features=False)
    ds.name = name
    return ds


RING_RADIUS = 2.0
RING_STD = 0.1
ANOMALY_STD = 0.2
# class 1 sits in the ring's hole; classes 2-4 sit outside the ring between modes
RING_ANOMALY_CENTERS = {
    1: (0.0, 0.0),
    2: (3.5 * math.cos(math.radians(22.5)), 3.5 * math.sin(math.radians(22.5))),
    3: (3.5 * math.cos(math.radians(157.5)), 3.5 * math.sin(math.radians(157.5))),
    4: (3.5 * math.cos(math.radians(292.5)), 3.5 * math.sin(math.radians(292.5))),
}


def make_ring_dataset(n_train_normal: int = 2000, n_test_normal: int = 1000,
                      n_train_anomaly: int = 200, n_test_anomaly: int = 100,
                      seed: int = 0) -> LabeledDataset:
    """Eight-Gaussian ring of normals (class 0) plus four anomaly clusters (classes 1-4)."""
    rng = np.random.default_rng(seed)
    xs, ys, tests = [], [], []

    def ring(n):
        modes = rng.integers(0, 8, size=n)
        angle = modes * (2 * np.pi / 8)
        centers = RING_RADIUS * np.stack([np.cos(angle), np.sin(angle)], axis=1)
        return centers + RING_STD * rng.standard_normal((n, 2))

    for n, test in ((n_train_normal, False), (n_test_normal, True)):
        xs.append(ring(n))
        ys.append(np.zeros(n, dtype=np.int64))
        tests.append(np.full(n, test))
    for cls, center in RING_ANOMALY_CENTERS.items():
        for n, test in ((n_train_anomaly, False), (n_test_anomaly, True)):
            xs.append(np.asarray(center) + ANOMALY_STD * rng.standard_normal((n, 2)))
            ys.append(np.full(n, cls, dtype=np.int64))
            tests.append(np.full(n, test))
    return LabeledDataset(
        np.concatenate(xs).astype(np.float32), np.concatenate(ys), "ring", "tabular", np.concatenate(tests)
    )


# -- scenarios --------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    normal_classes: tuple = (0,)
    collected_anomaly_classes: tuple = (1,)
    gamma_l: float = 0.05
    gamma_p: float = 0.0
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "normal_classes", tuple(sorted(self.normal_classes)))
        object.__setattr__(self, "collected_anomaly_classes", tuple(sorted(self.collected_anomaly_classes)))
        if not self.normal_classes:
            raise InvalidSpecError("at least one normal class is required")
        if set(self.normal_classes) & set(self.collected_anomaly_classes):
            raise InvalidSpecError("normal and collected anomaly classes overlap")
        for name in ("gamma_l", "gamma_p"):
            if not getattr(self, name) >= 0:
                raise InvalidSpecError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0 < self.val_fraction < 1:
            raise InvalidSpecError("val_fraction must lie in (0, 1)")

    @property
    def k_l(self) -> int:
        return len(self.collected_anomaly_classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["normal_classes"] = list(self.normal_classes)
        d["collected_anomaly_classes"] = list(self.collected_anomaly_classes)
        d["k_l"] = self.k_l
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        keys = ("normal_classes", "collected_anomaly_classes", "gamma_l", "gamma_p", "seed", "val_fraction")
        return cls(**{k: (tuple(d[k]) if k.endswith("classes") else d[k]) for k in keys if k in d})


@dataclass
class LabeledSplit:
    x: np.ndarray
    y: np.ndarray  # 1 = anomaly
    ids: np.ndarray  # indices into the source dataset
    classes: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class ScenarioData:
    train_normal: np.ndarray
    train_anomaly: np.ndarray
    val: LabeledSplit
    test: LabeledSplit
    train_normal_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    train_anomaly_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    metadata: dict = field(default_factory=dict)


def _stratified_split(indices: np.ndarray, strata: np.ndarray, fraction: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split ``indices`` so each stratum contributes round(fraction * size) to the first part."""
    first, second = [], []
    for s in np.unique(strata):
        members = rng.permutation(indices[strata == s])
        k = round_half_away(fraction * len(members))
        first.append(members[:k])
        second.append(members[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def build_scenario(dataset: LabeledDataset, spec: ScenarioSpec) -> ScenarioData:
    """Assemble X+, X-, validation and test sets for one experiment.

    Collected anomalies are drawn uniformly without replacement from the
    collected classes; pollution is drawn from every anomaly class and put
    into X+ unlabeled. Validation/test come from held-out data, split per class.
    """
    labels = dataset.labels
    missing = (set(spec.normal_classes) | set(spec.collected_anomaly_classes)) - set(dataset.classes)
    if missing:
        raise InvalidSpecError(f"classes {sorted(missing)} not present in {dataset.name}")
    rng = np.random.default_rng(spec.seed)
    all_idx = np.arange(len(dataset))
    is_normal = np.isin(labels, spec.normal_classes)

    if dataset.is_test is not None:
        train_pool, held_out = all_idx[~dataset.is_test], all_idx[dataset.is_test]
    else:
        held_out, train_pool = _stratified_split(all_idx, labels, TABULAR_HELD_OUT_FRACTION, rng)

    normal_idx = train_pool[is_normal[train_pool]]
    n = len(normal_idx)
    if n == 0:
        raise InsufficientDataError("no normal training samples")
    n_collected = round_half_away(spec.gamma_l * n)
    n_polluted = round_half_away(spec.gamma_p * n)

    collected_pool = train_pool[np.isin(labels[train_pool], spec.collected_anomaly_classes)]
    if n_collected > len(collected_pool):
        raise InsufficientDataError(
            f"need {n_collected} collected anomalies, only {len(collected_pool)} available"
        )
    minus_idx = np.sort(rng.choice(collected_pool, size=n_collected, replace=False))

    pollution_pool = np.setdiff1d(train_pool[~is_normal[train_pool]], minus_idx)
    if n_polluted > len(pollution_pool):
        raise InsufficientDataError(
            f"need {n_polluted} pollution anomalies, only {len(pollution_pool)} available"
        )
    pollution_idx = np.sort(rng.choice(pollution_pool, size=n_polluted, replace=False))
    plus_idx = np.concatenate([normal_idx, pollution_idx])

    val_idx, test_idx = _stratified_split(held_out, labels[held_out], spec.val_fraction, rng)

    train_rows = np.concatenate([plus_idx, minus_idx])
    if dataset.kind == "tabular":
        reference = dataset.take(train_rows)

        def prep(idx):
            return standardize(dataset.take(idx), reference)
    else:
        prep = dataset.take

    def split(idx):
        return LabeledSplit(prep(idx), (~is_normal[idx]).astype(np.int64), idx, labels[idx])

    val, test = split(val_idx), split(test_idx)
    metadata = {
        "dataset": dataset.name,
        "kind": dataset.kind,
        "spec": spec.to_dict(),
        "n_normal": int(n),
        "n_collected": int(n_collected),
        "n_polluted": int(n_polluted),
        "n_val": len(val_idx),
        "n_test": len(test_idx),
        "pollution_source": "uniform over all anomaly classes",
        "rounding": "half away from zero",
        "held_out": "original test partition" if dataset.is_test is not None
        else f"stratified {TABULAR_HELD_OUT_FRACTION:.0%} of rows",
        "standardization": "training rows (X+ and X-)" if dataset.kind == "tabular" else "pixels to [-1, 1]",
        "train_normal_ids": plus_idx.tolist(),
        "train_anomaly_ids": minus_idx.tolist(),
        "pollution_ids": pollution_idx.tolist(),
        "val_ids": val_idx.tolist(),
        "test_ids": test_idx.tolist(),
        "test_classes": labels[test_idx].tolist(),
    }
    return ScenarioData(
        train_normal=prep(plus_idx),
        train_anomaly=prep(minus_idx) if n_collected else np.zeros((0, *dataset.sample_shape), np.float32),
        val=val,
        test=test,
        train_normal_ids=plus_idx,
        train_anomaly_ids=minus_idx,
        metadata=metadata,
    )


def enumerate_class_pairs(dataset: LabeledDataset, gamma_l: float = 0.05, gamma_p: float = 0.0,
                          seed: int = 0, val_fraction: float = 0.2) -> list[ScenarioSpec]:
    """All ordered (normal class, collected class) pairs with k_l = 1."""
    classes = dataset.classes
    if len(classes) < 2:
        raise InvalidInputError("need at least two classes")
    return [
        ScenarioSpec((normal,), (collected,), gamma_l, gamma_p, seed, val_fraction)
        for normal, collected in itertools.permutations(classes, 2)
    ]


def class_groups(classes: Sequence, spec: ScenarioSpec) -> list[str]:
    """Label each class as normal, seen (collected) or novel anomaly."""
    out = []
    for c in classes:
        if c in spec.normal_classes:
            out.append("normal")
        elif c in spec.collected_anomaly_classes:
            out.append("seen anomaly")
        else:
            out.append("novel anomaly")
    return out
