"""Synthetic data generation, non-iid partitioning, and the shared global dataset."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ParamVector, RngStream

_PARTITION_RETRIES = 100
_DIVERGENCE_EPS = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d_in) with integer class labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if labs.ndim != 1 or len(labs) != len(feats):
            raise ValueError("labels must be a 1-D array matching features rows")
        if len(feats) and not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        if len(labs) and labs.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        """Row view used for shards and minibatches."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class GlobalDataset:
    """The small shared dataset: a training share and a fair-value scoring share."""

    train_part: Dataset
    score_part: Dataset

    def __len__(self) -> int:
        return len(self.train_part) + len(self.score_part)


@dataclass(frozen=True)
class PartitionSpec:
    num_workers: int
    dirichlet_alpha: float = 0.5
    global_fraction: float = 0.01
    global_split: float = 0.5
    mode: str = "dirichlet"  # dirichlet | shards
    shards_per_worker: int = 2

    def validate(self, prefix: str = "data"):
        if self.num_workers < 1:
            raise ConfigError(f"{prefix}.num_workers must be >= 1, got {self.num_workers}")
        if not self.dirichlet_alpha > 0:
            raise ConfigError(
                f"{prefix}.dirichlet_alpha must be > 0, got {self.dirichlet_alpha}"
            )
        if not 0.0 < self.global_fraction <= 0.1:
            raise ConfigError(
                f"{prefix}.global_fraction must be in (0, 0.1], got {self.global_fraction}"
            )
        if not 0.0 < self.global_split < 1.0:
            raise ConfigError(
                f"{prefix}.global_split must be in (0, 1), got {self.global_split}"
            )
        if self.mode not in ("dirichlet", "shards"):
            raise ConfigError(f"{prefix}.partition_mode must be dirichlet or shards")
        if self.mode == "shards" and self.shards_per_worker < 1:
            raise ConfigError(
                f"{prefix}.shards_per_worker must be >= 1, got {self.shards_per_worker}"
            )


def gen_synthetic(n: int, d_in: int, num_classes: int, sep: float, rng: RngStream) -> Dataset:
    """Gaussian-mixture classification data.

    Each class mean sits on a sphere of radius `sep` (random direction),
    samples are unit-variance Gaussians around their class mean, and class
    counts are balanced up to rounding.
    """
    if num_classes < 1:
        raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
    if n < num_classes:
        raise ConfigError(f"need n >= num_classes, got n={n}, num_classes={num_classes}")
    if not sep > 0:
        raise ConfigError(f"sep must be > 0, got {sep}")
    g = rng.generator()
    dirs = g.standard_normal((num_classes, d_in))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = sep * dirs

    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes), counts)
    features = means[labels] + g.standard_normal((n, d_in))
    perm = g.permutation(n)
    return Dataset(features[perm], labels[perm])


def _split_class_indices(idx: np.ndarray, proportions: np.ndarray) -> list[np.ndarray]:
    bounds = (np.cumsum(proportions)[:-1] * len(idx)).astype(np.int64)
    return np.split(idx, bounds)


def partition_noniid(
    ds: Dataset, spec: PartitionSpec, rng: RngStream
) -> tuple[list[Dataset], GlobalDataset]:
    """Carve out the shared global dataset, then split the rest across workers.

    The global share (global_fraction of `ds`, sampled uniformly) is divided
    into a train part and a scoring part by global_split. The remainder is
    partitioned by per-class Dirichlet(alpha) proportions (label skew) or by
    sorted label shards. The worker shards and the two global parts are
    mutually disjoint and together reproduce `ds` exactly.
    """
    spec.validate()
    n = len(ds)
    u = spec.num_workers
    g = rng.generator()

    n_global = int(round(spec.global_fraction * n))
    perm = g.permutation(n)
    global_idx = perm[:n_global]
    rest_idx = perm[n_global:]

    n_train = int(round(spec.global_split * n_global))
    global_ds = GlobalDataset(
        train_part=ds.subset(global_idx[:n_train]),
        score_part=ds.subset(global_idx[n_train:]),
    )

    if len(rest_idx) < u:
        raise ConfigError(
            f"dataset too small: {len(rest_idx)} samples left for {u} workers"
        )

    classes = np.unique(ds.labels[rest_idx])
    for _ in range(_PARTITION_RETRIES):
        shards = [[] for _ in range(u)]
        if spec.mode == "dirichlet":
            for c in classes:
                idx_c = rest_idx[ds.labels[rest_idx] == c]
                idx_c = idx_c[g.permutation(len(idx_c))]
                proportions = g.dirichlet(np.full(u, spec.dirichlet_alpha))
                for worker, part in enumerate(_split_class_indices(idx_c, proportions)):
                    shards[worker].append(part)
        else:
            # pathological split: sort by label, deal contiguous shards
            order = rest_idx[np.argsort(ds.labels[rest_idx], kind="stable")]
            n_shards = u * spec.shards_per_worker
            pieces = np.array_split(order, n_shards)
            assignment = g.permutation(n_shards)
            for k, shard_id in enumerate(assignment):
                shards[k % u].append(pieces[shard_id])
        sizes = [sum(len(p) for p in parts) for parts in shards]
        if min(sizes) >= 1:
            locals_ = [ds.subset(np.concatenate(parts)) for parts in shards]
            return locals_, global_ds
    raise ConfigError(
        f"could not give every one of {u} workers at least one sample "
        f"after {_PARTITION_RETRIES} draws; dataset too small or alpha too extreme"
    )


def merge_global_train(local: Dataset, global_ds: GlobalDataset) -> Dataset:
    """A worker's effective training set: local shard plus the shared train part."""
    share = global_ds.train_part
    if len(share) == 0:
        return local
    if local.dim != share.dim:
        raise ValueError(
            f"feature dimension mismatch: local {local.dim} vs shared {share.dim}"
        )
    return Dataset(
        np.concatenate([local.features, share.features]),
        np.concatenate([local.labels, share.labels]),
    )


def weight_divergence(local_models: list[ParamVector], global_model: ParamVector) -> float:
    """Mean normalized distance of local models from the global model.

    mean_i ||w_i - w_g||_2 / max(||w_g||_2, 1e-12). A near-zero global norm
    makes the value blow up toward 1e12-scale; treat such readings as
    degenerate rather than meaningful.
    """
    if not local_models:
        return 0.0
    g_norm = max(float(np.linalg.norm(global_model)), _DIVERGENCE_EPS)
    dists = [float(np.linalg.norm(w - global_model)) for w in local_models]
    return float(np.mean(dists) / g_norm)


def standardize(ds: Dataset) -> Dataset:
    """Per-feature zero mean, unit variance (constant features left centered)."""
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    std[std < 1e-12] = 1.0
    return Dataset((ds.features - mean) / std, ds.labels)


def load_csv(path) -> Dataset:
    """Read a dataset from CSV with header f0,...,f{d-1},label.

    Any row that fails to parse aborts with its 1-based line number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise ConfigError(
                f"{path}: header must be f0,...,f{{d-1}},label, got {','.join(header)}"
            )
        features, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ConfigError(f"{path}: line {lineno}: expected {d + 1} fields")
            try:
                features.append([float(v) for v in row[:d]])
                label = int(row[d])
            except ValueError as exc:
                raise ConfigError(f"{path}: line {lineno}: {exc}") from None
            if label < 0:
                raise ConfigError(f"{path}: line {lineno}: label must be >= 0")
            labels.append(label)
    if not labels:
        raise ConfigError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(labels))
