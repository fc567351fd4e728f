"""Synthetic dataset generators, CSV ingestion, splits, standardization.

Generators are pure functions of (parameters, seed).  Split labels are
assigned by a seeded shuffle and stored per row, so a dataset written to
CSV carries its split with it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, SchemaError

TASKS = ("regression", "binary")
SPLITS = ("train", "val", "test")

DEFAULT_SPLIT_FRACTIONS = (0.7, 0.2, 0.1)


@dataclass
class ColumnStats:
    mean: np.ndarray          # per feature column
    std: np.ndarray
    target_mean: float
    target_std: float
    skipped: tuple[str, ...]  # feature columns left unstandardized


@dataclass
class Dataset:
    features: np.ndarray      # N x p
    target: np.ndarray        # N
    feature_names: list[str]
    task: str
    split: np.ndarray         # N strings from SPLITS
    stats: ColumnStats | None = None
    constant_columns: tuple[str, ...] = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64).ravel()
        n, p = self.features.shape
        if len(self.target) != n or len(self.split) != n:
            raise DataError(f"row counts disagree: features {n}, target {len(self.target)}, "
                            f"split {len(self.split)}")
        if len(self.feature_names) != p:
            raise DataError(f"{len(self.feature_names)} names for {p} feature columns")
        if not np.isfinite(self.features).all() or not np.isfinite(self.target).all():
            raise DataError("dataset contains NaN/Inf values")
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")
        unknown = set(np.unique(self.split)) - set(SPLITS)
        if unknown:
            raise DataError(f"unknown split labels {sorted(unknown)}")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def split_arrays(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == name
        return self.features[mask], self.target[mask]

    def eval_split_name(self) -> str:
        """Validation split if present, else the test split (7:3 datasets)."""
        return "val" if (self.split == "val").any() else "test"


def _assign_splits(n: int, rng: np.random.Generator,
                   fractions=DEFAULT_SPLIT_FRACTIONS) -> np.ndarray:
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ContractError(f"split fractions must sum to 1, got {fractions}")
    n_train = round(n * fractions[0])
    n_val = round(n * fractions[1])
    labels = np.array(["train"] * n_train + ["val"] * n_val
                      + ["test"] * (n - n_train - n_val), dtype=object)
    rng.shuffle(labels)
    return labels


# ----------------------------------------------------------------------
# Generators
# ----------------------------------------------------------------------

def _norm_cdf(z: np.ndarray) -> np.ndarray:
    erf = np.vectorize(math.erf)
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


TOY1_RHO_CHOICES = (0.0, 0.9, 1.0)


def gen_toy1(n: int, rho: float, seed: int, allow_any_rho: bool = False) -> Dataset:
    """Linear target on the first of two uniform features: y = x1, with the
    feature pair independent (rho=0), correlated via a Gaussian copula
    (0 < rho < 1), or exact copies (rho=1)."""
    if n < 10:
        raise ContractError(f"need n >= 10, got {n}")
    if not allow_any_rho and rho not in TOY1_RHO_CHOICES:
        raise ContractError(f"rho must be one of {TOY1_RHO_CHOICES} "
                            f"(pass allow_any_rho for other values)")
    if not 0.0 <= rho <= 1.0:
        raise ContractError(f"rho must lie in [0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    if rho == 0.0:
        x1 = rng.uniform(size=n)
        x2 = rng.uniform(size=n)
    elif rho == 1.0:
        x1 = rng.uniform(size=n)
        x2 = x1.copy()
    else:
        # Gaussian copula: uniforms U = Phi(Z) have Pearson correlation
        # (6/pi) asin(r/2) when (Z1, Z2) are standard normal with corr r.
        r = 2.0 * math.sin(math.pi * rho / 6.0)
        z1 = rng.standard_normal(n)
        z2 = r * z1 + math.sqrt(1.0 - r * r) * rng.standard_normal(n)
        x1 = _norm_cdf(z1)
        x2 = _norm_cdf(z2)
    y = x1.copy()
    return Dataset(np.column_stack([x1, x2]), y, ["x1", "x2"], "regression",
                   _assign_splits(n, rng))


def gen_toy2(n: int, seed: int) -> Dataset:
    """Uncorrelated but dependent pair: x1 = Z, x2 = |Z|, target y = x2."""
    if n < 10:
        raise ContractError(f"need n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    x1 = z
    x2 = np.abs(z)
    y = x2.copy()
    return Dataset(np.column_stack([x1, x2]), y, ["x1", "x2"], "regression",
                   _assign_splits(n, rng))


def gen_kovacs(n: int, seed: int, sigma1: float = 0.05, sigma2: float = 0.5) -> Dataset:
    """Seven features with strong built-in concurvity; only x1, x5, x6 drive
    the target.  7:3 train/test split, the test split doubling as validation."""
    if n < 10:
        raise ContractError(f"need n >= 10, got {n}")
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(size=n)
    x2 = rng.uniform(size=n)
    x3 = rng.uniform(size=n)
    x4 = x2 ** 3 + x3 ** 2 + sigma1 * rng.standard_normal(n)
    x5 = x3 ** 2 + sigma1 * rng.standard_normal(n)
    x6 = x2 ** 2 + x4 ** 2 + sigma1 * rng.standard_normal(n)
    x7 = x1 * x2 + sigma1 * rng.standard_normal(n)
    y = 2.0 * x1 ** 2 + x5 ** 3 + 2.0 * np.sin(x6) + sigma2 * rng.standard_normal(n)
    features = np.column_stack([x1, x2, x3, x4, x5, x6, x7])
    names = [f"x{i}" for i in range(1, 8)]
    split = _assign_splits(n, rng, fractions=(0.7, 0.0, 0.3))
    return Dataset(features, y, names, "regression", split)


SEASONAL_SHAPES = ("smooth", "step")

# Fixed ground-truth configuration for the step series: a weekly square wave
# (high during the first 120 of 168 hours) under a dominant daily square wave
# (high during the first 8 of 24 hours).  The daily wave carries most of the
# energy, and its harmonics are expressible by both seasonality blocks, so an
# unregularized fit genuinely splits them ambiguously.
STEP_DAILY_HIGH_HOURS = 8
STEP_DAILY_LEVELS = (2.0, -2.0)
STEP_WEEKLY_HIGH_HOURS = 120
STEP_WEEKLY_LEVELS = (1.0, -1.0)

SMOOTH_NOISE_STD = 0.05


def gen_seasonal(n_hours: int, seed: int, shape: str = "smooth") -> Dataset:
    """Hourly series with daily and weekly structure.

    smooth: a fixed low-order harmonic ground truth plus small Gaussian
    noise.  step: superposed daily/weekly square waves taking exactly four
    discrete levels, which a finite harmonic model can only approximate.
    """
    if n_hours < 2 * 168:
        raise ContractError(f"need at least two weeks of hours, got {n_hours}")
    if shape not in SEASONAL_SHAPES:
        raise ContractError(f"shape must be one of {SEASONAL_SHAPES}, got {shape!r}")
    rng = np.random.default_rng(seed)
    t = np.arange(n_hours, dtype=np.float64)
    if shape == "smooth":
        daily = (1.0 * np.cos(2 * np.pi * t / 24.0)
                 + 0.5 * np.sin(2 * np.pi * t / 24.0)
                 + 0.3 * np.cos(2 * np.pi * 2 * t / 24.0))
        weekly = (0.8 * np.cos(2 * np.pi * t / 168.0)
                  + 0.6 * np.sin(2 * np.pi * t / 168.0)
                  + 0.4 * np.sin(2 * np.pi * 3 * t / 168.0))
        y = daily + weekly + SMOOTH_NOISE_STD * rng.standard_normal(n_hours)
    else:
        hour_of_day = np.mod(t, 24.0)
        hour_of_week = np.mod(t, 168.0)
        daily = np.where(hour_of_day < STEP_DAILY_HIGH_HOURS,
                         STEP_DAILY_LEVELS[0], STEP_DAILY_LEVELS[1])
        weekly = np.where(hour_of_week < STEP_WEEKLY_HIGH_HOURS,
                          STEP_WEEKLY_LEVELS[0], STEP_WEEKLY_LEVELS[1])
        y = daily + weekly
    return Dataset(t.reshape(-1, 1), y, ["t"], "regression",
                   _assign_splits(n_hours, rng))


# ----------------------------------------------------------------------
# Standardization
# ----------------------------------------------------------------------

def standardize(ds: Dataset, skip_features: tuple[str, ...] = ()) -> Dataset:
    """Z-score features and (for regression) the target.

    Statistics are fit on the train split only and applied to every row.
    Columns named in skip_features (e.g. the hour column of a time series)
    are left untouched.  Constant columns are shifted but not scaled.
    """
    if ds.stats is not None:
        raise ContractError("dataset is already standardized")
    train_mask = ds.split == "train"
    if not train_mask.any():
        raise DataError("no train rows to fit standardization on")
    train = ds.features[train_mask]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    skip_idx = [i for i, name in enumerate(ds.feature_names) if name in skip_features]
    mean[skip_idx] = 0.0
    std[skip_idx] = 1.0
    constant = std < 1e-12
    std = np.where(constant, 1.0, std)
    features = (ds.features - mean) / std
    if ds.task == "regression":
        t_mean = float(ds.target[train_mask].mean())
        t_std = float(ds.target[train_mask].std())
        if t_std < 1e-12:
            t_std = 1.0
        target = (ds.target - t_mean) / t_std
    else:
        t_mean, t_std = 0.0, 1.0
        target = ds.target.copy()
    stats = ColumnStats(mean, std, t_mean, t_std, tuple(skip_features))
    const_names = tuple(name for i, name in enumerate(ds.feature_names)
                        if constant[i] and i not in skip_idx)
    return replace(ds, features=features, target=target, stats=stats,
                   constant_columns=const_names)


def destandardize(ds: Dataset) -> Dataset:
    """Invert `standardize`; the round trip recovers values exactly up to
    float arithmetic."""
    if ds.stats is None:
        raise ContractError("dataset carries no standardization stats")
    features = ds.features * ds.stats.std + ds.stats.mean
    target = ds.target * ds.stats.target_std + ds.stats.target_mean
    return replace(ds, features=features, target=target, stats=None)


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------

def write_csv(ds: Dataset, path: str | Path, target_name: str = "y") -> None:
    """Header + rows; floats via repr (lossless); split in the last column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*ds.feature_names, target_name, "split"])
        for i in range(ds.n_rows):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(repr(float(ds.target[i])))
            row.append(ds.split[i])
            writer.writerow(row)


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_csv(path: str | Path, target_column: str = "y", task: str = "regression",
             split_fractions=DEFAULT_SPLIT_FRACTIONS, split_seed: int = 0) -> Dataset:
    """Rectangular CSV with a header row.  Non-numeric columns are one-hot
    expanded; a `split` column is honored when present, otherwise splits are
    assigned with a seeded shuffle.  Missing values are an error."""
    path = Path(path)
    if task not in TASKS:
        raise DataError(f"task must be one of {TASKS}, got {task!r}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required")
        rows = list(reader)
    if target_column not in header:
        raise SchemaError(f"{path}: no column named {target_column!r} in header {header}")
    width = len(header)
    missing_rows = []
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != width:
            raise SchemaError(f"{path}: row {r} has {len(row)} cells, expected {width}")
        if any(cell.strip() == "" for cell in row):
            missing_rows.append(r)
    if missing_rows:
        raise DataError(f"{path}: missing values in rows {missing_rows[:20]}"
                        + (" ..." if len(missing_rows) > 20 else ""))

    columns = {name: [row[i] for row in rows] for i, name in enumerate(header)}
    split_raw = columns.pop("split", None)
    target_raw = columns.pop(target_column)
    if not all(_is_float(v) for v in target_raw):
        raise SchemaError(f"{path}: target column {target_column!r} must be numeric")
    target = np.array([float(v) for v in target_raw])
    if task == "binary" and not np.isin(target, (0.0, 1.0)).all():
        raise DataError(f"{path}: binary task requires targets in {{0, 1}}")

    feature_cols: list[np.ndarray] = []
    feature_names: list[str] = []
    for name, values in columns.items():
        if all(_is_float(v) for v in values):
            feature_cols.append(np.array([float(v) for v in values]))
            feature_names.append(name)
        else:
            levels = sorted(set(values))
            for level in levels:
                feature_cols.append(np.array([1.0 if v == level else 0.0 for v in values]))
                feature_names.append(f"{name}={level}")
    if not feature_cols:
        raise SchemaError(f"{path}: no feature columns besides the target")
    features = np.column_stack(feature_cols)

    if split_raw is not None:
        split = np.array(split_raw, dtype=object)
    else:
        split = _assign_splits(len(rows), np.random.default_rng(split_seed),
                               split_fractions)
    return Dataset(features, target, feature_names, task, split)
