"""Post-hoc interpretability metrics.

Feature importance (mean absolute deviation of each contribution from its
split mean), correlation matrices for raw and transformed features, the
rank-based collinearity witness, and standard fit metrics.  The measured
decorrelation value reuses the penalty implementation in regularizers, so
the reported number and the trained objective can never drift apart.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ContractError, DataError
from .models import AdditiveModel
from .regularizers import DEFAULT_EPS, corr_values

CORR_KINDS = ("raw_features", "transformed_features")


@dataclass
class ImportanceReport:
    feature_names: list[str]
    values: np.ndarray        # one nonnegative value per feature
    split: str

    def ranking(self) -> list[str]:
        order = np.argsort(-self.values, kind="stable")
        return [self.feature_names[i] for i in order]


@dataclass
class CorrMatrix:
    values: np.ndarray        # p x p, symmetric, unit diagonal
    feature_names: list[str]
    kind: str
    constant_columns: tuple[int, ...] = ()


def feature_importance(model: AdditiveModel, dataset: Dataset,
                       split: str = "train") -> ImportanceReport:
    """Per-feature mean absolute deviation of the contribution from its mean
    over the split; zero exactly when the contribution is constant there."""
    features, _ = dataset.split_arrays(split)
    if features.shape[0] == 0:
        raise ContractError(f"split {split!r} is empty")
    contributions = model.contribution_values(features)
    values = np.array([np.abs(c - c.mean()).mean() for c in contributions])
    names = component_names(model, dataset.feature_names)
    return ImportanceReport(names, values, split)


def component_names(model: AdditiveModel, feature_names: Sequence[str]) -> list[str]:
    """One label per model component; duplicates get a suffix when several
    components read the same input column."""
    inputs = model.spec.resolved_inputs()
    names = [feature_names[i] for i in inputs]
    if len(set(names)) == len(names):
        return names
    return [f"{name}#{k}" for k, name in enumerate(names)]


def corr_matrix(columns: Sequence[np.ndarray], feature_names: Sequence[str],
                kind: str = "raw_features", eps: float = DEFAULT_EPS) -> CorrMatrix:
    """Pairwise epsilon-guarded correlations; constant columns are flagged
    and correlate to 0 off the diagonal, and the diagonal is set to exactly 1."""
    if kind not in CORR_KINDS:
        raise ContractError(f"kind must be one of {CORR_KINDS}, got {kind!r}")
    cols = [np.asarray(c, dtype=np.float64).ravel() for c in columns]
    if len(cols) != len(feature_names):
        raise ContractError(f"{len(feature_names)} names for {len(cols)} columns")
    if len(cols) == 1:
        values = np.array([[1.0]])
    else:
        values = corr_values(cols, eps)
        np.fill_diagonal(values, 1.0)
    constant = tuple(i for i, c in enumerate(cols) if c.max() - c.min() == 0.0)
    return CorrMatrix(values, list(feature_names), kind, constant)


def concurvity_witness(contributions: Sequence[np.ndarray],
                       tol: float = 1e-8) -> np.ndarray | None:
    """Approximate affine dependence among the contributions.

    Stacks [1, c_1, ..., c_p] and runs the standard SVD rank test: if the
    smallest singular value is below tol times the largest, the matching
    right-singular vector is returned as the witness coefficients
    (c_0, c_1, ..., c_p); otherwise None.
    """
    if not contributions:
        raise ContractError("need at least one contribution")
    cols = [np.asarray(c, dtype=np.float64).ravel() for c in contributions]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ContractError("contributions differ in length")
    if n <= len(cols):
        raise ContractError(f"need more rows than columns, got N={n}, p={len(cols)}")
    stacked = np.column_stack([np.ones(n), *cols])
    _, singular, vt = np.linalg.svd(stacked, full_matrices=False)
    if singular[-1] < tol * singular[0]:
        return vt[-1]
    return None


def fit_metrics(prediction: np.ndarray, target: np.ndarray, kind: str) -> dict[str, float]:
    """Regression: rmse and r2 (r2 is NaN for a constant target).
    Binary: bce on logits and thresholded accuracy."""
    pred = np.asarray(prediction, dtype=np.float64).ravel()
    y = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != y.shape:
        raise ContractError(f"shapes differ: {pred.shape} vs {y.shape}")
    if kind == "regression":
        residual = y - pred
        rmse = float(np.sqrt(np.mean(residual ** 2)))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = float("nan") if ss_tot == 0.0 else 1.0 - float(np.sum(residual ** 2)) / ss_tot
        return {"rmse": rmse, "r2": r2}
    if kind == "binary":
        if not np.isin(y, (0.0, 1.0)).all():
            raise DataError("binary metrics require targets in {0, 1}")
        bce = float(np.mean(np.logaddexp(0.0, pred) - y * pred))
        accuracy = float(np.mean((pred > 0.0) == (y == 1.0)))
        return {"bce": bce, "accuracy": accuracy}
    raise ContractError(f"kind must be regression or binary, got {kind!r}")


# ----------------------------------------------------------------------
# CSV emission
# ----------------------------------------------------------------------

def write_importance_csv(reports: Sequence[tuple[int, ImportanceReport]],
                         path: str | Path) -> None:
    """Long format: one row per (seed, feature)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "feature", "importance"])
        for seed, report in reports:
            for name, value in zip(report.feature_names, report.values):
                writer.writerow([seed, name, repr(float(value))])


def write_corr_csv(matrix: CorrMatrix, path: str | Path) -> None:
    """Square layout: header row of names, one labeled row per feature."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", *matrix.feature_names])
        for name, row in zip(matrix.feature_names, matrix.values):
            writer.writerow([name, *[repr(float(v)) for v in row]])
