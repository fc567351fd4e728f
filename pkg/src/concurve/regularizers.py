"""Differentiable penalties on the per-feature contributions.

The decorrelation penalty is the mean absolute pairwise Pearson correlation
of the transformed features, computed per mini-batch on the tape so its
gradient reaches every shape-function parameter.  The pairwise loop is
vectorized: one centered matrix, one Gram product, one norm outer product.

An epsilon is added to the denominator *product*, so a constant contribution
correlates to ~0 instead of being undefined.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffcore import Node, Tape
from .errors import ConfigError, ContractError

DEFAULT_EPS = 1e-12
DEFAULT_WARMUP = 0.05

REG_KINDS = ("none", "concurvity", "l1_contrib")


@dataclass
class RegConfig:
    """Which penalty to apply, how strongly, and when it switches on."""

    kind: str = "none"
    lam: float = 0.0
    eps: float = DEFAULT_EPS
    warmup_fraction: float = DEFAULT_WARMUP

    def validate(self) -> None:
        if self.kind not in REG_KINDS:
            raise ConfigError(f"reg kind must be one of {REG_KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError(f"warmup_fraction must lie in [0, 1], got {self.warmup_fraction}")


def _check_column(v: Node, name: str) -> int:
    rows, cols = v.value.shape
    if cols != 1:
        raise ContractError(f"{name} must be a column vector, got shape {v.value.shape}")
    if rows < 2:
        raise ContractError(f"{name} needs at least 2 rows, got {rows}")
    return rows


def pearson_corr(tape: Tape, v: Node, w: Node, eps: float = DEFAULT_EPS) -> Node:
    """<v - mean(v), w - mean(w)> / (||v - mean(v)|| * ||w - mean(w)|| + eps)."""
    n = _check_column(v, "v")
    if _check_column(w, "w") != n:
        raise ContractError(f"v and w differ in length: {n} vs {w.value.shape[0]}")
    ones = tape.constant(np.ones((n, 1)))
    vc = v - tape.matmul(ones, tape.mean(v))
    wc = w - tape.matmul(ones, tape.mean(w))
    num = tape.sum(vc * wc)
    norm_v = tape.sqrt(tape.sum(tape.square(vc)))
    norm_w = tape.sqrt(tape.sum(tape.square(wc)))
    return num / (norm_v * norm_w + tape.constant(eps))


def corr_matrix_node(tape: Tape, contributions: Sequence[Node],
                     eps: float = DEFAULT_EPS) -> Node:
    """p x p matrix of pairwise epsilon-guarded Pearson correlations."""
    if len(contributions) < 2:
        raise ContractError("need at least 2 contributions for a correlation matrix")
    n = _check_column(contributions[0], "contributions[0]")
    for i, c in enumerate(contributions[1:], start=1):
        if _check_column(c, f"contributions[{i}]") != n:
            raise ContractError("contributions differ in length")
    p = len(contributions)
    mat = tape.concat_cols(list(contributions))
    ones = tape.constant(np.ones((n, 1)))
    centered = mat - tape.matmul(ones, tape.mean(mat, axis="rows"))
    gram = tape.matmul(tape.transpose(centered), centered)
    norms = tape.sqrt(tape.sum(tape.square(centered), axis="rows"))
    norm_products = tape.matmul(tape.transpose(norms), norms)
    return gram / (norm_products + tape.constant(np.full((p, p), eps)))


def r_perp(tape: Tape, contributions: Sequence[Node],
           eps: float = DEFAULT_EPS) -> Node:
    """Mean absolute pairwise correlation over all p(p-1)/2 unordered pairs.

    Vacuous for fewer than two contributions: returns an exact 0 constant
    and emits a warning.
    """
    p = len(contributions)
    if p < 2:
        warnings.warn("decorrelation penalty is vacuous with fewer than 2 contributions",
                      stacklevel=2)
        return tape.constant(0.0)
    corr = corr_matrix_node(tape, contributions, eps)
    off_diagonal = tape.constant(1.0 - np.eye(p))
    total = tape.sum(tape.abs(corr) * off_diagonal)
    return total * tape.constant(1.0 / (p * (p - 1)))


def l1_contrib(tape: Tape, contributions: Sequence[Node],
               weights: Sequence[float] | None = None) -> Node:
    """Per-sample sum of absolute contributions, averaged over the batch."""
    if not contributions:
        raise ContractError("need at least one contribution")
    n = _check_column(contributions[0], "contributions[0]")
    mat = tape.abs(tape.concat_cols(list(contributions)))
    if weights is not None:
        if len(weights) != len(contributions):
            raise ContractError(f"{len(weights)} weights for {len(contributions)} contributions")
        row = np.asarray(weights, dtype=np.float64).reshape(1, -1)
        mat = mat * tape.constant(np.tile(row, (n, 1)))
    return tape.mean(tape.sum(mat, axis="cols"))


def penalty(tape: Tape, cfg: RegConfig, contributions: Sequence[Node],
            step: int, total_steps: int) -> Node:
    """Warm-up-gated penalty term: exactly 0 before warmup_fraction of the
    steps have run, lambda times the configured penalty afterwards."""
    if not 0 <= step < total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps})")
    if cfg.kind == "none" or cfg.lam == 0.0:
        return tape.constant(0.0)
    if step < cfg.warmup_fraction * total_steps:
        return tape.constant(0.0)
    if cfg.kind == "concurvity":
        base = r_perp(tape, contributions, cfg.eps)
    else:
        base = l1_contrib(tape, contributions)
    return base * tape.constant(cfg.lam)


# ----------------------------------------------------------------------
# Forward-only conveniences (shared implementation, throwaway tape)
# ----------------------------------------------------------------------

def measured_rperp(columns: Sequence[np.ndarray], eps: float = DEFAULT_EPS) -> float:
    """R-perp of plain arrays; same code path as the training penalty."""
    tape = Tape()
    nodes = [tape.constant(np.asarray(c, dtype=np.float64).reshape(-1, 1))
             for c in columns]
    return r_perp(tape, nodes, eps).item()


def pearson_value(v: np.ndarray, w: np.ndarray, eps: float = DEFAULT_EPS) -> float:
    tape = Tape()
    return pearson_corr(tape,
                        tape.constant(np.asarray(v, dtype=np.float64).reshape(-1, 1)),
                        tape.constant(np.asarray(w, dtype=np.float64).reshape(-1, 1)),
                        eps).item()


def corr_values(columns: Sequence[np.ndarray], eps: float = DEFAULT_EPS) -> np.ndarray:
    """p x p correlation matrix of plain arrays via the shared tape code."""
    tape = Tape()
    nodes = [tape.constant(np.asarray(c, dtype=np.float64).reshape(-1, 1))
             for c in columns]
    return corr_matrix_node(tape, nodes, eps).value.copy()
