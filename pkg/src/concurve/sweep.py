"""Trade-off experiments: a grid of penalty strengths crossed with seeds.

Every cell trains an independently initialized model and is a pure function
of (lambda, seed, spec); scheduling order and parallelism degree cannot
change its output.  Failed cells are recorded without aborting siblings.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .diffcore import Tape
from .errors import ConfigError, SweepError
from .models import MlpSpec, ModelSpec, init
from .regularizers import r_perp
from .training import TrainConfig, fit

DEFAULT_LAMBDA_COUNT = 50
DEFAULT_LAMBDA_RANGE = (1e-4, 10.0)
DEFAULT_SEED_COUNT = 10

THREADS_ENV_VAR = "CONCURVE_THREADS"


def default_lambda_grid(count: int = DEFAULT_LAMBDA_COUNT,
                        lo: float = DEFAULT_LAMBDA_RANGE[0],
                        hi: float = DEFAULT_LAMBDA_RANGE[1]) -> list[float]:
    """The exact point 0 plus count-1 log-spaced strengths over [lo, hi]."""
    if count < 1:
        raise ConfigError(f"grid needs at least one point, got {count}")
    if count == 1:
        return [0.0]
    if not 0 < lo < hi:
        raise ConfigError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    grid = np.logspace(math.log10(lo), math.log10(hi), count - 1)
    return [0.0] + [float(v) for v in grid]


def resolve_parallelism(requested: int | None) -> int:
    """Requested worker count, capped by the CONCURVE_THREADS env var."""
    cap = os.environ.get(THREADS_ENV_VAR)
    workers = requested if requested is not None else 1
    if cap is not None:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {cap!r}")
    return max(1, workers)


@dataclass
class SweepSpec:
    dataset: Dataset                  # already standardized/prepared
    model_spec: ModelSpec
    base: TrainConfig                 # per-cell seed and lambda are overridden
    lambdas: list[float]
    seeds: list[int]
    parallelism: int = 1

    def validate(self) -> None:
        if not self.lambdas:
            raise ConfigError("lambda grid is empty")
        if sorted(self.lambdas) != list(self.lambdas):
            raise ConfigError("lambda grid must be sorted ascending")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambda values must be nonnegative")
        if not self.seeds:
            raise ConfigError("seeds list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if any(lam > 0 for lam in self.lambdas) and self.base.reg.kind == "none":
            raise ConfigError("nonzero lambdas need a penalty kind on the base config")
        self.base.validate()
        self.model_spec.validate()


@dataclass
class CellRecord:
    lam: float
    seed: int
    fit: float                        # final validation fit metric
    rperp: float                      # final validation decorrelation measure
    wallclock_s: float
    error: str | None = None


@dataclass
class Aggregate:
    lam: float
    fit_mean: float
    fit_q05: float
    fit_q95: float
    rperp_mean: float
    rperp_q05: float
    rperp_q95: float
    n_ok: int


@dataclass
class SweepResult:
    records: list[CellRecord]
    aggregates: list[Aggregate]


def _run_cell(spec: SweepSpec, lam: float, seed: int) -> CellRecord:
    cfg = replace(spec.base, seed=seed, reg=replace(spec.base.reg, lam=lam))
    tic = time.perf_counter()
    try:
        model = init(spec.model_spec, seed=seed)
        _, report = fit(model, spec.dataset, cfg)
        return CellRecord(lam, seed, report.final_val_fit, report.final_val_rperp,
                          time.perf_counter() - tic)
    except Exception as err:  # a broken cell must not abort its siblings
        return CellRecord(lam, seed, float("nan"), float("nan"),
                          time.perf_counter() - tic,
                          error=f"{type(err).__name__}: {err}")


def aggregate_records(records: list[CellRecord]) -> list[Aggregate]:
    out = []
    for lam in sorted({r.lam for r in records}):
        ok = [r for r in records if r.lam == lam and r.error is None]
        if not ok:
            continue
        fits = np.array([r.fit for r in ok])
        rps = np.array([r.rperp for r in ok])
        out.append(Aggregate(
            lam,
            float(fits.mean()), float(np.quantile(fits, 0.05)), float(np.quantile(fits, 0.95)),
            float(rps.mean()), float(np.quantile(rps, 0.05)), float(np.quantile(rps, 0.95)),
            len(ok)))
    return out


def run_sweep(spec: SweepSpec) -> SweepResult:
    spec.validate()
    cells = [(lam, seed) for lam in spec.lambdas for seed in spec.seeds]
    if spec.parallelism > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            records = list(pool.map(_run_cell, [spec] * len(cells),
                                    [c[0] for c in cells], [c[1] for c in cells]))
    else:
        records = [_run_cell(spec, lam, seed) for lam, seed in cells]
    records.sort(key=lambda r: (r.lam, r.seed))
    if all(r.error is not None for r in records):
        raise SweepError(f"all {len(records)} cells failed; first error: {records[0].error}")
    return SweepResult(records, aggregate_records(records))


def elbow_lambda(result: SweepResult, tolerance: float = 0.10) -> float:
    """Largest strength whose mean fit stays within `tolerance` relative of
    the weakest strength's fit — the point just before the fit degrades."""
    if not result.aggregates:
        raise SweepError("no successful cells to pick an elbow from")
    ref = result.aggregates[0].fit_mean
    best = result.aggregates[0].lam
    for agg in result.aggregates:
        if agg.fit_mean <= ref * (1.0 + tolerance):
            best = agg.lam
    return best


# ----------------------------------------------------------------------
# Emission
# ----------------------------------------------------------------------

def write_records_csv(records: list[CellRecord], path: str | Path) -> None:
    """Per-cell results.  The wallclock_s column is part of the schema but is
    written as NA so that reruns with identical flags produce byte-identical
    CSVs; measured timings live in SweepResult and the run manifest."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "seed", "fit", "rperp", "wallclock_s"])
        for r in records:
            writer.writerow([repr(r.lam), r.seed, repr(r.fit), repr(r.rperp), "NA"])


def write_tradeoff_csv(aggregates: list[Aggregate], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "fit_mean", "fit_q05", "fit_q95",
                         "rperp_mean", "rperp_q05", "rperp_q95", "n"])
        for a in aggregates:
            writer.writerow([repr(a.lam), repr(a.fit_mean), repr(a.fit_q05),
                             repr(a.fit_q95), repr(a.rperp_mean), repr(a.rperp_q05),
                             repr(a.rperp_q95), a.n_ok])


def write_verbose_csv(aggregates: list[Aggregate], path: str | Path) -> None:
    """Long format: the fit and decorrelation series against lambda, separately."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "lambda", "mean", "q05", "q95"])
        for a in aggregates:
            writer.writerow(["fit", repr(a.lam), repr(a.fit_mean),
                             repr(a.fit_q05), repr(a.fit_q95)])
        for a in aggregates:
            writer.writerow(["rperp", repr(a.lam), repr(a.rperp_mean),
                             repr(a.rperp_q05), repr(a.rperp_q95)])


def emit_tradeoff(result: SweepResult, out_dir: str | Path) -> dict[str, Path]:
    """records/tradeoff/verbose CSVs plus the two SVG charts."""
    from . import svgplot

    if not result.records:
        raise SweepError("nothing to emit: empty sweep result")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out_dir / "records.csv",
        "tradeoff": out_dir / "tradeoff.csv",
        "verbose": out_dir / "verbose.csv",
        "tradeoff_svg": out_dir / "tradeoff.svg",
        "verbose_svg": out_dir / "verbose.svg",
    }
    write_records_csv(result.records, paths["records"])
    write_tradeoff_csv(result.aggregates, paths["tradeoff"])
    write_verbose_csv(result.aggregates, paths["verbose"])
    paths["tradeoff_svg"].write_text(svgplot.plot_tradeoff(paths["records"]))
    paths["verbose_svg"].write_text(svgplot.plot_verbose(paths["verbose"]))
    return paths


# ----------------------------------------------------------------------
# Runtime benchmark
# ----------------------------------------------------------------------

@dataclass
class BenchRow:
    features: int
    batch: int
    reps: int
    rperp_ms: float           # penalty forward+backward, mean over reps
    nam_forward_ms: float     # reference 3x128 additive model forward
    overhead_ratio: float


def bench_rperp(feature_counts: list[int], batch_sizes: list[int],
                reps: int = 100, seed: int = 0) -> list[BenchRow]:
    """Mean absolute runtime of the penalty and its overhead relative to the
    forward pass of a 3-layer, 128-unit-per-layer additive model."""
    if any(p < 2 for p in feature_counts):
        raise ConfigError("feature counts must be >= 2")
    if any(b < 2 for b in batch_sizes):
        raise ConfigError("batch sizes must be >= 2")
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    rng = np.random.default_rng(seed)
    rows = []
    for p in feature_counts:
        nam = init(ModelSpec(tuple(MlpSpec((128, 128, 128)) for _ in range(p))), seed=seed)
        for batch in batch_sizes:
            contribs = [rng.normal(size=(batch, 1)) for _ in range(p)]

            def penalty_pass():
                tape = Tape()
                nodes = [tape.param(c) for c in contribs]
                tape.backward(r_perp(tape, nodes))

            x = rng.uniform(size=(batch, p))

            def nam_forward():
                nam.forward(Tape(), x)

            penalty_pass()  # warm-up, untimed
            tic = time.perf_counter()
            for _ in range(reps):
                penalty_pass()
            rperp_ms = (time.perf_counter() - tic) / reps * 1e3

            nam_forward()
            tic = time.perf_counter()
            for _ in range(reps):
                nam_forward()
            nam_ms = (time.perf_counter() - tic) / reps * 1e3

            rows.append(BenchRow(p, batch, reps, rperp_ms, nam_ms,
                                 rperp_ms / nam_ms))
    return rows


def write_bench_csv(rows: list[BenchRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["features", "batch", "reps", "rperp_ms",
                         "nam_forward_ms", "overhead_ratio"])
        for r in rows:
            writer.writerow([r.features, r.batch, r.reps, f"{r.rperp_ms:.6f}",
                             f"{r.nam_forward_ms:.6f}", f"{r.overhead_ratio:.6f}"])
