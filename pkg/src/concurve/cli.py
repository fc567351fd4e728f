"""Command-line driver wiring generators, training, sweeps, metrics, and
benchmarks into reproducible recipes.

Every command writes a manifest before doing real work and finalizes it
afterwards; the manifest alone (resolved arguments plus input fingerprints)
is enough to replay the run.  Parallelism is capped by CONCURVE_THREADS.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, svgplot
from .data import (
    Dataset,
    TOY1_RHO_CHOICES,
    gen_kovacs,
    gen_seasonal,
    gen_toy1,
    gen_toy2,
    load_csv,
    standardize,
    write_csv,
)
from .diffcore import Tape
from .errors import ConcurveError
from .metrics import (
    component_names,
    corr_matrix,
    feature_importance,
    write_corr_csv,
    write_importance_csv,
)
from .models import init, save_checkpoint
from .sweep import (
    SweepSpec,
    bench_rperp,
    default_lambda_grid,
    emit_tradeoff,
    resolve_parallelism,
    run_sweep,
    write_bench_csv,
)
from .training import TrainConfig, fit, get_preset, load_config

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

GENERATORS = ("toy1", "toy2", "kovacs", "seasonal")
SHAPE_GRID_POINTS = 256


class UsageError(ConcurveError):
    """Bad flags or paths; maps to exit code 2."""


# ----------------------------------------------------------------------
# Manifests
# ----------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """Written with status=running before work starts, finalized to
    completed/failed with the produced-output inventory afterwards."""

    def __init__(self, path: Path, command: str, argv: list[str],
                 config: dict, seeds: list[int], outputs: list[str],
                 dataset: dict | None = None):
        self.path = path
        self.doc = {
            "tool": "concurve",
            "version": __version__,
            "command": command,
            "argv": argv,
            "status": "running",
            "config": config,
            "dataset": dataset,
            "seeds": seeds,
            "outputs": outputs,
            "produced": [],
            "failures": [],
            "error": None,
            "elapsed_s": None,
        }
        self._tic = time.perf_counter()
        self.write()

    def write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.doc, indent=1, default=str) + "\n")

    def finish(self, status: str, error: str | None = None,
               failures: list[dict] | None = None) -> None:
        self.doc["status"] = status
        self.doc["error"] = error
        self.doc["failures"] = failures or []
        self.doc["elapsed_s"] = round(time.perf_counter() - self._tic, 3)
        produced = []
        base = self.path.parent
        for name in self.doc["outputs"]:
            candidate = base / name
            if candidate.exists():
                produced.append({"file": name, "sha256": _sha256(candidate)})
        self.doc["produced"] = produced
        if status == "completed":
            missing = [n for n in self.doc["outputs"]
                       if not (base / n).exists()]
            if missing:
                self.doc["status"] = "failed"
                self.doc["error"] = f"missing outputs: {missing}"
        self.write()


def dataset_fingerprint(path: Path) -> dict:
    return {"path": str(path), "sha256": _sha256(path)}


def replay_from_manifest(manifest_path: str | Path) -> int:
    """Re-execute a command from its recorded argv."""
    doc = json.loads(Path(manifest_path).read_text())
    return main(doc["argv"])


# ----------------------------------------------------------------------
# Shared helpers
# ----------------------------------------------------------------------

def _require_file(path_text: str) -> Path:
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path


def _prepare(args) -> tuple[Dataset, "object", TrainConfig]:
    """Load + standardize the dataset and resolve (preset, config) flags."""
    data_path = _require_file(args.data)
    if args.config is not None and args.preset_given:
        raise UsageError("--preset and --config conflict; pass one")
    preset = get_preset(args.preset)
    if args.config is not None:
        cfg = load_config(_require_file(args.config))
    else:
        cfg = preset.base_config()
    ds = load_csv(data_path, target_column=args.target_column, task=args.task)
    if preset.standardize_features:
        ds = standardize(ds)
    else:
        ds = standardize(ds, skip_features=tuple(ds.feature_names))

    if args.reg is not None:
        cfg.reg = replace(cfg.reg, kind=args.reg)
    if args.lam is not None:
        if args.lam < 0:
            raise UsageError(f"--lambda must be nonnegative, got {args.lam}")
        kind = cfg.reg.kind if cfg.reg.kind != "none" else "concurvity"
        cfg.reg = replace(cfg.reg, lam=args.lam, kind=kind)
    for field_name in ("epochs", "batch_size", "seed"):
        value = getattr(args, field_name)
        if value is not None:
            setattr(cfg, field_name, value)
    if args.lr is not None:
        cfg.lr = args.lr
    if args.weight_decay is not None:
        cfg.weight_decay = args.weight_decay
    if ds.task == "binary":
        cfg.loss = "bce_logits"
    cfg.validate()
    return ds, preset, cfg


def _config_snapshot(cfg: TrainConfig, extra: dict | None = None) -> dict:
    doc = asdict(cfg)
    if extra:
        doc.update(extra)
    return doc


# ----------------------------------------------------------------------
# gen
# ----------------------------------------------------------------------

def cmd_gen(args, argv: list[str]) -> int:
    out = Path(args.out)
    if args.name == "toy1":
        if not args.rho_free and args.rho not in TOY1_RHO_CHOICES:
            raise UsageError(f"--rho must be one of {TOY1_RHO_CHOICES} "
                             f"(use --rho-free for other values)")
        ds = gen_toy1(args.n, rho=args.rho, seed=args.seed,
                      allow_any_rho=args.rho_free)
        params = {"n": args.n, "rho": args.rho, "seed": args.seed}
    elif args.name == "toy2":
        ds = gen_toy2(args.n, seed=args.seed)
        params = {"n": args.n, "seed": args.seed}
    elif args.name == "kovacs":
        ds = gen_kovacs(args.n, seed=args.seed, sigma1=args.sigma1, sigma2=args.sigma2)
        params = {"n": args.n, "seed": args.seed,
                  "sigma1": args.sigma1, "sigma2": args.sigma2}
    else:
        ds = gen_seasonal(args.hours, seed=args.seed, shape=args.shape)
        params = {"hours": args.hours, "seed": args.seed, "shape": args.shape}

    manifest = RunManifest(out.with_suffix(out.suffix + ".manifest.json"),
                           "gen", argv, {"generator": args.name, **params},
                           seeds=[args.seed], outputs=[out.name])
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(ds, out)
        manifest.doc["dataset"] = dataset_fingerprint(out)
        manifest.finish("completed")
    except Exception as err:
        manifest.finish("failed", error=str(err))
        raise
    print(f"wrote {out} ({ds.n_rows} rows, {ds.n_features} features)")
    return EXIT_OK


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------

TRAIN_OUTPUTS = ("report.csv", "checkpoint.json", "importance.csv",
                 "corr_features.csv", "corr_contributions.csv", "shapes.csv")


def _shape_grid_csv(model, dataset: Dataset, path: Path, seed: int) -> None:
    """Contribution of every component on a fixed grid over its input column."""
    import csv as _csv

    x_train, _ = dataset.split_arrays("train")
    names = component_names(model, dataset.feature_names)
    with path.open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["feature", "x", "contribution", "seed"])
        for comp, col, name in zip(model.components, model.spec.resolved_inputs(), names):
            lo = x_train[:, col].min()
            hi = x_train[:, col].max()
            grid = np.linspace(lo, hi, SHAPE_GRID_POINTS).reshape(-1, 1)
            tape = Tape()
            ones = tape.constant(np.ones((SHAPE_GRID_POINTS, 1)))
            contrib, _nodes = comp.forward(tape, tape.constant(grid), ones)
            for gx, gy in zip(grid.ravel(), contrib.value.ravel()):
                writer.writerow([name, repr(float(gx)), repr(float(gy)), seed])


def cmd_train(args, argv: list[str]) -> int:
    ds, preset, cfg = _prepare(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        out_dir / "manifest.json", "train", argv,
        _config_snapshot(cfg, {"preset": preset.name}),
        seeds=[cfg.seed], outputs=list(TRAIN_OUTPUTS),
        dataset=dataset_fingerprint(Path(args.data)))
    try:
        model = init(preset.model_spec(ds.n_features), seed=cfg.seed)
        model, report = fit(model, ds, cfg)

        report.to_csv(out_dir / "report.csv")
        save_checkpoint(model, out_dir / "checkpoint.json")
        importance = feature_importance(model, ds, split="train")
        write_importance_csv([(cfg.seed, importance)], out_dir / "importance.csv")

        eval_split = ds.eval_split_name()
        x_eval, _ = ds.split_arrays(eval_split)
        raw = corr_matrix(list(x_eval.T), ds.feature_names, kind="raw_features",
                          eps=cfg.reg.eps)
        write_corr_csv(raw, out_dir / "corr_features.csv")
        contribs = model.contribution_values(x_eval)
        transformed = corr_matrix([c.ravel() for c in contribs],
                                  component_names(model, ds.feature_names),
                                  kind="transformed_features", eps=cfg.reg.eps)
        write_corr_csv(transformed, out_dir / "corr_contributions.csv")
        _shape_grid_csv(model, ds, out_dir / "shapes.csv", cfg.seed)
        manifest.finish("completed")
    except Exception as err:
        manifest.finish("failed", error=str(err))
        raise
    print(f"trained: final val {report.fit_metric_name}="
          f"{report.final_val_fit:.4f} rperp={report.final_val_rperp:.4f}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------

def cmd_sweep(args, argv: list[str]) -> int:
    ds, preset, cfg = _prepare(args)
    if cfg.reg.kind == "none":
        cfg.reg = replace(cfg.reg, kind="concurvity")
    lambdas = default_lambda_grid(args.lambdas, args.lambda_min, args.lambda_max)
    seeds = list(range(args.seeds))
    jobs = resolve_parallelism(args.jobs)
    spec = SweepSpec(ds, preset.model_spec(ds.n_features), cfg, lambdas, seeds,
                     parallelism=jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = ["records.csv", "tradeoff.csv", "verbose.csv",
               "tradeoff.svg", "verbose.svg"]
    manifest = RunManifest(
        out_dir / "manifest.json", "sweep", argv,
        _config_snapshot(cfg, {"preset": preset.name, "lambdas": lambdas,
                               "parallelism": jobs}),
        seeds=seeds, outputs=outputs,
        dataset=dataset_fingerprint(Path(args.data)))
    try:
        result = run_sweep(spec)
        emit_tradeoff(result, out_dir)
        failures = [{"lambda": r.lam, "seed": r.seed, "error": r.error}
                    for r in result.records if r.error is not None]
        manifest.doc["cell_timings"] = [
            {"lambda": r.lam, "seed": r.seed, "wallclock_s": round(r.wallclock_s, 3)}
            for r in result.records]
        manifest.finish("completed" if not failures else "failed",
                        error=f"{len(failures)} cell(s) failed" if failures else None,
                        failures=failures)
    except Exception as err:
        manifest.finish("failed", error=str(err))
        raise
    ok = sum(1 for r in result.records if r.error is None)
    print(f"sweep: {ok}/{len(result.records)} cells succeeded; outputs in {out_dir}")
    return EXIT_OK if ok == len(result.records) else EXIT_FAILURE


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------

def cmd_bench(args, argv: list[str]) -> int:
    features = [int(v) for v in args.features.split(",")]
    batches = [int(v) for v in args.batches.split(",")]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        out_dir / "manifest.json", "bench", argv,
        {"features": features, "batches": batches, "reps": args.reps,
         "seed": args.seed},
        seeds=[args.seed], outputs=["bench.csv"])
    try:
        rows = bench_rperp(features, batches, reps=args.reps, seed=args.seed)
        write_bench_csv(rows, out_dir / "bench.csv")
        manifest.finish("completed")
    except Exception as err:
        manifest.finish("failed", error=str(err))
        raise
    for r in rows:
        print(f"p={r.features:4d} batch={r.batch:5d} penalty={r.rperp_ms:.3f}ms "
              f"reference-forward={r.nam_forward_ms:.3f}ms "
              f"overhead={r.overhead_ratio:.3f}")
    return EXIT_OK


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

REPORT_RENDERERS = {
    "records.csv": ("tradeoff.svg", svgplot.plot_tradeoff),
    "verbose.csv": ("verbose.svg", svgplot.plot_verbose),
    "shapes.csv": ("shapes.svg", svgplot.plot_shapes),
    "importance.csv": ("importance.svg", svgplot.plot_importance),
    "corr_features.csv": ("corr_features.svg", svgplot.plot_corr),
    "corr_contributions.csv": ("corr_contributions.svg", svgplot.plot_corr),
}


def cmd_report(args, argv: list[str]) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"no such directory: {run_dir}")
    rendered = []
    for csv_name, (svg_name, renderer) in REPORT_RENDERERS.items():
        src = run_dir / csv_name
        if not src.exists():
            continue
        (run_dir / svg_name).write_text(renderer(src))
        rendered.append(svg_name)
    if not rendered:
        raise UsageError(f"{run_dir}: no recognized CSVs "
                         f"({', '.join(sorted(REPORT_RENDERERS))})")
    print(f"rendered {', '.join(rendered)} in {run_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="dataset CSV path")
    p.add_argument("--preset", default="toy", choices=("toy", "seasonal"))
    p.add_argument("--config", default=None, help="flat key=value training config file")
    p.add_argument("--target-column", default="y")
    p.add_argument("--task", default="regression", choices=("regression", "binary"))
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="penalty strength")
    p.add_argument("--reg", default=None, choices=("none", "concurvity", "l1_contrib"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concurve",
        description="Train additive models with a transformed-feature "
                    "decorrelation penalty and reproduce the trade-off experiments.")
    parser.add_argument("--version", action="version", version=f"concurve {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    p.add_argument("name", choices=GENERATORS,
                   help=f"one of {', '.join(GENERATORS)}")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--hours", type=int, default=24 * 7 * 12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.0,
                   help="toy1 feature correlation setting")
    p.add_argument("--rho-free", action="store_true",
                   help="allow rho values outside the published settings")
    p.add_argument("--sigma1", type=float, default=0.05)
    p.add_argument("--sigma2", type=float, default=0.5)
    p.add_argument("--shape", default="smooth", choices=("smooth", "step"))

    p = sub.add_parser("train", help="train one model and emit its artifacts")
    _add_train_flags(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("sweep", help="train a strength-grid x seed-grid of models")
    _add_train_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--lambdas", type=int, default=50,
                   help="grid size (0 plus log-spaced strengths)")
    p.add_argument("--lambda-min", type=float, default=1e-4)
    p.add_argument("--lambda-max", type=float, default=10.0)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, 0..n-1")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (capped by CONCURVE_THREADS)")

    p = sub.add_parser("bench", help="time the penalty against a reference forward pass")
    p.add_argument("--features", default="8,64,256")
    p.add_argument("--batches", default="128,512")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="render SVG charts for a run directory")
    p.add_argument("run_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.preset_given = any(a == "--preset" or a.startswith("--preset=")
                            for a in argv)
    handlers = {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep,
                "bench": cmd_bench, "report": cmd_report}
    try:
        return handlers[args.command](args, argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConcurveError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
