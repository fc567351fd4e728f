"""Mini-batch fitting loop: AdamW, cosine-annealed learning rate, warm-up-gated
decorrelation penalty, deterministic seeding.

One fit call is single-threaded and fully reproducible: the shuffle stream,
the optimizer state, and every tape op are functions of (seed, config, data)
alone.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from math import cos, pi
from pathlib import Path

import numpy as np

from .data import Dataset
from .diffcore import Node, Tape
from .errors import ConfigError, ContractError, DataError, DivergenceError
from .models import AdditiveModel, FourierSpec, MlpSpec, ModelSpec
from .regularizers import RegConfig, penalty, r_perp

LOSS_KINDS = ("mse", "bce_logits")


@dataclass
class TrainConfig:
    loss: str = "mse"
    lr: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 50
    batch_size: int = 128
    seed: int = 0
    reg: RegConfig = field(default_factory=RegConfig)
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 (correlations need at "
                              f"least 2 rows), got {self.batch_size}")
        self.reg.validate()


@dataclass
class TrainReport:
    loss_kind: str
    fit_metric_name: str                 # "rmse" or "bce"
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_rperp: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    step_penalties: list[float] = field(default_factory=list)
    final_val_fit: float = float("nan")
    final_val_rperp: float = float("nan")

    def to_csv(self, path: str | Path) -> None:
        """Per-epoch curves; wall-clock stays out of the CSV so reruns are
        byte-identical."""
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_rperp"])
            for e, (tr, vl, rp) in enumerate(
                    zip(self.train_loss, self.val_loss, self.val_rperp)):
                writer.writerow([e, repr(tr), repr(vl), repr(rp)])


# ----------------------------------------------------------------------
# Loss and schedule
# ----------------------------------------------------------------------

def loss(tape: Tape, kind: str, prediction: Node, target: np.ndarray) -> Node:
    """mse: mean squared residual.  bce_logits: mean softplus(logit) minus
    target*logit, the overflow-safe form of binary cross entropy on logits."""
    y = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if y.shape != prediction.value.shape:
        raise ContractError(f"target shape {y.shape} does not match "
                            f"prediction {prediction.value.shape}")
    if kind == "mse":
        diff = prediction - tape.constant(y)
        return tape.mean(tape.square(diff))
    if kind == "bce_logits":
        if not np.isin(y, (0.0, 1.0)).all():
            raise DataError("bce_logits requires targets in {0, 1}")
        shape = y.shape
        # softplus(x) = relu(x) + log(1 + exp(-|x|)), stable for any x
        neg_abs = tape.abs(prediction) * tape.constant(np.full(shape, -1.0))
        soft = tape.relu(prediction) + tape.log(
            tape.constant(np.ones(shape)) + tape.exp(neg_abs))
        return tape.mean(soft - tape.constant(y) * prediction)
    raise ConfigError(f"unknown loss kind {kind!r}")


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine annealing from base_lr down to exactly 0, no restarts."""
    if not 0 <= step <= total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + cos(pi * step / total_steps))


class AdamW:
    """Standard AdamW with bias correction and decoupled decay.

    Decay applies uniformly to every trainable array, offset and Fourier
    coefficients included, and is scaled by the scheduled learning rate
    (param -= lr * wd * param).
    """

    def __init__(self, params: list[np.ndarray], weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        if len(grads) != len(self.params):
            raise ContractError(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ContractError(f"gradient shape {g.shape} != param shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                p -= lr * self.weight_decay * p


# ----------------------------------------------------------------------
# Fit loop
# ----------------------------------------------------------------------

def _count_batches(n: int, batch_size: int) -> int:
    # final short batch is kept if it has >= 2 rows, dropped if it is a singleton
    full, rem = divmod(n, batch_size)
    return full + (1 if rem >= 2 else 0)


def evaluate(model: AdditiveModel, features: np.ndarray, target: np.ndarray,
             loss_kind: str, eps: float) -> tuple[float, float]:
    """Data loss and measured decorrelation penalty over a full split in one
    pass (never a batch average)."""
    tape = Tape()
    fp = model.forward(tape, features)
    data_loss = loss(tape, loss_kind, fp.prediction, target).item()
    if len(fp.contributions) >= 2:
        rp = r_perp(tape, fp.contributions, eps).item()
    else:
        rp = 0.0
    return data_loss, rp


def fit(model: AdditiveModel, dataset: Dataset, cfg: TrainConfig
        ) -> tuple[AdditiveModel, TrainReport]:
    """Train in place and report per-epoch curves plus final validation
    metrics.  Identical (model, config, data) reruns are bit-identical."""
    cfg.validate()
    x_train, y_train = dataset.split_arrays("train")
    x_val, y_val = dataset.split_arrays(dataset.eval_split_name())
    n = x_train.shape[0]
    if n < 2:
        raise DataError(f"train split has {n} rows, need at least 2")
    if x_val.shape[0] == 0:
        raise DataError("evaluation split is empty")
    if dataset.task == "binary" and cfg.loss != "bce_logits":
        raise ConfigError("binary task requires the bce_logits loss")

    batches_per_epoch = _count_batches(n, cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    rng = np.random.default_rng(cfg.seed)
    optimizer = AdamW(model.parameters(), cfg.weight_decay, cfg.betas, cfg.adam_eps)
    fit_metric = "rmse" if cfg.loss == "mse" else "bce"
    report = TrainReport(cfg.loss, fit_metric)

    step = 0
    for _epoch in range(cfg.epochs):
        tic = time.perf_counter()
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue
            tape = Tape()
            fp = model.forward(tape, x_train[idx])
            data_loss = loss(tape, cfg.loss, fp.prediction, y_train[idx])
            if not np.isfinite(data_loss.value[0, 0]):
                raise DivergenceError(f"non-finite loss at optimizer step {step}")
            pen = penalty(tape, cfg.reg, fp.contributions, step, total_steps)
            objective = data_loss + pen
            tape.backward(objective)
            optimizer.step([node.grad for node in fp.param_nodes],
                           cosine_lr(cfg.lr, step, total_steps))
            batch_losses.append(data_loss.item())
            report.step_penalties.append(pen.item())
            step += 1
        val_loss, val_rp = evaluate(model, x_val, y_val, cfg.loss, cfg.reg.eps)
        report.train_loss.append(float(np.mean(batch_losses)))
        report.val_loss.append(val_loss)
        report.val_rperp.append(val_rp)
        report.epoch_seconds.append(time.perf_counter() - tic)

    final_loss, final_rp = evaluate(model, x_val, y_val, cfg.loss, cfg.reg.eps)
    report.final_val_fit = final_loss ** 0.5 if cfg.loss == "mse" else final_loss
    report.final_val_rperp = final_rp
    return model, report


# ----------------------------------------------------------------------
# Presets and config files
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    """A shipped architecture + optimizer recipe for one dataset family."""

    name: str
    model_kind: str                      # "mlp" or "seasonal"
    config: TrainConfig
    hidden: tuple[int, ...] = (128, 128, 128)
    activation: str = "gelu"
    fourier_terms: int = 50
    standardize_features: bool = True

    def model_spec(self, n_features: int) -> ModelSpec:
        if self.model_kind == "mlp":
            return ModelSpec(tuple(MlpSpec(self.hidden, self.activation)
                                   for _ in range(n_features)))
        if self.model_kind == "seasonal":
            if n_features != 1:
                raise ConfigError(f"the seasonal preset expects a single time "
                                  f"column, got {n_features} features")
            k = self.fourier_terms
            return ModelSpec((FourierSpec(24.0, k), FourierSpec(168.0, k)),
                             inputs=(0, 0))
        raise ConfigError(f"unknown model kind {self.model_kind!r}")

    def base_config(self) -> TrainConfig:
        return replace(self.config, reg=replace(self.config.reg))


PRESETS: dict[str, Preset] = {
    # 3x128 GELU networks, lr 1e-3, 50 epochs, batch 128, no weight decay;
    # shared by both two-feature examples and the seven-feature example.
    "toy": Preset(
        name="toy",
        model_kind="mlp",
        config=TrainConfig(loss="mse", lr=1e-3, weight_decay=0.0,
                           epochs=50, batch_size=128),
    ),
    # Two Fourier seasonality blocks (24 h and 168 h) on one hour column;
    # linear in its coefficients, so a higher learning rate converges fast.
    "seasonal": Preset(
        name="seasonal",
        model_kind="seasonal",
        config=TrainConfig(loss="mse", lr=1e-2, weight_decay=0.0,
                           epochs=40, batch_size=128),
        fourier_terms=50,
        standardize_features=False,
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r} (have {sorted(PRESETS)})")


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    """Flat key=value file; floats via repr, so loading reproduces the exact
    configuration."""
    lines = [
        f"loss={cfg.loss}",
        f"lr={cfg.lr!r}",
        f"weight_decay={cfg.weight_decay!r}",
        f"epochs={cfg.epochs}",
        f"batch_size={cfg.batch_size}",
        f"seed={cfg.seed}",
        f"beta1={cfg.betas[0]!r}",
        f"beta2={cfg.betas[1]!r}",
        f"adam_eps={cfg.adam_eps!r}",
        f"reg_kind={cfg.reg.kind}",
        f"lambda={cfg.reg.lam!r}",
        f"reg_eps={cfg.reg.eps!r}",
        f"warmup_fraction={cfg.reg.warmup_fraction!r}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path: str | Path) -> TrainConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    try:
        cfg = TrainConfig(
            loss=values.get("loss", "mse"),
            lr=float(values.get("lr", "1e-3")),
            weight_decay=float(values.get("weight_decay", "0.0")),
            epochs=int(values.get("epochs", "50")),
            batch_size=int(values.get("batch_size", "128")),
            seed=int(values.get("seed", "0")),
            betas=(float(values.get("beta1", "0.9")), float(values.get("beta2", "0.999"))),
            adam_eps=float(values.get("adam_eps", "1e-8")),
            reg=RegConfig(
                kind=values.get("reg_kind", "none"),
                lam=float(values.get("lambda", "0.0")),
                eps=float(values.get("reg_eps", "1e-12")),
                warmup_fraction=float(values.get("warmup_fraction", "0.05")),
            ),
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}")
    cfg.validate()
    return cfg
