"""Additive models: a global offset plus one shape function per feature.

Each shape function is either a per-feature MLP (tabular data) or a Fourier
seasonality block (time series).  The model is additive by construction —
no weight ever connects two features — which is what keeps every feature's
contribution individually plottable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import Node, Tape
from .errors import ConfigError, DimensionError

ACTIVATIONS = ("relu", "gelu", "elu")
LINKS = ("identity", "logit")

HOURS_PER_DAY = 24.0
HOURS_PER_WEEK = 168.0


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one per-feature MLP: scalar in, scalar out."""

    hidden: tuple[int, ...] = (128, 128, 128)
    activation: str = "gelu"

    def validate(self) -> None:
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, "
                              f"got {self.activation!r}")


@dataclass(frozen=True)
class FourierSpec:
    """One periodic component: sum of n_terms sine/cosine harmonics."""

    period: float
    n_terms: int

    def validate(self) -> None:
        if self.period <= 0:
            raise ConfigError(f"period must be positive, got {self.period}")
        if self.n_terms < 1:
            raise ConfigError(f"n_terms must be >= 1, got {self.n_terms}")


@dataclass(frozen=True)
class ModelSpec:
    """Full additive model layout.

    `inputs` maps each component to the batch column it reads; it defaults
    to the identity (component i reads feature i).  The two-seasonality
    time-series model uses inputs=(0, 0): both blocks read the hour column.
    """

    components: tuple = ()
    inputs: tuple[int, ...] | None = None
    link: str = "identity"

    @property
    def n_features(self) -> int:
        if self.inputs is None:
            return len(self.components)
        return max(self.inputs) + 1

    def resolved_inputs(self) -> tuple[int, ...]:
        if self.inputs is None:
            return tuple(range(len(self.components)))
        return self.inputs

    def validate(self) -> None:
        if not self.components:
            raise ConfigError("model needs at least one component")
        if self.link not in LINKS:
            raise ConfigError(f"link must be one of {LINKS}, got {self.link!r}")
        inputs = self.resolved_inputs()
        if len(inputs) != len(self.components):
            raise ConfigError(
                f"inputs maps {len(inputs)} columns for {len(self.components)} components")
        if any(i < 0 for i in inputs):
            raise ConfigError("input column indices must be nonnegative")
        for c in self.components:
            c.validate()


@dataclass
class ForwardPass:
    """One tape evaluation: prediction, per-feature contributions, live params.

    `param_nodes` is aligned with AdditiveModel.parameters(); after
    tape.backward these nodes carry the gradients for the optimizer.
    """

    prediction: Node
    contributions: list[Node]
    param_nodes: list[Node]


class MlpShape:
    """Scalar-to-scalar MLP; biases stored as 1xW rows."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 activation: str):
        self.weights = weights
        self.biases = biases
        self.activation = activation

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, tape: Tape, x: Node, ones: Node) -> tuple[Node, list[Node]]:
        nodes: list[Node] = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            wn = tape.param(w)
            bn = tape.param(b)
            nodes.extend((wn, bn))
            h = tape.matmul(h, wn) + tape.matmul(ones, bn)
            if i < last:
                h = tape.apply(self.activation, h)
        return h, nodes


class FourierShape:
    """Periodic block: sum_j a_j cos(2 pi j t / period) + b_j sin(2 pi j t / period)."""

    def __init__(self, period: float, n_terms: int,
                 cos_coeffs: np.ndarray, sin_coeffs: np.ndarray):
        self.period = period
        self.n_terms = n_terms
        self.cos_coeffs = cos_coeffs  # (n_terms, 1)
        self.sin_coeffs = sin_coeffs

    def parameters(self) -> list[np.ndarray]:
        return [self.cos_coeffs, self.sin_coeffs]

    def forward(self, tape: Tape, t: Node, ones: Node) -> tuple[Node, list[Node]]:
        freqs = (2.0 * math.pi / self.period) * np.arange(1, self.n_terms + 1)
        angles = tape.matmul(t, tape.constant(freqs.reshape(1, -1)))
        a = tape.param(self.cos_coeffs)
        b = tape.param(self.sin_coeffs)
        out = tape.matmul(tape.cos(angles), a) + tape.matmul(tape.sin(angles), b)
        return out, [a, b]


class AdditiveModel:
    """Global offset beta plus additive per-feature contributions.

    For the logit link the forward pass returns raw logits; the link is
    applied implicitly by the downstream binary cross-entropy on logits.
    """

    def __init__(self, spec: ModelSpec, beta: np.ndarray, components: list):
        self.spec = spec
        self.beta = beta  # (1, 1), trainable
        self.components = components

    @property
    def n_features(self) -> int:
        return self.spec.n_features

    def parameters(self) -> list[np.ndarray]:
        out = [self.beta]
        for comp in self.components:
            out.extend(comp.parameters())
        return out

    def forward(self, tape: Tape, batch: np.ndarray) -> ForwardPass:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.n_features:
            raise DimensionError(
                f"batch has shape {batch.shape}, model expects {self.n_features} feature column(s)")
        n = batch.shape[0]
        ones = tape.constant(np.ones((n, 1)))
        beta_node = tape.param(self.beta)
        param_nodes = [beta_node]
        contributions: list[Node] = []
        for comp, col in zip(self.components, self.spec.resolved_inputs()):
            x = tape.constant(batch[:, [col]])
            contrib, nodes = comp.forward(tape, x, ones)
            contributions.append(contrib)
            param_nodes.extend(nodes)
        prediction = tape.matmul(ones, beta_node)
        for contrib in contributions:
            prediction = prediction + contrib
        return ForwardPass(prediction, contributions, param_nodes)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Prediction values on a fresh tape (logits for the logit link)."""
        return self.forward(Tape(), batch).prediction.value.copy()

    def contribution_values(self, batch: np.ndarray) -> list[np.ndarray]:
        fp = self.forward(Tape(), batch)
        return [c.value.copy() for c in fp.contributions]


def _kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init(spec: ModelSpec, seed: int) -> AdditiveModel:
    """Seeded initialization: Kaiming-uniform weights, zero biases and offset,
    near-zero Fourier coefficients."""
    spec.validate()
    rng = np.random.default_rng(seed)
    components = []
    for comp_spec in spec.components:
        if isinstance(comp_spec, MlpSpec):
            widths = (1, *comp_spec.hidden, 1)
            weights = [_kaiming_uniform(rng, widths[i], widths[i + 1])
                       for i in range(len(widths) - 1)]
            biases = [np.zeros((1, widths[i + 1])) for i in range(len(widths) - 1)]
            components.append(MlpShape(weights, biases, comp_spec.activation))
        elif isinstance(comp_spec, FourierSpec):
            k = comp_spec.n_terms
            components.append(FourierShape(
                comp_spec.period, k,
                rng.uniform(-0.01, 0.01, size=(k, 1)),
                rng.uniform(-0.01, 0.01, size=(k, 1))))
        else:
            raise ConfigError(f"unknown component spec {type(comp_spec).__name__}")
    return AdditiveModel(spec, np.zeros((1, 1)), components)


def reduced_prophet(model: AdditiveModel, hours: np.ndarray) -> np.ndarray:
    """Daily-plus-weekly seasonal prediction: sum of the two periodic blocks,
    no offset and no trend term."""
    comps = model.components
    if len(comps) != 2 or not all(isinstance(c, FourierShape) for c in comps):
        raise ConfigError("reduced seasonal prediction needs exactly two Fourier components")
    periods = sorted(c.period for c in comps)
    if periods != [HOURS_PER_DAY, HOURS_PER_WEEK]:
        raise ConfigError(
            f"expected periods {HOURS_PER_DAY} and {HOURS_PER_WEEK} hours, got {periods}")
    t = np.asarray(hours, dtype=np.float64).reshape(-1, 1)
    tape = Tape()
    ones = tape.constant(np.ones((t.shape[0], 1)))
    t_node = tape.constant(t)
    total = None
    for comp in comps:
        contrib, _ = comp.forward(tape, t_node, ones)
        total = contrib if total is None else total + contrib
    return total.value.copy()


# ----------------------------------------------------------------------
# Checkpointing
# ----------------------------------------------------------------------

CHECKPOINT_FORMAT = "concurve-model"
CHECKPOINT_VERSION = 1


def _spec_to_doc(spec: ModelSpec) -> dict:
    comps = []
    for c in spec.components:
        if isinstance(c, MlpSpec):
            comps.append({"kind": "mlp", "hidden": list(c.hidden),
                          "activation": c.activation})
        else:
            comps.append({"kind": "fourier", "period": c.period,
                          "n_terms": c.n_terms})
    return {"components": comps,
            "inputs": list(spec.resolved_inputs()),
            "link": spec.link}


def _spec_from_doc(doc: dict) -> ModelSpec:
    comps = []
    for c in doc["components"]:
        if c["kind"] == "mlp":
            comps.append(MlpSpec(tuple(c["hidden"]), c["activation"]))
        elif c["kind"] == "fourier":
            comps.append(FourierSpec(c["period"], c["n_terms"]))
        else:
            raise ConfigError(f"unknown component kind {c['kind']!r} in checkpoint")
    inputs = tuple(doc["inputs"])
    if inputs == tuple(range(len(comps))):
        inputs = None
    return ModelSpec(tuple(comps), inputs, doc["link"])


def save_checkpoint(model: AdditiveModel, path: str | Path) -> None:
    """Flat JSON document: spec plus parameter arrays; round-trips exactly
    (floats are serialized via repr, which is lossless for float64)."""
    comps = []
    for comp in model.components:
        if isinstance(comp, MlpShape):
            comps.append({"kind": "mlp", "activation": comp.activation,
                          "weights": [w.tolist() for w in comp.weights],
                          "biases": [b.tolist() for b in comp.biases]})
        else:
            comps.append({"kind": "fourier", "period": comp.period,
                          "n_terms": comp.n_terms,
                          "cos": comp.cos_coeffs.tolist(),
                          "sin": comp.sin_coeffs.tolist()})
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "spec": _spec_to_doc(model.spec),
           "beta": model.beta.tolist(),
           "components": comps}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path: str | Path) -> AdditiveModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    spec = _spec_from_doc(doc["spec"])
    components = []
    for c in doc["components"]:
        if c["kind"] == "mlp":
            components.append(MlpShape(
                [np.array(w, dtype=np.float64) for w in c["weights"]],
                [np.array(b, dtype=np.float64) for b in c["biases"]],
                c["activation"]))
        else:
            components.append(FourierShape(
                c["period"], c["n_terms"],
                np.array(c["cos"], dtype=np.float64),
                np.array(c["sin"], dtype=np.float64)))
    return AdditiveModel(spec, np.array(doc["beta"], dtype=np.float64), components)
