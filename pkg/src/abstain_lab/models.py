"""Hypothesis classes and trainers.

Two regimes:

* finite classes, small enough to enumerate, for exact ERM and the theory
  checks;
* parametric scorers (linear models and a small fully-connected net with
  exact reverse-mode gradients) trained by plain seeded (sub)gradient
  descent. No momentum, no adaptive steps: determinism beats speed at this
  scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .core import (
    Array,
    NEGATIVE,
    POSITIVE,
    Role,
    ScoredHypothesis,
    decision_hypothesis,
    rng_from_seed,
)
from .losses import LossValue

MAX_FINITE_CLASS = 10**6
DIVERGENCE_LIMIT = 1e6
MODEL_FORMAT_VERSION = 1


def _sigmoid(v: Array) -> Array:
    out = np.empty_like(v, dtype=float)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# Finite classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteClass:
    """Explicit list of {+1, -1} decision functions over feature batches."""

    hypotheses: list
    description: str = ""

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("finite class must be nonempty")
        if len(self.hypotheses) > MAX_FINITE_CLASS:
            raise ValueError("finite class too large to enumerate")

    def __len__(self) -> int:
        return len(self.hypotheses)

    def decisions_matrix(self, x: Array) -> Array:
        """(k, n) matrix of decisions of every hypothesis on every sample."""
        return np.stack([np.asarray(h(x), dtype=int) for h in self.hypotheses])

    def as_hypothesis(self, index: int, role: Role, meta: dict | None = None) -> ScoredHypothesis:
        info = {"class": self.description, "index": index}
        info.update(meta or {})
        return decision_hypothesis(role, self.hypotheses[index], meta=info)


def _threshold_fn(t: float, orientation: str, coordinate: int):
    if orientation == "ge":
        return lambda x, t=t, c=coordinate: np.where(x[:, c] >= t, POSITIVE, NEGATIVE)
    return lambda x, t=t, c=coordinate: np.where(x[:, c] <= t, POSITIVE, NEGATIVE)


def enumerate_threshold_selectors(
    grid_lo: float,
    grid_hi: float,
    steps: int,
    orientation: Literal["ge", "le", "both"] = "ge",
    coordinate: int = 0,
) -> FiniteClass:
    """Axis-threshold decision functions on one feature coordinate (default the first)."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if grid_lo >= grid_hi:
        raise ValueError("grid_lo must be below grid_hi")
    if orientation not in ("ge", "le", "both"):
        raise ValueError(f"unknown orientation {orientation!r}")
    thresholds = np.linspace(grid_lo, grid_hi, steps)
    orientations = ["ge", "le"] if orientation == "both" else [orientation]
    hypotheses = [_threshold_fn(float(t), o, coordinate) for o in orientations for t in thresholds]
    return FiniteClass(
        hypotheses,
        description=f"thresholds[{grid_lo},{grid_hi}]x{steps} ({orientation}) on x{coordinate}",
    )


# ---------------------------------------------------------------------------
# Linear models
# ---------------------------------------------------------------------------


Link = Literal["identity", "sigmoid"]


@dataclass
class LinearModel:
    weights: Array
    bias: float
    link: Link = "sigmoid"
    final_loss: float | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1 or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be a finite 1-D vector")
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")
        if self.link not in ("identity", "sigmoid"):
            raise ValueError(f"unknown link {self.link!r}")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def margins(self, x: Array) -> Array:
        return x @ self.weights + self.bias

    def score_batch(self, x: Array) -> Array:
        """Link output: raw margins for identity, probabilities for sigmoid."""
        m = self.margins(x)
        return m if self.link == "identity" else _sigmoid(m)

    def as_hypothesis(self, role: Role) -> ScoredHypothesis:
        """Unit-range view: squash margins so the 0.5 threshold is the 0 margin."""

        def _score(x: Array) -> Array:
            return _sigmoid(self.margins(x))

        return ScoredHypothesis(role=role, score=_score, meta={"model": "linear"})


def zero_linear_model(dim: int, link: Link = "sigmoid") -> LinearModel:
    return LinearModel(weights=np.zeros(dim), bias=0.0, link=link)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int | None = None   # None = full batch
    weight_decay: float = 0.0
    lr_schedule: tuple = ()         # pairs (epoch, multiplier)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    lr = cfg.learning_rate
    for at_epoch, mult in cfg.lr_schedule:
        if epoch >= at_epoch:
            lr *= mult
    return lr


def _minibatches(n: int, batch_size: int | None, rng: np.random.Generator):
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def fit_linear_subgradient(
    x: Array,
    targets: Array,
    loss: Literal["hinge", "logistic"],
    cfg: TrainConfig,
    sample_weight: Array | None = None,
) -> LinearModel:
    """Convergent subgradient descent from the zero model.

    ``hinge`` expects +1/-1 targets on raw margins; ``logistic`` expects
    {0, 1} (or soft) targets on sigmoid outputs. Per-sample weights scale
    each point's contribution to the mean loss, so zero-weight samples are
    exactly inert.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    t = np.asarray(targets, dtype=float)
    if t.shape != (n,):
        raise ValueError("targets must have one entry per sample")
    if loss == "hinge" and not np.all(np.isin(t, (POSITIVE, NEGATIVE))):
        raise ValueError("hinge targets must be +1/-1")
    if loss == "logistic" and (np.any(t < 0) or np.any(t > 1)):
        raise ValueError("logistic targets must lie in [0, 1]")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError("sample weights must be nonnegative, one per sample")
    if cfg.batch_size is not None and cfg.batch_size > n:
        raise ValueError("batch_size exceeds the sample count")

    rng = rng_from_seed(cfg.seed)
    link: Link = "identity" if loss == "hinge" else "sigmoid"
    model = zero_linear_model(d, link=link)
    last = np.inf
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        for idx in _minibatches(n, cfg.batch_size, rng):
            xb, tb, wb = x[idx], t[idx], w[idx]
            m = model.margins(xb)
            if loss == "hinge":
                slack = 1.0 - tb * m
                dmargin = np.where(slack > 0.0, -tb, 0.0) * wb / idx.size
            else:
                dmargin = (_sigmoid(m) - tb) * wb / idx.size
            grad_w = xb.T @ dmargin + cfg.weight_decay * model.weights
            grad_b = float(dmargin.sum())
            model.weights = model.weights - lr * grad_w
            model.bias = model.bias - lr * grad_b
        m = model.margins(x)
        if loss == "hinge":
            last = float(np.mean(w * np.maximum(0.0, 1.0 - t * m)))
        else:
            s = np.clip(_sigmoid(m), 1e-12, 1 - 1e-12)
            last = float(-np.mean(w * (t * np.log(s) + (1.0 - t) * np.log(1.0 - s))))
        if not np.isfinite(last) or last > DIVERGENCE_LIMIT:
            raise ValueError("learning rate too large")
    model.final_loss = last
    return model


# ---------------------------------------------------------------------------
# Small fully-connected network
# ---------------------------------------------------------------------------


@dataclass
class MlpModel:
    """Rectifier MLP with a single sigmoid output unit."""

    layer_dims: tuple
    weights: list = field(default_factory=list)   # (d_in, d_out) per layer
    biases: list = field(default_factory=list)    # (d_out,) per layer

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("layer_dims must list at least input and output sizes")
        if dims[-1] != 1:
            raise ValueError("output layer must have one unit")
        object.__setattr__(self, "layer_dims", dims)
        if self.weights:
            for k in range(len(dims) - 1):
                if self.weights[k].shape != (dims[k], dims[k + 1]):
                    raise ValueError("weight shapes are inconsistent with layer_dims")
                if self.biases[k].shape != (dims[k + 1],):
                    raise ValueError("bias shapes are inconsistent with layer_dims")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def param_vector(self) -> Array:
        parts = []
        for wk, bk in zip(self.weights, self.biases):
            parts.append(wk.ravel())
            parts.append(bk.ravel())
        return np.concatenate(parts)

    def set_param_vector(self, v: Array) -> None:
        pos = 0
        for k in range(self.n_layers):
            d_in, d_out = self.layer_dims[k], self.layer_dims[k + 1]
            self.weights[k] = v[pos : pos + d_in * d_out].reshape(d_in, d_out).copy()
            pos += d_in * d_out
            self.biases[k] = v[pos : pos + d_out].copy()
            pos += d_out
        if pos != v.size:
            raise ValueError("parameter vector has the wrong length")

    def as_hypothesis(self, role: Role) -> ScoredHypothesis:
        return ScoredHypothesis(role=role, score=lambda x: mlp_forward(self, x), meta={"model": "mlp"})


def init_mlp(layer_dims, seed) -> MlpModel:
    """Seeded uniform init scaled by 1/sqrt(fan_in)."""
    rng = rng_from_seed(seed)
    model = MlpModel(tuple(layer_dims))
    for k in range(model.n_layers):
        d_in, d_out = model.layer_dims[k], model.layer_dims[k + 1]
        bound = 1.0 / np.sqrt(d_in)
        model.weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        model.biases.append(rng.uniform(-bound, bound, size=d_out))
    return model


def _mlp_pass(model: MlpModel, x: Array):
    """Forward pass keeping pre-activations for the backward sweep."""
    acts = [x]
    pre = []
    h = x
    for k in range(model.n_layers):
        v = h @ model.weights[k] + model.biases[k]
        pre.append(v)
        h = _sigmoid(v) if k == model.n_layers - 1 else np.maximum(v, 0.0)
        acts.append(h)
    return acts, pre


def mlp_forward(model: MlpModel, x) -> Array:
    """Scores in (0, 1) for a batch (or single vector)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"input dimension {x.shape[1]} does not match the model ({model.layer_dims[0]})"
        )
    acts, _ = _mlp_pass(model, x)
    return acts[-1][:, 0]


def mlp_backward(model: MlpModel, x: Array, loss_fn: Callable[[Array], LossValue]) -> Array:
    """Exact gradient of the batch loss w.r.t. the flat parameter vector.

    ``loss_fn`` maps the (n,) score vector to a LossValue whose gradient is
    taken w.r.t. the scores; the chain through the network is exact
    reverse-mode (rectifier subgradient 0 at the kink).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    acts, pre = _mlp_pass(model, x)
    scores = acts[-1][:, 0]
    lv = loss_fn(scores)
    if lv.gradient is None:
        raise ValueError("loss_fn must supply a gradient")
    s = scores
    delta = (lv.gradient * s * (1.0 - s))[:, np.newaxis]  # through the output sigmoid
    grads_w = [None] * model.n_layers
    grads_b = [None] * model.n_layers
    for k in range(model.n_layers - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (pre[k - 1] > 0.0)
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Shared scorer interface used by the iterative trainer
# ---------------------------------------------------------------------------


def model_scores(model, x: Array) -> Array:
    """Probability outputs of either trainable scorer."""
    if isinstance(model, LinearModel):
        return _sigmoid(model.margins(x))
    if isinstance(model, MlpModel):
        return mlp_forward(model, x)
    raise TypeError(f"not a trainable scorer: {type(model).__name__}")


def model_grad_step(model, x: Array, score_grad: Array, lr: float, weight_decay: float = 0.0) -> None:
    """One in-place gradient step given dLoss/dScore for this batch."""
    if isinstance(model, LinearModel):
        s = _sigmoid(model.margins(x))
        dmargin = score_grad * s * (1.0 - s)
        model.weights = model.weights - lr * (x.T @ dmargin + weight_decay * model.weights)
        model.bias = model.bias - lr * float(dmargin.sum())
        return
    if isinstance(model, MlpModel):
        grad = mlp_backward(model, x, lambda scores: LossValue(0.0, score_grad))
        params = model.param_vector()
        model.set_param_vector(params - lr * (grad + weight_decay * params))
        return
    raise TypeError(f"not a trainable scorer: {type(model).__name__}")


def model_hypothesis(model, role: Role) -> ScoredHypothesis:
    return model.as_hypothesis(role)


def clone_model(model):
    if isinstance(model, LinearModel):
        return LinearModel(model.weights.copy(), model.bias, model.link, model.final_loss)
    if isinstance(model, MlpModel):
        out = MlpModel(model.layer_dims)
        out.weights = [wk.copy() for wk in model.weights]
        out.biases = [bk.copy() for bk in model.biases]
        return out
    raise TypeError(f"not a trainable scorer: {type(model).__name__}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_model(model, path) -> None:
    if isinstance(model, LinearModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "linear",
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "link": model.link,
        }
    elif isinstance(model, MlpModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "mlp",
            "layer_dims": list(model.layer_dims),
            "weights": [wk.tolist() for wk in model.weights],
            "biases": [bk.tolist() for bk in model.biases],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    if payload["kind"] == "linear":
        return LinearModel(
            weights=np.asarray(payload["weights"], dtype=float),
            bias=float(payload["bias"]),
            link=payload["link"],
        )
    if payload["kind"] == "mlp":
        model = MlpModel(tuple(payload["layer_dims"]))
        model.weights = [np.asarray(wk, dtype=float) for wk in payload["weights"]]
        model.biases = [np.asarray(bk, dtype=float) for bk in payload["biases"]]
        return MlpModel(model.layer_dims, model.weights, model.biases)
    raise ValueError(f"unknown model kind {payload['kind']!r}")
