"""Estimators and training loops.

The exact regime works over finite hypothesis classes: plain ERM for the
predictor, weighted 0-1 ERM for the selector, masked ERM on the selected
subset, and the alternation between the last two. All argmins are exhaustive
with ties resolved to the lowest hypothesis index, so reruns are identical.

The iterative trainer relaxes the argmin oracles to seeded minibatch
gradient steps on the differentiable surrogates: the predictor minimizes a
selector-weighted cross-entropy, the selector a beta-weighted cross-entropy
(or its focal variant) against pseudo-labels marking where the thresholded
predictor agrees with the observed labels. Both the pseudo-labels and the
selector weights can be smoothed with rolling means over recent epochs;
window length 1 recovers the plain loop.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import Array, NEGATIVE, POSITIVE, ScoredHypothesis
from .datagen import SampleBatch
from .losses import (
    SelectorLossParams,
    selector_ce_loss,
    selector_focal_loss,
    selector_risk_empirical,
    weighted_classifier_ce_loss,
)
from .models import (
    FiniteClass,
    TrainConfig,
    clone_model,
    model_grad_step,
    model_hypothesis,
    model_scores,
    _epoch_lr,
    _minibatches,
)


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    predictor_loss: float
    selector_loss: float
    selector_risk: float
    ap: float | None
    coverage: float


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "predictor_loss", "selector_loss", "selector_risk", "ap", "coverage"])
            for r in self.rows:
                writer.writerow(
                    [
                        r.epoch,
                        repr(float(r.predictor_loss)),
                        repr(float(r.selector_loss)),
                        repr(float(r.selector_risk)),
                        "" if r.ap is None else repr(float(r.ap)),
                        repr(float(r.coverage)),
                    ]
                )


def _batch_ap(scores: Array, batch: SampleBatch) -> float | None:
    """Ranking quality of selector scores against the region tags, if present."""
    if batch.informative is None or not batch.informative.any():
        return None
    from .evaluation import average_precision

    return average_precision(scores, batch.informative.astype(int))


# ---------------------------------------------------------------------------
# Exact estimators over finite classes
# ---------------------------------------------------------------------------


def _finite_argmin(objectives: Array) -> int:
    """Lowest index attaining the minimum, so reruns break ties identically."""
    return int(np.argmin(objectives))


def erm_classifier(data: SampleBatch, hypotheses, cfg: TrainConfig | None = None) -> ScoredHypothesis:
    """Plain empirical risk minimizer for the predictor.

    Finite classes are solved exactly by enumeration; trainable scorers fall
    back to a logistic surrogate fit.
    """
    if len(data) == 0:
        raise ValueError("empty data")
    if isinstance(hypotheses, FiniteClass):
        decisions = hypotheses.decisions_matrix(data.x)
        errors = (decisions != data.y).mean(axis=1)
        best = _finite_argmin(errors)
        return hypotheses.as_hypothesis(best, "predictor", meta={"train_error": float(errors[best])})
    return _fit_parametric_predictor(data, hypotheses, cfg)


def _fit_parametric_predictor(
    data: SampleBatch, model, cfg: TrainConfig, weights: Array | None = None
) -> ScoredHypothesis:
    if cfg is None:
        raise ValueError("parametric fitting needs a TrainConfig")
    model = clone_model(model)
    y_unit = data.y_unit
    w = np.ones(len(data)) if weights is None else weights
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        for idx in _minibatches(len(data), cfg.batch_size, rng):
            scores = model_scores(model, data.x[idx])
            lv = weighted_classifier_ce_loss(scores, y_unit[idx], w[idx])
            model_grad_step(model, data.x[idx], lv.gradient, lr, cfg.weight_decay)
    hyp = model_hypothesis(model, "predictor")
    hyp.meta["model_state"] = model
    return hyp


def erm_selector(
    data: SampleBatch,
    f_hat: ScoredHypothesis,
    hypotheses,
    beta: float,
    cfg: TrainConfig | None = None,
) -> ScoredHypothesis:
    """Selector minimizing the weighted 0-1 risk given a fixed predictor."""
    if len(data) == 0:
        raise ValueError("empty data")
    if isinstance(hypotheses, FiniteClass):
        f_dec = f_hat.decide(data.x)
        wrong = (f_dec != data.y).astype(float)
        right = 1.0 - wrong
        decisions = hypotheses.decisions_matrix(data.x)
        selected = decisions == POSITIVE
        risks = (selected @ (beta * wrong) + (~selected) @ right) / len(data)
        best = _finite_argmin(risks)
        return hypotheses.as_hypothesis(best, "selector", meta={"train_risk": float(risks[best])})
    # surrogate: beta-weighted cross-entropy against the correctness pseudo-labels
    if cfg is None:
        raise ValueError("parametric fitting needs a TrainConfig")
    z = pseudo_labels(f_hat, data).astype(float)
    model = clone_model(hypotheses)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        for idx in _minibatches(len(data), cfg.batch_size, rng):
            scores = model_scores(model, data.x[idx])
            lv = selector_ce_loss(scores, z[idx], beta)
            model_grad_step(model, data.x[idx], lv.gradient, lr, cfg.weight_decay)
    hyp = model_hypothesis(model, "selector")
    hyp.meta["model_state"] = model
    return hyp


def subset_erm_classifier(
    data: SampleBatch,
    g_hat: ScoredHypothesis,
    hypotheses,
    cfg: TrainConfig | None = None,
) -> ScoredHypothesis:
    """Classifier refit only on the points the selector accepts."""
    if len(data) == 0:
        raise ValueError("empty data")
    mask = g_hat.decide(data.x) == POSITIVE
    if not mask.any():
        raise ValueError("empty selection")
    if isinstance(hypotheses, FiniteClass):
        decisions = hypotheses.decisions_matrix(data.x)
        masked_errors = ((decisions != data.y) & mask).sum(axis=1) / len(data)
        best = _finite_argmin(masked_errors)
        return hypotheses.as_hypothesis(
            best,
            "predictor",
            meta={"train_error": float(masked_errors[best]), "selected": int(mask.sum())},
        )
    return _fit_parametric_predictor(data, hypotheses, cfg, weights=mask.astype(float))


def alternate_minimize(
    data: SampleBatch,
    class_f: FiniteClass,
    class_g: FiniteClass,
    beta: float,
    rounds: int,
    f_init: ScoredHypothesis | None = None,
) -> tuple[ScoredHypothesis, ScoredHypothesis, TrainTrace]:
    """Alternate the exact selector and subset-classifier argmins.

    Stops early once the (predictor, selector) index pair repeats, which on
    finite classes means a fixed point of the deterministic update map.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    params = SelectorLossParams(beta=beta)
    f_hat = f_init if f_init is not None else erm_classifier(data, class_f)
    trace = TrainTrace()
    g_hat = None
    seen: set[tuple[int, int]] = set()
    for rnd in range(1, rounds + 1):
        g_hat = erm_selector(data, f_hat, class_g, beta)
        f_hat = subset_erm_classifier(data, g_hat, class_f)
        risk = selector_risk_empirical(g_hat, f_hat, data, params)
        scores = g_hat.scores(data.x)
        coverage = float(np.mean(g_hat.decide(data.x) == POSITIVE))
        trace.append(
            TraceRow(
                epoch=rnd,
                predictor_loss=float(f_hat.meta.get("train_error", np.nan)),
                selector_loss=float(g_hat.meta.get("train_risk", np.nan)),
                selector_risk=risk,
                ap=_batch_ap(scores, data),
                coverage=coverage,
            )
        )
        pair = (f_hat.meta["index"], g_hat.meta["index"])
        if pair in seen:
            break
        seen.add(pair)
    return f_hat, g_hat, trace


# ---------------------------------------------------------------------------
# Iterative soft abstention
# ---------------------------------------------------------------------------


def pseudo_labels(f_hat: ScoredHypothesis, data: SampleBatch) -> Array:
    """1 where the thresholded predictor agrees with the observed label."""
    predicted_unit = (f_hat.scores(data.x) > 0.5).astype(float)
    return (predicted_unit == data.y_unit).astype(int)


@dataclass(frozen=True)
class IsaConfig:
    beta: float
    pretrain_epochs: int
    total_epochs: int
    selector_update_period: int = 1
    z_window: int = 10
    g_window: int = 10
    selector_variant: Literal["cross_entropy", "focal"] = "cross_entropy"
    predictor_cfg: TrainConfig = None
    selector_cfg: TrainConfig = None

    def __post_init__(self):
        if self.pretrain_epochs < 0 or self.pretrain_epochs >= self.total_epochs:
            raise ValueError("pretrain_epochs must be in [0, total_epochs)")
        if self.selector_update_period < 1:
            raise ValueError("selector_update_period must be at least 1")
        if self.z_window < 1 or self.g_window < 1:
            raise ValueError("rolling windows must be at least 1")
        if self.selector_variant not in ("cross_entropy", "focal"):
            raise ValueError(f"unknown selector variant {self.selector_variant!r}")
        if self.predictor_cfg is None or self.selector_cfg is None:
            raise ValueError("predictor_cfg and selector_cfg are required")


def _selector_loss_fn(variant: str):
    return selector_ce_loss if variant == "cross_entropy" else selector_focal_loss


def isa_train(
    data: SampleBatch,
    predictor_model,
    selector_model,
    cfg: IsaConfig,
) -> tuple[ScoredHypothesis, ScoredHypothesis, TrainTrace]:
    """Jointly train predictor and selector by iterative soft abstention.

    Per epoch: (a) one minibatch pass updating the predictor on the weighted
    cross-entropy, with weights the rolling mean of recent selector score
    snapshots (uniform during pretraining); (b) every
    ``selector_update_period`` epochs, one minibatch pass updating the
    selector against the rolling mean of recent correctness pseudo-labels,
    used as soft targets. Snapshots are taken after each selector update, so
    window length 1 with period 1 and no pretraining is exactly the plain
    alternating loop.
    """
    n = len(data)
    predictor = clone_model(predictor_model)
    selector = clone_model(selector_model)
    loss_fn = _selector_loss_fn(cfg.selector_variant)
    pred_rng = np.random.default_rng(cfg.predictor_cfg.seed)
    sel_rng = np.random.default_rng(cfg.selector_cfg.seed)
    z_hist: deque = deque(maxlen=cfg.z_window)
    g_hist: deque = deque(maxlen=cfg.g_window)
    trace = TrainTrace()
    params = SelectorLossParams(beta=cfg.beta)
    y_unit = data.y_unit

    for epoch in range(1, cfg.total_epochs + 1):
        pretraining = epoch <= cfg.pretrain_epochs
        if pretraining:
            weights = np.ones(n)
        else:
            if not g_hist:
                g_hist.append(model_scores(selector, data.x))
            weights = np.mean(np.stack(g_hist), axis=0)

        pred_lr = _epoch_lr(cfg.predictor_cfg, epoch - 1)
        for idx in _minibatches(n, cfg.predictor_cfg.batch_size, pred_rng):
            scores = model_scores(predictor, data.x[idx])
            lv = weighted_classifier_ce_loss(scores, y_unit[idx], weights[idx])
            model_grad_step(predictor, data.x[idx], lv.gradient, pred_lr, cfg.predictor_cfg.weight_decay)

        f_hyp = model_hypothesis(predictor, "predictor")
        z_hist.append(pseudo_labels(f_hyp, data).astype(float))
        z_soft = np.mean(np.stack(z_hist), axis=0)

        if not pretraining and (epoch - cfg.pretrain_epochs) % cfg.selector_update_period == 0:
            sel_lr = _epoch_lr(cfg.selector_cfg, epoch - 1)
            for idx in _minibatches(n, cfg.selector_cfg.batch_size, sel_rng):
                scores = model_scores(selector, data.x[idx])
                lv = loss_fn(scores, z_soft[idx], cfg.beta)
                model_grad_step(selector, data.x[idx], lv.gradient, sel_lr, cfg.selector_cfg.weight_decay)
            g_hist.append(model_scores(selector, data.x))

        pred_scores = model_scores(predictor, data.x)
        sel_scores = model_scores(selector, data.x)
        g_hyp = model_hypothesis(selector, "selector")
        trace.append(
            TraceRow(
                epoch=epoch,
                predictor_loss=weighted_classifier_ce_loss(pred_scores, y_unit, weights).value,
                selector_loss=loss_fn(sel_scores, z_soft, cfg.beta).value,
                selector_risk=selector_risk_empirical(g_hyp, f_hyp, data, params),
                ap=_batch_ap(sel_scores, data),
                coverage=float(np.mean(sel_scores > 0.5)),
            )
        )

    f_hyp = model_hypothesis(predictor, "predictor")
    g_hyp = model_hypothesis(selector, "selector")
    f_hyp.meta["model_state"] = predictor
    g_hyp.meta["model_state"] = selector
    return f_hyp, g_hyp, trace
