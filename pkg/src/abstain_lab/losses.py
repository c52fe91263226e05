"""Risk functionals for the selector/predictor pair.

Conventions
-----------
* The weighted 0-1 selector risk charges ``beta`` for a wrong prediction on a
  selected point and 1 for a correct prediction on an abstained point:

      beta * 1{f(x) != y} * 1{g(x) > 0}  +  1{f(x) == y} * 1{g(x) <= 0}

  ``mean`` normalization (the default) divides by n; ``sum`` keeps the raw
  count form.

* Population risks on finite-support specs are exact sums using the
  conditional identities P[f* != y | x] = 1/4 - g*(x) lambda(x) / 2 and
  P[f* == y | x] = 3/4 + g*(x) lambda(x) / 2.

* The admissible weight interval for a noise-gap bound ``lb`` is

      [ (3 - 2 lb) / (1 + 2 lb) + lb ,
        min( (3 + 2 lb) / (1 - 2 lb) - lb / (1 - 4 lb^2), 10 ) ]

  whose margins guarantee   risk_gap >= lb / (4 (1 + 2 lb)) * P[g != g*].
  At lb = 1/2 the upper expression diverges and the interval is [2, 10].

* Differentiable surrogates clamp scores to [1e-7, 1 - 1e-7] before logs and
  report mean-normalized values with gradients taken w.r.t. the scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import Array, NEGATIVE, POSITIVE, ScoredHypothesis
from .datagen import DiscreteSpec, SampleBatch

SCORE_EPS = 1e-7
BETA_CAP = 10.0

LossVariant = Literal["zero_one", "cross_entropy", "focal"]
Normalization = Literal["sum", "mean"]


@dataclass(frozen=True)
class SelectorLossParams:
    beta: float
    variant: LossVariant = "zero_one"
    normalization: Normalization = "mean"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError("beta must be positive and finite")
        if self.variant not in ("zero_one", "cross_entropy", "focal"):
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.normalization not in ("sum", "mean"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class BetaInterval:
    lo: float
    hi: float

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def contains(self, beta: float) -> bool:
        return not self.is_empty and self.lo <= beta <= self.hi


@dataclass(frozen=True)
class LossValue:
    """Scalar loss, optional gradient w.r.t. the score vector, clamp count."""

    value: float
    gradient: Array | None = None
    clamped: int = 0


def beta_interval(lambda_bar: float) -> BetaInterval:
    """Admissible selection-penalty weights for a given noise-gap bound."""
    if not 0.0 < lambda_bar <= 0.5:
        raise ValueError("lambda_bar must be in (0, 0.5]")
    if lambda_bar == 0.5:
        # upper closed form diverges at the endpoint; margined interval is [2, cap]
        return BetaInterval(2.0, BETA_CAP)
    lo = (3.0 - 2.0 * lambda_bar) / (1.0 + 2.0 * lambda_bar) + lambda_bar
    hi = (3.0 + 2.0 * lambda_bar) / (1.0 - 2.0 * lambda_bar) - lambda_bar / (
        1.0 - 4.0 * lambda_bar**2
    )
    return BetaInterval(lo, min(hi, BETA_CAP))


def margin_coefficient(lambda_bar: float) -> float:
    """Factor relating the population risk gap to the selector disagreement."""
    if not 0.0 < lambda_bar <= 0.5:
        raise ValueError("lambda_bar must be in (0, 0.5]")
    return lambda_bar / (4.0 * (1.0 + 2.0 * lambda_bar))


# ---------------------------------------------------------------------------
# Weighted 0-1 selector risk
# ---------------------------------------------------------------------------


def selector_risk_empirical(
    g: ScoredHypothesis,
    f: ScoredHypothesis,
    data: SampleBatch,
    params: SelectorLossParams,
) -> float:
    """Empirical weighted 0-1 selector risk of g given predictor f."""
    if params.variant != "zero_one":
        raise ValueError("empirical selector risk is defined for the zero_one variant")
    if len(data) == 0:
        raise ValueError("empty data")
    f_dec = f.decide(data.x)
    g_dec = g.decide(data.x)
    wrong = f_dec != data.y
    selected = g_dec == POSITIVE
    total = params.beta * np.sum(wrong & selected) + np.sum(~wrong & ~selected)
    if params.normalization == "mean":
        return float(total) / len(data)
    return float(total)


def _atom_selections(g, spec: DiscreteSpec) -> Array:
    """Normalize a selector (hypothesis, +-1 array, or bool array) to a bool mask."""
    if isinstance(g, ScoredHypothesis):
        return g.decide(spec.x) == POSITIVE
    arr = np.asarray(g)
    if arr.shape != (spec.n_atoms,):
        raise ValueError("selector decisions must cover every atom")
    if arr.dtype == bool:
        return arr
    if not np.all(np.isin(arr, (POSITIVE, NEGATIVE))):
        raise ValueError("selector decisions must be +1/-1 or booleans")
    return arr == POSITIVE


def atom_error_rates(spec: DiscreteSpec) -> tuple[Array, Array]:
    """Per-atom (P[f* wrong], P[f* right]) under the process conditionals."""
    p_err = 0.25 - spec.g_star * spec.lam / 2.0
    return p_err, 1.0 - p_err


def selector_risk_population_batch(
    selections: Array, spec: DiscreteSpec, beta: float
) -> Array:
    """Exact population selector risk for many selectors at once.

    ``selections`` is a (k, m) boolean matrix of per-atom select decisions;
    returns the k risks with f fixed at the true labeling.
    """
    selections = np.asarray(selections, dtype=bool)
    if selections.ndim == 1:
        selections = selections[np.newaxis, :]
    p_err, p_corr = atom_error_rates(spec)
    select_cost = spec.mass * beta * p_err
    abstain_cost = spec.mass * p_corr
    return selections @ select_cost + (~selections) @ abstain_cost


def selector_risk_population(g, spec: DiscreteSpec, beta: float) -> float:
    """Exact population selector risk of one selector (no sampling)."""
    sel = _atom_selections(g, spec)
    return float(selector_risk_population_batch(sel, spec, beta)[0])


# ---------------------------------------------------------------------------
# Differentiable surrogates
# ---------------------------------------------------------------------------


def _clamp_scores(scores) -> tuple[Array, int]:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a nonempty 1-D array")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    clamped = int(np.sum((s < SCORE_EPS) | (s > 1.0 - SCORE_EPS)))
    return np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS), clamped


def _check_targets(z, n: int) -> Array:
    z = np.asarray(z, dtype=float)
    if z.shape != (n,):
        raise ValueError("targets must match the score vector")
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    return z


def selector_ce_loss(g_scores, z, beta: float) -> LossValue:
    """Selection cross-entropy with the abstain term weighted by beta.

    ``z`` may be binary correctness indicators or soft targets in [0, 1];
    soft targets interpolate the two branches linearly.
    """
    s, clamped = _clamp_scores(g_scores)
    z = _check_targets(z, s.size)
    n = s.size
    value = -np.mean(z * np.log(s) + beta * (1.0 - z) * np.log(1.0 - s))
    grad = -(z / s - beta * (1.0 - z) / (1.0 - s)) / n
    return LossValue(float(value), grad, clamped)


def selector_focal_loss(g_scores, z, beta: float) -> LossValue:
    """Cross-entropy with focal modulation to damp the easy majority class."""
    s, clamped = _clamp_scores(g_scores)
    z = _check_targets(z, s.size)
    n = s.size
    pos = z * (1.0 - s) * np.log(s)
    neg = beta * (1.0 - z) * s * np.log(1.0 - s)
    value = -np.mean(pos + neg)
    d_pos = z * (-np.log(s) + (1.0 - s) / s)
    d_neg = beta * (1.0 - z) * (np.log(1.0 - s) - s / (1.0 - s))
    grad = -(d_pos + d_neg) / n
    return LossValue(float(value), grad, clamped)


def weighted_classifier_ce_loss(f_scores, y_unit, weights) -> LossValue:
    """Per-sample-weighted binary cross-entropy for the predictor."""
    s, clamped = _clamp_scores(f_scores)
    y = _check_targets(y_unit, s.size)
    w = np.asarray(weights, dtype=float)
    if w.shape != s.shape:
        raise ValueError("weights must match the score vector")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be nonnegative and finite")
    n = s.size
    value = -np.mean(w * (y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))
    grad = -w * (y / s - (1.0 - y) / (1.0 - s)) / n
    return LossValue(float(value), grad, clamped)


def hinge_loss(margin_scores, y) -> LossValue:
    """Mean hinge loss on raw margins; subgradient 0 exactly at the kink."""
    s = np.asarray(margin_scores, dtype=float)
    y = np.asarray(y)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("margins and labels must be matching nonempty 1-D arrays")
    if not np.all(np.isin(y, (POSITIVE, NEGATIVE))):
        raise ValueError("labels must be +1/-1")
    slack = 1.0 - y * s
    active = slack > 0.0
    value = float(np.mean(np.where(active, slack, 0.0)))
    grad = np.where(active, -y.astype(float), 0.0) / s.size
    return LossValue(value, grad, 0)
