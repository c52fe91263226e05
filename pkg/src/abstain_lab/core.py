"""Shared domain types: signed labels, regions, scored hypotheses, RNG plumbing.

Label convention: classes are stored as {+1, -1} everywhere; the {0, 1} view
exists only at the boundary of the differentiable losses (``label_to_unit`` /
``label_from_unit``). Selection follows the same convention: +1 means
"selected", -1 means "abstain", and a tie at the score threshold resolves to
-1 (conservative abstention).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

Array = np.ndarray

POSITIVE: int = 1
NEGATIVE: int = -1

MAX_SEED = 2**64 - 1


class Region(enum.Enum):
    """Which part of the support a point came from."""

    INFORMATIVE = "I"
    UNINFORMATIVE = "U"


def rng_from_seed(seed: int | np.random.Generator) -> np.random.Generator:
    """Build a deterministic generator from a 64-bit unsigned seed.

    Passing an existing generator returns it unchanged, so internal code can
    accept either form.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.default_rng(int(seed))


def as_feature_vector(values) -> Array:
    """Validate and return a single feature vector as a 1-D float array."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("feature vector must be 1-D and nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector entries must be finite")
    return x


def as_feature_matrix(values) -> Array:
    """Coerce input to a (n, d) float matrix; a single vector becomes one row."""
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError(f"features must be 1-D or 2-D, got ndim={x.ndim}")
    return x


def check_label(y: int) -> int:
    if y not in (POSITIVE, NEGATIVE):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    return int(y)


def label_to_unit(y: int) -> float:
    """Map a signed label to the {0, 1} view used by the surrogate losses."""
    return 1.0 if check_label(y) == POSITIVE else 0.0


def label_from_unit(u: float) -> int:
    """Exact inverse of :func:`label_to_unit`."""
    if u == 1.0:
        return POSITIVE
    if u == 0.0:
        return NEGATIVE
    raise ValueError(f"unit label must be 0 or 1, got {u!r}")


def labels_to_unit(y: Array) -> Array:
    """Vectorized signed -> unit label map."""
    y = np.asarray(y)
    if not np.all(np.isin(y, (POSITIVE, NEGATIVE))):
        raise ValueError("labels must be +1 or -1")
    return (y == POSITIVE).astype(float)


def labels_from_unit(u: Array) -> Array:
    """Vectorized unit -> signed label map."""
    u = np.asarray(u)
    if not np.all(np.isin(u, (0, 1))):
        raise ValueError("unit labels must be 0 or 1")
    return np.where(u == 1, POSITIVE, NEGATIVE).astype(int)


@dataclass(frozen=True)
class LabeledSample:
    """One observation: features plus its (possibly noisy) signed label."""

    x: Array
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", as_feature_vector(self.x))
        check_label(self.y)


@dataclass(frozen=True)
class OracleSample:
    """A labeled sample plus generation-time metadata hidden from learners.

    ``z`` is the realized latent informativeness draw (+1 low-noise branch,
    -1 coin-flip branch), not deducible from ``region`` alone. ``z`` may be
    None for ingested data where the latent draw was never recorded.
    """

    sample: LabeledSample
    z: int | None
    region: Region

    def __post_init__(self):
        if self.z is not None:
            check_label(self.z)
        if not isinstance(self.region, Region):
            raise ValueError(f"region must be a Region, got {self.region!r}")


Role = Literal["predictor", "selector"]


@dataclass(frozen=True)
class ScoredHypothesis:
    """A hypothesis exposing a [0, 1] score plus a threshold sign adapter.

    ``score`` maps a (n, d) feature matrix to (n,) scores. Decisions are
    +1 iff score > threshold, so a score exactly at threshold abstains /
    goes negative.
    """

    role: Role
    score: Callable[[Array], Array]
    threshold: float = 0.5
    meta: dict = field(default_factory=dict)

    def scores(self, x: Array) -> Array:
        out = np.asarray(self.score(as_feature_matrix(x)), dtype=float)
        if out.ndim != 1:
            out = out.reshape(-1)
        if not np.all(np.isfinite(out)) or np.any(out < 0.0) or np.any(out > 1.0):
            raise ValueError("invalid hypothesis output")
        return out

    def decide(self, x: Array) -> Array:
        """Signed decisions for a batch: +1 iff score strictly above threshold."""
        return np.where(self.scores(x) > self.threshold, POSITIVE, NEGATIVE)


def sign_decision(h: ScoredHypothesis, x) -> int:
    """Decision of ``h`` on a single feature vector."""
    return int(h.decide(as_feature_vector(x))[0])


def constant_hypothesis(role: Role, value: int) -> ScoredHypothesis:
    """Hypothesis that always answers ``value`` (+1 or -1)."""
    check_label(value)
    score = 1.0 if value == POSITIVE else 0.0

    def _score(x: Array, s=score) -> Array:
        return np.full(x.shape[0], s)

    return ScoredHypothesis(role=role, score=_score, meta={"constant": value})


def decision_hypothesis(role: Role, decide: Callable[[Array], Array], meta: dict | None = None) -> ScoredHypothesis:
    """Wrap a hard {+1, -1} decision function as a ScoredHypothesis.

    The score is 1.0 on +1 decisions and 0.0 otherwise, so the 0.5 threshold
    reproduces the original decisions exactly.
    """

    def _score(x: Array) -> Array:
        d = np.asarray(decide(x))
        return (d == POSITIVE).astype(float)

    return ScoredHypothesis(role=role, score=_score, meta=dict(meta or {}))
