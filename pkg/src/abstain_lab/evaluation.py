"""Metrics and theory checkers.

Average precision ranks selector scores against the oracle region tags;
selective risk conditions the 0-1 error on the selected fraction at a target
coverage. The exact checkers evaluate the population risk-gap inequality

    gap(g) >= lambda_bar / (4 (1 + 2 lambda_bar)) * P[g != g*]

and its variance companion  E[dloss^2] <= beta^2 * P[g != g*]  atom by atom
on finite-support specs, with no sampling anywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import Array, NEGATIVE, POSITIVE, ScoredHypothesis
from .datagen import DiscreteSpec, SampleBatch, sample_process
from .losses import (
    atom_error_rates,
    beta_interval,
    margin_coefficient,
    selector_risk_population,
    selector_risk_population_batch,
)
from .models import FiniteClass
from .training import alternate_minimize, erm_classifier


@dataclass(frozen=True)
class CoveragePoint:
    coverage: float
    selective_risk: float
    threshold: float


@dataclass(frozen=True)
class CoverageCurve:
    points: tuple

    def __post_init__(self):
        cov = [p.coverage for p in self.points]
        if any(b <= a for a, b in zip(cov, cov[1:])):
            raise ValueError("coverage must be strictly increasing along the curve")


@dataclass(frozen=True)
class TheoryCheckResult:
    instance: str
    risk_gap: float
    margin_lower_bound: float
    disagreement: float
    beta_used: float
    passed: bool


def average_precision(scores, relevance) -> float:
    """Mean precision at the rank of each positive, scores sorted descending.

    Ties keep original index order (stable sort), which pins down the value
    on degenerate score vectors.
    """
    scores = np.asarray(scores, dtype=float)
    relevance = np.asarray(relevance)
    if scores.shape != relevance.shape or scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores and relevance must be matching nonempty 1-D arrays")
    if not np.all(np.isin(relevance, (0, 1))):
        raise ValueError("relevance must be 0/1")
    if not relevance.any():
        raise ValueError("undefined AP")
    order = np.argsort(-scores, kind="stable")
    rel_sorted = relevance[order].astype(float)
    cum_pos = np.cumsum(rel_sorted)
    ranks = np.arange(1, scores.size + 1)
    precisions = cum_pos / ranks
    return float(precisions[rel_sorted == 1].mean())


def selective_risk_at_coverage(
    f: ScoredHypothesis,
    g: ScoredHypothesis,
    data: SampleBatch,
    coverage: float,
) -> tuple[float, float]:
    """0-1 error among the points with selector score above a cut.

    The cut is the largest score value for which the selected fraction
    (strictly above it) still reaches ``coverage``; with ties this is the
    smallest achievable fraction at or above the target.
    """
    if len(data) == 0:
        raise ValueError("empty data")
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must be in (0, 1]")
    n = len(data)
    k = int(np.ceil(coverage * n))
    scores = g.scores(data.x)
    threshold = None
    for q in np.unique(scores)[::-1]:
        if np.sum(scores > q) >= k:
            threshold = float(q)
            break
    if threshold is None:
        threshold = float(np.min(scores) - 1.0)  # select everything
    selected = scores > threshold
    if not selected.any():
        raise ValueError("no samples selected at the requested coverage")
    errors = f.decide(data.x[selected]) != data.y[selected]
    return float(errors.mean()), threshold


def coverage_curve(f, g, data, coverages: Iterable[float]) -> CoverageCurve:
    pts = []
    for c in sorted(set(float(c) for c in coverages)):
        risk, q = selective_risk_at_coverage(f, g, data, c)
        pts.append(CoveragePoint(coverage=c, selective_risk=risk, threshold=q))
    return CoverageCurve(tuple(pts))


def disagreement_mass(g, oracle) -> float:
    """Mass (or empirical fraction) where the selector contradicts the oracle."""
    if isinstance(oracle, DiscreteSpec):
        decisions = g.decide(oracle.x) if isinstance(g, ScoredHypothesis) else np.asarray(g)
        if decisions.dtype == bool:
            decisions = np.where(decisions, POSITIVE, NEGATIVE)
        return float(oracle.mass[decisions != oracle.g_star].sum())
    if isinstance(oracle, SampleBatch):
        if oracle.informative is None:
            raise ValueError("missing oracle")
        decisions = g.decide(oracle.x) if isinstance(g, ScoredHypothesis) else np.asarray(g)
        return float(np.mean(decisions != oracle.g_star))
    raise ValueError("missing oracle")


def margin_bound_check(spec: DiscreteSpec, g, beta: float, instance: str = "") -> TheoryCheckResult:
    """Exact risk-gap-vs-disagreement inequality for one selector.

    Only meaningful for admissible beta; out-of-interval weights are
    rejected rather than reported as failures.
    """
    interval = beta_interval(spec.lambda_bar)
    if not interval.contains(beta):
        raise ValueError("beta outside the admissible interval")
    gap = selector_risk_population(g, spec, beta) - selector_risk_population(
        spec.g_star, spec, beta
    )
    dis = disagreement_mass(g, spec)
    bound = margin_coefficient(spec.lambda_bar) * dis
    return TheoryCheckResult(
        instance=instance or f"discrete m={spec.n_atoms}",
        risk_gap=float(gap),
        margin_lower_bound=float(bound),
        disagreement=dis,
        beta_used=float(beta),
        passed=bool(gap >= bound - 1e-12),
    )


def all_selector_masks(n_atoms: int) -> Array:
    """(2^m, m) boolean matrix enumerating every selector over the atoms."""
    if n_atoms > 20:
        raise ValueError("too many atoms to enumerate selectors")
    counts = np.arange(2**n_atoms, dtype=np.uint64)
    return (counts[:, np.newaxis] >> np.arange(n_atoms, dtype=np.uint64)) & 1 == 1


def exhaustive_margin_check(spec: DiscreteSpec, beta: float) -> TheoryCheckResult:
    """Worst case of the margin inequality over all 2^m selectors.

    Also verifies that the oracle selector attains the population minimum;
    the reported quantities come from the selector with the tightest
    gap-vs-bound slack.
    """
    interval = beta_interval(spec.lambda_bar)
    if not interval.contains(beta):
        raise ValueError("beta outside the admissible interval")
    masks = all_selector_masks(spec.n_atoms)
    risks = selector_risk_population_batch(masks, spec, beta)
    star_risk = selector_risk_population(spec.g_star, spec, beta)
    gaps = risks - star_risk
    informative = spec.informative
    disagreements = (masks != informative) @ spec.mass
    bounds = margin_coefficient(spec.lambda_bar) * disagreements
    slack = gaps - bounds
    worst = int(np.argmin(slack))
    admissible = bool(np.all(gaps >= -1e-12))
    return TheoryCheckResult(
        instance=f"exhaustive m={spec.n_atoms}",
        risk_gap=float(gaps[worst]),
        margin_lower_bound=float(bounds[worst]),
        disagreement=float(disagreements[worst]),
        beta_used=float(beta),
        passed=bool(np.all(slack >= -1e-12)) and admissible,
    )


def loss_difference_second_moment(spec: DiscreteSpec, g, beta: float) -> float:
    """E[(loss(g) - loss(g*))^2], exactly on atoms.

    Conditioning on correctness, the loss difference on an atom where the
    selectors agree is 0; where they disagree it is beta (wrong outcome) or
    1 (right outcome) in magnitude, so the second moment reduces to
    sum over disagreeing atoms of mass * (beta^2 P[wrong] + P[right]).
    """
    sel = g.decide(spec.x) == POSITIVE if isinstance(g, ScoredHypothesis) else np.asarray(g, dtype=bool)
    disagree = sel != spec.informative
    p_err, p_corr = atom_error_rates(spec)
    return float((spec.mass * (beta**2 * p_err + p_corr))[disagree].sum())


def variance_bound_check(spec: DiscreteSpec, g, beta: float) -> bool:
    """E[(loss(g) - loss(g*))^2] <= beta^2 * P[g != g*], exactly on atoms."""
    second_moment = loss_difference_second_moment(spec, g, beta)
    dis = disagreement_mass(g, spec)
    return second_moment <= beta**2 * dis + 1e-12


# ---------------------------------------------------------------------------
# Sample-complexity sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    n: int
    lambda_bar: float
    alpha: float
    beta: float
    seed: int
    disagreement: float
    ap: float
    sr_at_alpha: float
    sr_full: float
    f_hat_cond_risk: float
    f_tilde_cond_risk: float


def informative_conditional_risk(h: ScoredHypothesis, spec: DiscreteSpec) -> float:
    """Exact P[h != f* | informative] over the spec atoms."""
    wrong = h.decide(spec.x) != spec.f_labels
    inf_mass = spec.mass[spec.informative].sum()
    return float(spec.mass[wrong & spec.informative].sum() / inf_mass)


def sample_complexity_sweep(
    spec: DiscreteSpec,
    class_f: FiniteClass,
    class_g: FiniteClass,
    beta: float,
    n_grid: Iterable[int],
    seeds: Iterable[int],
    rounds: int = 1,
) -> list[SweepRow]:
    """Alternating-fit metrics across sample sizes and seeds.

    Disagreement and the conditional risks are exact atom sums; the ranking
    and coverage metrics are empirical on the training draw.
    """
    n_grid = list(n_grid)
    seeds = list(seeds)
    if not n_grid or not seeds:
        raise ValueError("n_grid and seeds must be nonempty")
    process = spec.to_process_spec()
    rows = []
    for n in n_grid:
        for seed in seeds:
            batch = sample_process(process, n, seed)
            f_hat = erm_classifier(batch, class_f)
            f_tilde, g_hat, _ = alternate_minimize(
                batch, class_f, class_g, beta, rounds, f_init=f_hat
            )
            scores = g_hat.scores(batch.x)
            ap = average_precision(scores, batch.informative.astype(int))
            sr_alpha, _ = selective_risk_at_coverage(f_tilde, g_hat, batch, spec.alpha)
            sr_full, _ = selective_risk_at_coverage(f_tilde, g_hat, batch, 1.0)
            rows.append(
                SweepRow(
                    n=int(n),
                    lambda_bar=spec.lambda_bar,
                    alpha=spec.alpha,
                    beta=float(beta),
                    seed=int(seed),
                    disagreement=disagreement_mass(g_hat, spec),
                    ap=ap,
                    sr_at_alpha=sr_alpha,
                    sr_full=sr_full,
                    f_hat_cond_risk=informative_conditional_risk(f_hat, spec),
                    f_tilde_cond_risk=informative_conditional_risk(f_tilde, spec),
                )
            )
    return rows


def aggregate_sweep(rows: Iterable[SweepRow]) -> list[dict]:
    """Per-n means and standard deviations of the sweep metrics."""
    rows = list(rows)
    out = []
    for n in sorted({r.n for r in rows}):
        cell = [r for r in rows if r.n == n]
        dis = np.array([r.disagreement for r in cell])
        gain = np.array([r.f_hat_cond_risk - r.f_tilde_cond_risk for r in cell])
        out.append(
            {
                "n": n,
                "mean_disagreement": float(dis.mean()),
                "sd_disagreement": float(dis.std()),
                "mean_cond_risk_gain": float(gain.mean()),
                "sd_cond_risk_gain": float(gain.std()),
                "seeds": len(cell),
            }
        )
    return out


def spearman_rho(x, y) -> float:
    """Rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two matching 1-D arrays of length >= 2")

    def _ranks(v: Array) -> Array:
        order = np.argsort(v, kind="stable")
        ranks = np.empty_like(v)
        ranks[order] = np.arange(1, v.size + 1, dtype=float)
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                ranks[mask] = ranks[mask].mean()
        return ranks

    rx, ry = _ranks(x), _ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx**2).sum() * (ry**2).sum())
    if denom == 0:
        raise ValueError("rank correlation undefined for constant input")
    return float((rx * ry).sum() / denom)
