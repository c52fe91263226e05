import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import abstain_lab as al
from abstain_lab.core import constant_hypothesis, decision_hypothesis
from abstain_lab.datagen import DiscreteSpec, SampleBatch, random_discrete_spec
from abstain_lab.losses import (
    SelectorLossParams,
    beta_interval,
    hinge_loss,
    margin_coefficient,
    selector_ce_loss,
    selector_focal_loss,
    selector_risk_empirical,
    selector_risk_population,
    selector_risk_population_batch,
    weighted_classifier_ce_loss,
)
from abstain_lab.evaluation import all_selector_masks, variance_bound_check


def central_difference(fn, point, step=1e-5):
    """Independent gradient oracle: central differences coordinate by coordinate."""
    point = np.asarray(point, dtype=float)
    grad = np.empty_like(point)
    for i in range(point.size):
        hi, lo = point.copy(), point.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fn(hi) - fn(lo)) / (2 * step)
    return grad


def relative_error(a, b):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.max(np.abs(a - b) / scale)


# -- Admissible weight interval ----------------------------------------------


def test_interval_at_full_gap():
    interval = beta_interval(0.5)
    assert interval.lo == 2.0
    assert interval.hi == 10.0


def test_interval_closed_forms():
    interval = beta_interval(0.3)
    assert interval.lo == pytest.approx(2.4 / 1.6 + 0.3, abs=1e-12)
    assert interval.hi == pytest.approx(9.0 - 0.3 / 0.64, abs=1e-12)
    assert interval.hi == pytest.approx(8.53125, abs=1e-12)


def test_weight_three_is_always_admissible():
    for lb in (0.1, 0.2, 0.3, 0.4, 0.5):
        assert beta_interval(lb).contains(3.0)


def test_interval_rejects_out_of_range_gap():
    for bad in (0.0, -0.1, 0.51):
        with pytest.raises(ValueError):
            beta_interval(bad)


def test_cap_binds_only_for_large_gaps():
    assert beta_interval(0.45).hi == 10.0
    assert beta_interval(0.05).hi < 4.0


# -- Empirical weighted 0-1 risk ---------------------------------------------


def _one_point_batch(y):
    return SampleBatch(x=np.array([[0.0]]), y=np.array([y]))


def test_risk_zero_when_correct_and_selected():
    batch = _one_point_batch(1)
    f = constant_hypothesis("predictor", 1)
    g = constant_hypothesis("selector", 1)
    assert selector_risk_empirical(g, f, batch, SelectorLossParams(beta=3.0)) == 0.0


def test_risk_charges_beta_for_selected_mistake():
    batch = _one_point_batch(-1)
    f = constant_hypothesis("predictor", 1)
    g = constant_hypothesis("selector", 1)
    assert selector_risk_empirical(g, f, batch, SelectorLossParams(beta=3.0)) == 3.0
    assert selector_risk_empirical(
        g, f, batch, SelectorLossParams(beta=3.0, normalization="sum")
    ) == 3.0


def test_risk_charges_one_for_abstained_correct():
    batch = SampleBatch(x=np.array([[0.0], [1.0]]), y=np.array([1, -1]))
    f = constant_hypothesis("predictor", 1)   # right on first, wrong on second
    g = constant_hypothesis("selector", -1)   # abstains everywhere
    params_sum = SelectorLossParams(beta=3.0, normalization="sum")
    assert selector_risk_empirical(g, f, batch, params_sum) == 1.0
    params_mean = SelectorLossParams(beta=3.0)
    assert selector_risk_empirical(g, f, batch, params_mean) == 0.5


def test_empty_data_cannot_be_represented():
    with pytest.raises(ValueError):
        SampleBatch(x=np.empty((0, 1)), y=np.empty(0, dtype=int))


# -- Exact population risk ----------------------------------------------------


def test_population_risk_oracle_values(two_atom_spec):
    assert selector_risk_population(two_atom_spec.g_star, two_atom_spec, 3.0) == pytest.approx(
        0.25, abs=1e-12
    )
    select_all = np.array([1, 1])
    assert selector_risk_population(select_all, two_atom_spec, 3.0) == pytest.approx(
        0.75, abs=1e-12
    )


def test_population_risk_gap_and_margin(two_atom_spec):
    gap = selector_risk_population(np.array([1, 1]), two_atom_spec, 3.0) - selector_risk_population(
        two_atom_spec.g_star, two_atom_spec, 3.0
    )
    assert gap == pytest.approx(0.5, abs=1e-12)
    bound = margin_coefficient(0.5) * 0.5  # disagreement mass of select-all is 0.5
    assert bound == pytest.approx(0.03125, abs=1e-12)
    assert gap >= bound


def test_population_risk_agrees_with_monte_carlo(two_atom_spec):
    """Cross-check the closed-form expectation against sampled empirical risk."""
    g = constant_hypothesis("selector", 1)
    f_star = decision_hypothesis("predictor", two_atom_spec.f_star)
    pop = selector_risk_population(np.array([1, 1]), two_atom_spec, 3.0)
    batch = al.sample_process(two_atom_spec.to_process_spec(), 200_000, 31)
    emp = selector_risk_empirical(g, f_star, batch, SelectorLossParams(beta=3.0))
    assert emp == pytest.approx(pop, abs=0.01)


def test_empirical_converges_to_population(two_atom_spec):
    process = two_atom_spec.to_process_spec()
    params = SelectorLossParams(beta=3.0)
    g = constant_hypothesis("selector", 1)
    f_star = decision_hypothesis("predictor", two_atom_spec.f_star)
    pop = selector_risk_population(np.array([1, 1]), two_atom_spec, 3.0)
    deviations = []
    for seed in range(100):
        batch = al.sample_process(process, 100_000, seed)
        deviations.append(abs(selector_risk_empirical(g, f_star, batch, params) - pop))
    assert np.mean(np.asarray(deviations) <= 0.01) >= 0.99


# -- Margin and variance properties over random finite specs ------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_margin_inequality_holds_for_every_selector(seed):
    rng = np.random.default_rng(seed)
    spec = random_discrete_spec(rng, max_atoms=8)
    interval = beta_interval(spec.lambda_bar)
    beta = float(rng.uniform(interval.lo, interval.hi))
    masks = all_selector_masks(spec.n_atoms)
    risks = selector_risk_population_batch(masks, spec, beta)
    star = selector_risk_population(spec.g_star, spec, beta)
    disagreement = (masks != spec.informative) @ spec.mass
    bounds = margin_coefficient(spec.lambda_bar) * disagreement
    assert np.all(risks - star >= bounds - 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_variance_bound_holds_for_random_selectors(seed):
    rng = np.random.default_rng(seed)
    spec = random_discrete_spec(rng, max_atoms=10)
    beta = float(rng.uniform(*_interval_tuple(spec)))
    for _ in range(5):
        g = rng.integers(0, 2, size=spec.n_atoms).astype(bool)
        assert variance_bound_check(spec, g, beta)


def _interval_tuple(spec):
    interval = beta_interval(spec.lambda_bar)
    return interval.lo, interval.hi


def test_below_interval_weight_breaks_admissibility():
    spec = al.make_two_atom_spec(lam=0.3)
    beta = 1.2  # strictly below the admissible interval at gap 0.3
    assert beta < beta_interval(0.3).lo
    select_all = np.array([True, True])
    risk_all = selector_risk_population_batch(select_all, spec, beta)[0]
    risk_star = selector_risk_population(spec.g_star, spec, beta)
    assert risk_all < risk_star


# -- Differentiable surrogates -------------------------------------------------


def test_selection_ce_confident_correct_is_near_zero():
    lv = selector_ce_loss(np.array([0.999999]), np.array([1.0]), beta=3.0)
    assert lv.value == pytest.approx(0.0, abs=1e-5)


def test_selection_ce_abstain_branch_value():
    lv = selector_ce_loss(np.array([0.5]), np.array([0.0]), beta=3.0)
    assert lv.value == pytest.approx(3.0 * np.log(2.0), abs=1e-12)


def test_selection_ce_gradient_closed_form_point():
    n = 4
    scores = np.full(n, 0.5)
    z = np.ones(n)
    lv = selector_ce_loss(scores, z, beta=3.0)
    assert lv.gradient == pytest.approx(np.full(n, -2.0 / n), abs=1e-12)


def test_selection_ce_gradient_matches_central_differences():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 20))
        scores = rng.uniform(0.05, 0.95, n)
        z = rng.integers(0, 2, n).astype(float)
        beta = float(rng.uniform(1.0, 10.0))
        lv = selector_ce_loss(scores, z, beta)
        fd = central_difference(lambda s: selector_ce_loss(s, z, beta).value, scores)
        assert relative_error(lv.gradient, fd) <= 1e-6


def test_focal_value_at_half():
    lv = selector_focal_loss(np.array([0.5]), np.array([1.0]), beta=3.0)
    assert lv.value == pytest.approx(0.5 * np.log(2.0), abs=1e-12)


def test_focal_decays_faster_than_ce_near_one():
    s = np.array([0.99])
    z = np.array([1.0])
    focal = selector_focal_loss(s, z, beta=3.0).value
    ce = selector_ce_loss(s, z, beta=3.0).value
    assert focal < ce
    assert selector_focal_loss(np.array([0.999999]), z, 3.0).value == pytest.approx(0.0, abs=1e-6)


def test_focal_gradient_matches_central_differences():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(1, 20))
        scores = rng.uniform(0.05, 0.95, n)
        z = rng.integers(0, 2, n).astype(float)
        beta = float(rng.uniform(1.0, 10.0))
        lv = selector_focal_loss(scores, z, beta)
        fd = central_difference(lambda s: selector_focal_loss(s, z, beta).value, scores)
        assert relative_error(lv.gradient, fd) <= 1e-6


def test_weighted_ce_all_zero_weights():
    scores = np.array([0.3, 0.7])
    lv = weighted_classifier_ce_loss(scores, np.array([1.0, 0.0]), np.zeros(2))
    assert lv.value == 0.0
    assert np.all(lv.gradient == 0.0)


def test_weighted_ce_standard_point():
    lv = weighted_classifier_ce_loss(np.array([0.5]), np.array([1.0]), np.array([1.0]))
    assert lv.value == pytest.approx(np.log(2.0), abs=1e-12)


def test_weighted_ce_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 20))
        scores = rng.uniform(0.05, 0.95, n)
        y = rng.integers(0, 2, n).astype(float)
        w = rng.uniform(0.0, 2.0, n)
        lv = weighted_classifier_ce_loss(scores, y, w)
        fd = central_difference(lambda s: weighted_classifier_ce_loss(s, y, w).value, scores)
        assert relative_error(lv.gradient, fd) <= 1e-6


def test_scores_at_bounds_are_clamped_and_flagged():
    lv = selector_ce_loss(np.array([0.0, 1.0, 0.5]), np.array([1.0, 0.0, 1.0]), beta=2.0)
    assert np.isfinite(lv.value)
    assert lv.clamped == 2


def test_hinge_values():
    assert hinge_loss(np.array([2.0]), np.array([1])).value == 0.0
    assert hinge_loss(np.array([0.0]), np.array([1])).value == 1.0
    assert hinge_loss(np.array([0.5]), np.array([-1])).value == pytest.approx(1.5, abs=1e-12)


def test_hinge_subgradient_zero_at_kink():
    lv = hinge_loss(np.array([1.0]), np.array([1]))  # margin exactly 1
    assert lv.value == 0.0
    assert lv.gradient[0] == 0.0


def test_hinge_subgradient_active_region():
    lv = hinge_loss(np.array([0.5, 2.0]), np.array([1, 1]))
    assert lv.gradient == pytest.approx(np.array([-0.5, 0.0]))


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=30))
@settings(max_examples=50, deadline=None)
def test_ce_loss_nonnegative(scores):
    scores = np.asarray(scores)
    z = (scores > 0.5).astype(float)
    assert selector_ce_loss(scores, z, beta=3.0).value >= 0.0
