import numpy as np
import pytest

import abstain_lab as al
from abstain_lab.core import constant_hypothesis, decision_hypothesis
from abstain_lab.datagen import SampleBatch
from abstain_lab.losses import (
    SelectorLossParams,
    selector_ce_loss,
    selector_risk_empirical,
    selector_risk_population,
    weighted_classifier_ce_loss,
)
from abstain_lab.models import (
    FiniteClass,
    TrainConfig,
    clone_model,
    model_grad_step,
    model_scores,
    zero_linear_model,
)
from abstain_lab.training import (
    IsaConfig,
    alternate_minimize,
    erm_classifier,
    erm_selector,
    isa_train,
    pseudo_labels,
    subset_erm_classifier,
)


def _constant_class():
    return FiniteClass(
        [
            lambda x: np.full(x.shape[0], 1, dtype=int),
            lambda x: np.full(x.shape[0], -1, dtype=int),
        ],
        description="constants",
    )


def _batch(x, y):
    return SampleBatch(x=np.asarray(x, dtype=float).reshape(len(y), -1), y=np.asarray(y))


# -- Exact ERM ------------------------------------------------------------------


def test_erm_picks_majority_constant():
    batch = _batch([[0.0], [1.0], [2.0]], [1, 1, 1])
    f = erm_classifier(batch, _constant_class())
    assert f.meta["index"] == 0
    assert f.meta["train_error"] == 0.0


def test_erm_tie_goes_to_lowest_index():
    batch = _batch([[0.0], [1.0]], [1, -1])
    f = erm_classifier(batch, _constant_class())
    assert f.meta["index"] == 0


def test_erm_no_hypothesis_beats_returned_one(threshold_spec, threshold_classes):
    """Brute-force oracle: re-enumerate risks independently of the argmin path."""
    class_f, _ = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 500, 3)
    f = erm_classifier(batch, class_f)
    best = f.meta["train_error"]
    for hypothesis in class_f.hypotheses:
        err = np.mean(hypothesis(batch.x) != batch.y)
        assert err >= best - 1e-15


def test_erm_realizable_threshold_data_reaches_zero():
    xs = np.linspace(0, 1, 40)
    batch = _batch(xs.reshape(-1, 1), np.where(xs <= 0.42, 1, -1))
    f = erm_classifier(batch, al.enumerate_threshold_selectors(0.0, 1.0, 101, "both"))
    assert f.meta["train_error"] == 0.0


def test_selector_erm_select_all_when_predictor_perfect():
    batch = _batch([[0.0], [1.0], [2.0]], [1, 1, 1])
    f = constant_hypothesis("predictor", 1)
    g = erm_selector(batch, f, _constant_class(), beta=3.0)
    assert g.meta["index"] == 0  # select-all attains risk 0
    assert g.meta["train_risk"] == 0.0


def test_selector_erm_no_hypothesis_beats_returned_one(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 400, 5)
    f = erm_classifier(batch, class_f)
    g = erm_selector(batch, f, class_g, beta=3.0)
    params = SelectorLossParams(beta=3.0)
    best = g.meta["train_risk"]
    for idx in range(len(class_g)):
        risk = selector_risk_empirical(
            class_g.as_hypothesis(idx, "selector"), f, batch, params
        )
        assert risk >= best - 1e-12


def test_selector_erm_recovers_region_boundary(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 2000, 11)
    f_star = decision_hypothesis("predictor", threshold_spec.f_star)
    g = erm_selector(batch, f_star, class_g, beta=3.0)
    # grid index 101..201 is the <=-family; the boundary sits at threshold 0.5
    idx = g.meta["index"]
    thresholds = np.linspace(0.0, 1.0, 101)
    assert idx >= 101  # the region is a left interval
    assert abs(thresholds[idx - 101] - 0.5) <= 0.02 + 1e-12


def test_inadmissible_weight_prefers_select_all():
    spec = al.make_two_atom_spec(lam=0.3)
    select_all = np.array([True, True])
    beta = 1.2
    assert al.losses.selector_risk_population_batch(select_all, spec, beta)[0] < (
        selector_risk_population(spec.g_star, spec, beta)
    )


# -- Subset ERM ------------------------------------------------------------------


def test_subset_with_select_all_equals_plain_erm(threshold_spec, threshold_classes):
    class_f, _ = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 300, 7)
    g_all = constant_hypothesis("selector", 1)
    plain = erm_classifier(batch, class_f)
    masked = subset_erm_classifier(batch, g_all, class_f)
    assert plain.meta["index"] == masked.meta["index"]


def test_subset_on_oracle_selector_fits_clean_region(threshold_spec, threshold_classes):
    class_f, _ = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 1000, 9)
    g_star = decision_hypothesis(
        "selector", lambda x: np.where(threshold_spec.informative[threshold_spec.atom_indices(x)], 1, -1)
    )
    f = subset_erm_classifier(batch, g_star, class_f)
    selected = g_star.decide(batch.x) == 1
    errors = np.mean(f.decide(batch.x[selected]) != batch.y[selected])
    assert errors == 0.0  # selected region is realizable at full noise gap


def test_subset_objective_ignores_unselected_labels(threshold_spec, threshold_classes):
    class_f, _ = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 400, 13)
    g = decision_hypothesis("selector", lambda x: np.where(x[:, 0] < 0.5, 1, -1))
    fitted = subset_erm_classifier(batch, g, class_f)
    flipped = SampleBatch(
        x=batch.x,
        y=np.where(g.decide(batch.x) == 1, batch.y, -batch.y),
        z=batch.z,
        informative=batch.informative,
    )
    refitted = subset_erm_classifier(flipped, g, class_f)
    assert fitted.meta["index"] == refitted.meta["index"]


def test_empty_selection_rejected():
    batch = _batch([[0.0]], [1])
    g_none = constant_hypothesis("selector", -1)
    with pytest.raises(ValueError, match="empty selection"):
        subset_erm_classifier(batch, g_none, _constant_class())


# -- Alternating minimization ------------------------------------------------------


def test_single_round_equals_estimator_pair(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 500, 15)
    f_hat = erm_classifier(batch, class_f)
    g_direct = erm_selector(batch, f_hat, class_g, beta=3.0)
    f_direct = subset_erm_classifier(batch, g_direct, class_f)
    f_alt, g_alt, trace = alternate_minimize(batch, class_f, class_g, 3.0, rounds=1)
    assert g_alt.meta["index"] == g_direct.meta["index"]
    assert f_alt.meta["index"] == f_direct.meta["index"]
    assert len(trace) == 1


def test_alternation_risk_sequence_non_increasing(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    process = threshold_spec.to_process_spec()
    for seed in range(20):
        batch = al.sample_process(process, 1000, seed)
        _, _, trace = alternate_minimize(batch, class_f, class_g, 3.0, rounds=6)
        risks = trace.column("selector_risk")
        assert all(b <= a + 1e-12 for a, b in zip(risks, risks[1:]))


def test_alternation_reaches_fixed_point(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    batch = al.sample_process(threshold_spec.to_process_spec(), 800, 23)
    _, _, trace = alternate_minimize(batch, class_f, class_g, 3.0, rounds=50)
    # the deterministic update map must cycle long before the round budget
    assert len(trace) < 50


def test_alternation_recovers_oracle_selector(threshold_spec, threshold_classes):
    class_f, class_g = threshold_classes
    process = threshold_spec.to_process_spec()
    hits = 0
    for seed in range(30):
        batch = al.sample_process(process, 2000, seed)
        _, g, _ = alternate_minimize(batch, class_f, class_g, 3.0, rounds=5)
        if al.disagreement_mass(g, threshold_spec) <= 0.05:
            hits += 1
    assert hits >= 29


# -- Pseudo-labels ------------------------------------------------------------------


def _score_hypothesis(value):
    from abstain_lab.core import ScoredHypothesis

    return ScoredHypothesis(role="predictor", score=lambda x, v=value: np.full(x.shape[0], v))


def test_pseudo_label_confident_correct():
    batch = _batch([[0.0]], [1])
    assert pseudo_labels(_score_hypothesis(0.7), batch)[0] == 1


def test_pseudo_label_tie_counts_as_negative_prediction():
    batch = _batch([[0.0]], [1])
    # score exactly one half is not a positive prediction, so it disagrees with +1
    assert pseudo_labels(_score_hypothesis(0.5), batch)[0] == 0


def test_pseudo_label_correct_negative():
    batch = _batch([[0.0]], [-1])
    assert pseudo_labels(_score_hypothesis(0.2), batch)[0] == 1


# -- Iterative soft abstention -------------------------------------------------------


def _isa_config(seed, **overrides):
    base = dict(
        beta=3.0,
        pretrain_epochs=0,
        total_epochs=12,
        selector_update_period=1,
        z_window=1,
        g_window=1,
        selector_variant="cross_entropy",
        predictor_cfg=TrainConfig(learning_rate=0.4, epochs=12, batch_size=32, seed=seed * 3 + 1),
        selector_cfg=TrainConfig(learning_rate=0.4, epochs=12, batch_size=32, seed=seed * 3 + 2),
    )
    base.update(overrides)
    return IsaConfig(**base)


def _plain_reference_loop(batch, predictor, selector, cfg):
    """Unrelaxed loop: per epoch, one weighted predictor pass with the current
    selector's scores, then fresh correctness targets and one selector pass."""
    predictor = clone_model(predictor)
    selector = clone_model(selector)
    pred_rng = np.random.default_rng(cfg.predictor_cfg.seed)
    sel_rng = np.random.default_rng(cfg.selector_cfg.seed)
    y_unit = batch.y_unit
    from abstain_lab.models import _epoch_lr, _minibatches

    for epoch in range(1, cfg.total_epochs + 1):
        weights = model_scores(selector, batch.x)
        lr = _epoch_lr(cfg.predictor_cfg, epoch - 1)
        for idx in _minibatches(len(batch), cfg.predictor_cfg.batch_size, pred_rng):
            scores = model_scores(predictor, batch.x[idx])
            lv = weighted_classifier_ce_loss(scores, y_unit[idx], weights[idx])
            model_grad_step(predictor, batch.x[idx], lv.gradient, lr)
        predicted_unit = (model_scores(predictor, batch.x) > 0.5).astype(float)
        z = (predicted_unit == y_unit).astype(float)
        lr = _epoch_lr(cfg.selector_cfg, epoch - 1)
        for idx in _minibatches(len(batch), cfg.selector_cfg.batch_size, sel_rng):
            scores = model_scores(selector, batch.x[idx])
            lv = selector_ce_loss(scores, z[idx], cfg.beta)
            model_grad_step(selector, batch.x[idx], lv.gradient, lr)
    return predictor, selector


def test_unit_windows_reduce_to_plain_loop(gaussian_process):
    batch = al.sample_process(gaussian_process, 256, 33)
    cfg = _isa_config(0)
    f, g, _ = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
    ref_predictor, ref_selector = _plain_reference_loop(
        batch, zero_linear_model(2), zero_linear_model(2), cfg
    )
    assert model_scores(ref_predictor, batch.x) == pytest.approx(
        f.scores(batch.x), abs=1e-12
    )
    assert model_scores(ref_selector, batch.x) == pytest.approx(
        g.scores(batch.x), abs=1e-12
    )


def test_isa_trace_is_deterministic(gaussian_process):
    batch = al.sample_process(gaussian_process, 512, 35)
    runs = []
    for _ in range(2):
        cfg = _isa_config(4, z_window=10, g_window=10, pretrain_epochs=3, total_epochs=15)
        _, _, trace = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
        runs.append(trace)
    for a, b in zip(runs[0].rows, runs[1].rows):
        assert a == b


def test_isa_rolling_targets_stay_in_unit_interval(gaussian_process):
    batch = al.sample_process(gaussian_process, 256, 37)
    cfg = _isa_config(5, z_window=4, g_window=4, total_epochs=10)
    _, _, trace = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
    for row in trace.rows:
        assert 0.0 <= row.coverage <= 1.0
        assert np.isfinite(row.predictor_loss)
        assert np.isfinite(row.selector_loss)


def test_isa_recovers_regions_on_mixture(gaussian_process):
    batch = al.sample_process(gaussian_process, 4000, 39)
    cfg = IsaConfig(
        beta=3.0,
        pretrain_epochs=10,
        total_epochs=40,
        predictor_cfg=TrainConfig(learning_rate=0.5, epochs=40, batch_size=256, seed=1),
        selector_cfg=TrainConfig(learning_rate=0.5, epochs=40, batch_size=256, seed=2),
    )
    _, g, trace = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
    ap = al.average_precision(g.scores(batch.x), batch.informative.astype(int))
    assert ap >= 0.95
    assert trace.rows[-1].ap >= 0.95


def test_isa_drifts_down_on_pure_noise():
    below_half = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        batch = SampleBatch(x=rng.normal(size=(200, 2)), y=rng.choice([-1, 1], 200))
        cfg = IsaConfig(
            beta=3.0,
            pretrain_epochs=5,
            total_epochs=30,
            predictor_cfg=TrainConfig(learning_rate=0.5, epochs=30, batch_size=64, seed=seed * 3 + 1),
            selector_cfg=TrainConfig(learning_rate=0.5, epochs=30, batch_size=64, seed=seed * 3 + 2),
        )
        _, g, _ = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
        below_half += g.scores(batch.x).mean() < 0.5
    assert below_half >= 27


def test_trace_csv_schema(tmp_path, gaussian_process):
    batch = al.sample_process(gaussian_process, 128, 41)
    cfg = _isa_config(6, total_epochs=3)
    _, _, trace = isa_train(batch, zero_linear_model(2), zero_linear_model(2), cfg)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "epoch,predictor_loss,selector_loss,selector_risk,ap,coverage"
    assert len(path.read_text(encoding="utf-8").splitlines()) == 4


def test_isa_config_guards():
    good = TrainConfig(learning_rate=0.1, epochs=5)
    with pytest.raises(ValueError):
        IsaConfig(beta=3.0, pretrain_epochs=5, total_epochs=5, predictor_cfg=good, selector_cfg=good)
    with pytest.raises(ValueError):
        IsaConfig(beta=3.0, pretrain_epochs=0, total_epochs=5, z_window=0,
                  predictor_cfg=good, selector_cfg=good)
