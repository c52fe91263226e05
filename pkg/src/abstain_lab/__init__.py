"""Selective learning under data-dependent label noise.

Learn a selector that abstains on the uninformative part of the support,
alongside a predictor trained to be accurate where selection happens.
"""

from .core import (
    LabeledSample,
    OracleSample,
    Region,
    ScoredHypothesis,
    label_from_unit,
    label_to_unit,
    rng_from_seed,
    sign_decision,
)
from .datagen import (
    DiscreteSpec,
    LeCamSpec,
    NoiseInjection,
    ProcessSpec,
    SampleBatch,
    inject_class_noise,
    lambda_bar_from_taus,
    load_feature_csv,
    make_gaussian_mixture_spec,
    make_lecam_spec,
    make_threshold_discrete_spec,
    make_two_atom_spec,
    sample_process,
    save_feature_csv,
)
from .losses import (
    BetaInterval,
    LossValue,
    SelectorLossParams,
    beta_interval,
    hinge_loss,
    selector_ce_loss,
    selector_focal_loss,
    selector_risk_empirical,
    selector_risk_population,
    weighted_classifier_ce_loss,
)
from .models import (
    FiniteClass,
    LinearModel,
    MlpModel,
    TrainConfig,
    enumerate_threshold_selectors,
    fit_linear_subgradient,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .training import (
    IsaConfig,
    TrainTrace,
    alternate_minimize,
    erm_classifier,
    erm_selector,
    isa_train,
    pseudo_labels,
    subset_erm_classifier,
)
from .evaluation import (
    CoverageCurve,
    TheoryCheckResult,
    average_precision,
    disagreement_mass,
    margin_bound_check,
    sample_complexity_sweep,
    selective_risk_at_coverage,
)

__version__ = "0.1.0"
