"""Offline preference-based best-action estimation with locally optimal weights."""

from .analysis import (
    AdversaryPair,
    HardnessReport,
    alt_minimizer,
    d_tilde,
    hardness,
    kl_bracket,
    lower_bound_adversary,
    q_membership,
    regret_envelopes,
)
from .baseline import MleFit, mle_fit, mle_select, zero_sum_reparam
from .bench import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    emit_outputs,
    run_experiment,
    simple_regret,
    summarize,
)
from .errors import InconsistencyError, NumericalError, ValidationError
from .estimator import (
    EstimateReport,
    SpanBasis,
    SuccessRates,
    WeightEntry,
    WeightTable,
    build_design_matrix,
    build_weight_table,
    clip_rate,
    estimate_relative_rewards,
    local_weights,
    local_weights_qp_oracle,
    rl_low,
    select_best_actions,
    span_basis,
    success_rates,
)
from .instances import (
    GeneratorConfig,
    Instance,
    PreferenceDataset,
    check_consistency,
    empirical_proportions,
    load_dataset,
    load_instance,
    make_instance,
    make_paper_instance,
    sample_dataset,
    save_dataset,
    save_instance,
    suboptimality_gaps,
    true_reward,
    validate_instance,
)
from .mdp import (
    TransitionKernel,
    mdp_hardness,
    mdp_policy_search,
    mdp_regret,
    rl_low_mdp,
    stationary_distribution,
    validate_kernel,
)
from .privacy import (
    PerturbedRates,
    PrivacyParams,
    dp_rl_low,
    gaussian_mechanism,
    sensitivity_audit,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
