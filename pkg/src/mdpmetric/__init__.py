"""Behavioral pseudo-metrics, epsilon-quotients, and planning diagnostics
for finite discounted MDPs."""

__version__ = "0.1.0"

from .mdp import (
    FiniteMdp,
    GridWorldSpec,
    MdpFormatError,
    ValidationReport,
    load_mdp,
    make_chain_example,
    make_grid_world,
    make_random_mdp,
    mdp_from_dict,
    mdp_to_dict,
    reindex_actions,
    save_mdp,
    validate_mdp,
)
from .transport import (
    TransportSolution,
    kr_gap,
    w1_exact,
    w1_line_oracle,
    w1_value,
)
from .metric import (
    ContractionEstimate,
    MetricRun,
    PseudoMetricMatrix,
    apply_operator,
    estimate_contraction,
    floyd_warshall_closure,
    metric_from_csv,
    metric_to_csv,
    metric_to_json,
    random_pseudometric,
    residual_rate,
    residuals_to_csv,
    solve_metric,
)
from .quotient import (
    EpsilonQuotient,
    IdempotenceReport,
    build_abstract_mdp,
    build_quotient,
    check_factorization,
    epsilon_classes,
    idempotence_check,
    pullback_metric,
    quotient_metric,
    quotient_to_dict,
    save_quotient,
)
from .planning import (
    ValueLossReport,
    greedy_policy,
    lift_policy,
    policy_value,
    value_iteration,
    value_loss_report,
    values_to_csv,
)
from .logic import (
    FormulaSyntaxError,
    SoundnessReport,
    completeness_probe,
    eval_formula,
    format_formula,
    mimic_deviation,
    parse_formula,
    soundness_probe,
)
from .diagnostics import (
    PartitionInfo,
    SpectralReport,
    partition_info,
    spectral_report,
    summary_stats,
    symmetric_eigs,
)
from .evolution import DeResult, maximize
from .suites import (
    AdversarialReport,
    ConfigError,
    ExperimentConfig,
    SuiteReport,
    adversarial_search,
    build_environment,
    config_from_toml,
    run_suite,
    verify_instance,
)
from .cli import main as cli_main

__all__ = [name for name in dir() if not name.startswith("_")]
