"""Tabular mean-field-game toolkit.

A numpy library for computing mean-field equilibria in finite games with a
single-loop actor-critic solver, exact model-based oracles for equilibrium
metrics and assumption checking, and a reproducible multi-seed experiment
harness with CSV logging.
"""

__version__ = "0.1.0"

from .core import (
    MeanField,
    OperatorEstimates,
    PolicyTable,
    SoftmaxPolicy,
    SolverConfig,
    StepSchedule,
    ValueEstimate,
    clamp_unit,
    log_policy_gradient,
    operator_bounds,
    practical_schedule,
    project_l2_ball,
    project_simplex,
    softmax_table,
    step_sizes,
    theory_safe_schedule,
)
from .environments import (
    SampleStep,
    TabularMFG,
    beach_bar_env,
    env_from_descriptor,
    example1_env,
    example2_env,
    list_families,
    make_rng,
    random_mdp,
    sample_step,
    synthetic_env,
    twostate_instance,
)
from .oracle import (
    HerdingReport,
    MetricRecord,
    OracleError,
    StationaryResult,
    average_reward,
    best_response_gap,
    best_response_value,
    differential_value,
    estimate_contraction_delta,
    estimate_mixing_time,
    exact_policy_gradient,
    fisher_min_eigenvalue,
    herding_check,
    induced_mean_field,
    metrics,
    stationary_distribution,
    transition_matrix,
)
from .solvers import (
    AsacState,
    BaselineConfig,
    SolverAbort,
    asac_init,
    asac_run,
    asac_step,
    baseline_run,
    mdp_ac_run,
    mdp_ac_step,
)
from .harness import (
    ExperimentSpec,
    SpecError,
    equilibrium_check,
    load_spec,
    parse_spec,
    read_csv,
    run_experiment,
    save_spec,
    spec_to_dict,
    verify_environment,
)
