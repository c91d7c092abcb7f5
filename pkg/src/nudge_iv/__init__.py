"""Latent-index treatment-selection scenarios, exact identification oracles,
and Wald-type estimation for binary-instrument causal effects."""

from .errors import (
    DegenerateConfounder,
    DegenerateFirstStage,
    DomainError,
    EmptyPanel,
    EmptyStratum,
    EstimationError,
    InvalidScale,
    MissingArm,
    NoSignChange,
    NudgeIvError,
    ParseError,
    RangeViolation,
    RelevanceViolation,
    SchemaError,
    SpecValidationError,
    TooManyFailures,
    UndefinedTarget,
    YGridTooLarge,
    ZeroDenominator,
)
from .estimators import (
    BoundsReport,
    EstimateReport,
    FirstStageDiagnostic,
    ShareBounds,
    StratumEstimate,
    arm_wald,
    effect_contrast,
    first_stage_diagnostics,
    frechet_bounds,
    median_arm,
    median_nte,
    wald_conditional,
    wald_marginal,
)
from .functionals import FunctionalSpec
from .inference import (
    BootstrapConfig,
    BootstrapResult,
    EstimatorSpec,
    McStudyResult,
    bootstrap,
    mc_study,
)
from .io import (
    DatasetSchema,
    load_scenario,
    read_dataset,
    read_panel,
    write_observed,
    write_panel,
    write_report,
    write_scenario,
)
from .model import (
    ConfounderLaw,
    CounterfactualPanel,
    GlimSpec,
    InstrumentPropensity,
    ObservedDataset,
    OutcomeSpec,
    PolyMean,
    ScenarioSpec,
    ThresholdLaw,
    ValidatedScenario,
    compliance_distribution,
    compliance_type,
    observe,
    potential_treatment_prob,
    simulate_panel,
    validate_spec,
)
from .oracle import (
    CausalTarget,
    ConditionReport,
    itt_decomposition,
    check_conditions,
    exact_arm_wald,
    exact_wald,
    identification_gap,
    identified_quantile,
    treated_outcome_mean,
    true_target,
)
from .scenarios import available_fixtures, load_fixture

__version__ = "0.1.0"
