"""Causal analysis of semi-competing risks data.

Nonparametric partial-identification bounds on stratum-specific treatment
effects, point identification through correlated-frailty illness-death
models fit by EM, unit-level bootstrap inference, and a simulation oracle
emitting two-world potential outcomes.
"""

from .bounds import (
    BoundsResult,
    StrataProportions,
    bounds_adjusted,
    bounds_ranked_lower,
    bounds_unadjusted,
    combine_bounds,
    rmst_bounds,
    strata_proportions,
)
from .components import ComponentSet, estimate_components, estimate_eta
from .data import Dataset, ObservedRecord, at_risk, load_csv, write_csv
from .effects import EffectRequest, EffectResult, conditional_functionals, effects_prop4, rho_sweep
from .errors import SemicompError
from .frailty import FrailtySpec, kendalls_tau, sample_frailty_pairs
from .idm import (
    FrailtyPosterior,
    IdmFit,
    IdmModelSpec,
    combine_frailty_variances,
    em_fit,
    fit_from_json,
    fit_to_json,
    log_likelihood,
    risk_score,
)
from .inference import BootstrapPlan, BootstrapResult, bootstrap
from .simulate import (
    Hazard,
    PopulationTruth,
    ScenarioConfig,
    TruthPanel,
    TwoWorldRecord,
    population_functionals,
    simulate,
    write_truth_csv,
)
from .stepfun import StepFunction
from .survival import KernelSpec, km_survival, quantile, rmst, smoothed_km_conditional

__version__ = "0.1.0"

__all__ = [
    "BoundsResult",
    "BootstrapPlan",
    "BootstrapResult",
    "ComponentSet",
    "Dataset",
    "EffectRequest",
    "EffectResult",
    "FrailtyPosterior",
    "FrailtySpec",
    "Hazard",
    "IdmFit",
    "IdmModelSpec",
    "KernelSpec",
    "ObservedRecord",
    "PopulationTruth",
    "ScenarioConfig",
    "SemicompError",
    "StepFunction",
    "StrataProportions",
    "TruthPanel",
    "TwoWorldRecord",
    "at_risk",
    "bootstrap",
    "bounds_adjusted",
    "bounds_ranked_lower",
    "bounds_unadjusted",
    "combine_bounds",
    "combine_frailty_variances",
    "conditional_functionals",
    "effects_prop4",
    "em_fit",
    "estimate_components",
    "estimate_eta",
    "fit_from_json",
    "fit_to_json",
    "kendalls_tau",
    "km_survival",
    "load_csv",
    "log_likelihood",
    "population_functionals",
    "quantile",
    "rho_sweep",
    "risk_score",
    "rmst",
    "rmst_bounds",
    "sample_frailty_pairs",
    "simulate",
    "smoothed_km_conditional",
    "strata_proportions",
    "write_csv",
    "write_truth_csv",
]
