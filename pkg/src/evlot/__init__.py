"""Performance analysis of a charging lot with more spaces than chargers.

Cars arrive, park for an exponentially distributed time and want a full
charge before leaving; only ``M`` of the ``K`` spaces charge at once.
The package computes the stationary behaviour of the resulting two-layer
Markov chain exactly, via closed forms and bounds, via fluid and
diffusion limits, and via event simulation, with a CLI that rebuilds the
benchmark tables and sweep curves.
"""

from .model import (
    INFINITE_SPACES,
    JointDist,
    Metrics,
    ModelParams,
    NumericalError,
    State,
    UndefinedMetricError,
    ValidationError,
    allocation,
    enumerate_states,
    state_count,
    state_index,
    validate,
)
from .ctmc import (
    Generator,
    build_generator,
    exact_metrics,
    metrics,
    relative_error,
    stationary_distribution,
)
from .closed_form import (
    MarginalDist,
    SuccessBounds,
    dist_enough_power,
    dist_full_lot,
    dist_infinite_spaces,
    erlang_b,
    erlang_loss_pmf,
    expected_occupancy,
    full_lot_pmf,
    success_bounds,
)
from .fluid import (
    FluidResult,
    Regime,
    fluid_fixed_point,
    fluid_success_prob,
    fluid_trajectory,
    full_lot_fluid,
    modified_fluid_fixed_point,
    rk4_trajectory,
)
from .diffusion import (
    OUSpec,
    PiecewiseNormalDensity,
    PiInfinityDensity,
    Reflection,
    SdeEnsemble,
    bar_residual,
    hw_spec,
    heavy_traffic_spec,
    monomial_test_functions,
    overloaded_density,
    overloaded_mean_approx,
    overloaded_spec,
    pi_infinity_density,
    simulate_ou,
    smallnu_approx,
    smallnu_spec,
)
from .simulate import (
    ScalingRegime,
    SimConfig,
    SimEstimate,
    SimMode,
    convergence_experiment,
    simulate_full_lot,
    simulate_model,
)

__version__ = "0.1.0"

__all__ = [
    "INFINITE_SPACES",
    "JointDist",
    "Metrics",
    "ModelParams",
    "NumericalError",
    "State",
    "UndefinedMetricError",
    "ValidationError",
    "allocation",
    "enumerate_states",
    "state_count",
    "state_index",
    "validate",
    "Generator",
    "build_generator",
    "exact_metrics",
    "metrics",
    "relative_error",
    "stationary_distribution",
    "MarginalDist",
    "SuccessBounds",
    "dist_enough_power",
    "dist_full_lot",
    "dist_infinite_spaces",
    "erlang_b",
    "erlang_loss_pmf",
    "expected_occupancy",
    "full_lot_pmf",
    "success_bounds",
    "FluidResult",
    "Regime",
    "fluid_fixed_point",
    "fluid_success_prob",
    "fluid_trajectory",
    "full_lot_fluid",
    "modified_fluid_fixed_point",
    "rk4_trajectory",
    "OUSpec",
    "PiecewiseNormalDensity",
    "PiInfinityDensity",
    "Reflection",
    "SdeEnsemble",
    "bar_residual",
    "hw_spec",
    "heavy_traffic_spec",
    "monomial_test_functions",
    "overloaded_density",
    "overloaded_mean_approx",
    "overloaded_spec",
    "pi_infinity_density",
    "simulate_ou",
    "smallnu_approx",
    "smallnu_spec",
    "ScalingRegime",
    "SimConfig",
    "SimEstimate",
    "SimMode",
    "convergence_experiment",
    "simulate_full_lot",
    "simulate_model",
]
