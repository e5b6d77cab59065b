"""Simulation and optimization toolkit for relaxed mean-field stochastic control.

Controls on finite action grids, interacting-particle simulation of the
controlled McKean-Vlasov dynamics under strict / naive-relaxed /
martingale-measure regimes, chattering approximation, Caratheodory support
reduction, and desk-scale control search.
"""

from .caratheodory import (
    NotRepresentable,
    extract_strict_if_convex,
    reduce_support,
    sliding_from_relaxed,
)
from .chattering import chatter, chatter_error, convergence_study
from .controls import (
    ActionGrid,
    SlidingControl,
    StrictControl,
    TimeGrid,
    embed_strict,
    make_action_grid,
    pushforward_test,
    rademacher_control,
)
from .costs import CostEstimate, estimate_cost, paired_cost_difference
from .errors import (
    PresetLookupError,
    RelaxctlError,
    SimulationError,
    ValidationError,
)
from .models import (
    ModelSpec,
    MomentVector,
    PRESET_NAMES,
    lookup_model,
    moment_map,
    validate_model,
)
from .optimize import (
    OptimizationReport,
    coordinate_descent,
    grid_search,
    value_gap,
)
from .simulate import (
    DriverIncrements,
    ParticleEnsemble,
    empirical_meanfield,
    qv_estimate,
    qv_samples,
    simulate_naive_relaxed,
    simulate_relaxed,
    simulate_strict,
)

__version__ = "0.1.0"
