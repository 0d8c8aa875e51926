"""Numerical toolkit for infinite-horizon optimal switching between two technologies.

The pipeline: declare a model (per-mode drift, volatility, bounded profit,
switching costs, discount), truncate the horizon with the explicit tail bound,
discretise on a shared-driver lattice or Monte Carlo path batch, solve the
double-barrier reflected backward equation for the mode-value difference,
rebuild both mode values, and read the optimal switching strategy off the
barrier-contact regions.  Every stage has a desk-scale brute-force oracle.
"""

from .bsde import (
    BSDESolution,
    ComparisonReport,
    compare_drivers,
    solve_bsde_finite,
    tail_constant,
    truncation_horizon,
)
from .grid import (
    AdaptedProcess,
    LatticeTree,
    PathBatch,
    TimeGrid,
    build_tree,
    discount_factors,
    simulate_paths,
    step_weights,
    unroll_tree,
)
from .model import (
    ModelSpec,
    ValidationReport,
    Violation,
    coefficient_from_dict,
    validate_spec,
)
from .oracle import (
    EnumerationBudget,
    enumerate_stopping_values,
    enumerate_switching_strategies,
    gronwall_bound,
    strategy_gain_on_tree,
)
from .rbsde import (
    RBSDESolution,
    k_integral_bound,
    k_square_moment,
    penalization_bound_check,
    solve_rbsde_double,
    solve_rbsde_lower,
)
from .snell import SnellResult, first_optimal_time, snell_envelope
from .switching import (
    AdmissibilityReport,
    GainEstimate,
    Strategy,
    SwitchingSolution,
    check_admissible,
    coupled_values,
    evaluate_gain,
    extract_strategy,
    solve_switching,
    switch_boundaries,
    switching_driver,
)

__version__ = "0.1.0"
