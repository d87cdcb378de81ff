"""Weighted mean-first-passage-time optimization of Markov chains on graphs."""
from .analysis import (
    ChainAnalytics,
    ConnectivityWeights,
    analyze,
    connectivity_objective,
    deviation_matrix,
    effective_resistance,
    kemeny_constant,
    mfpt_matrix,
    stationary_distribution,
)
from .directions import (
    ConstraintSystem,
    directional_derivatives,
    equality_system,
    null_space_basis,
    stationary_system,
    steepest_feasible_descent,
    symmetric_system,
    system_for,
)
from .errors import ConfigError, GraphError, InfeasibleError, MfptOptError, ReducibleChainError
from .failures import (
    FailureModel,
    expected_objective_enumerate,
    expected_stationary,
    redistribute,
    sample_average_objective,
    sample_edge_sets,
)
from .graph import (
    Correlation,
    Graph,
    check_reversible,
    is_strongly_connected,
    load_graph,
    transition_matrix,
    uniform_weights,
)
from .projections import dykstra_project, project_affine, project_blocks, project_scaled_simplex
from .spsa import (
    OptimizationTrace,
    Problem,
    SpsaConfig,
    best_trace,
    gain_sequences,
    infeasibility_demo,
    optimize,
    polyak_ruppert_average,
    preset,
    run_spsa,
    sample_perturbation,
    spsa_direction,
)
from .surveillance import CaptureStats, SimulationSpec, simulate

__version__ = "0.1.0"
