"""Rating transition matrices as stochastic processes on the Lie group of stochastic matrices."""

from .aalen_johansen import count_transitions, estimate, estimate_grid
from .calibration import CalibrationResult, calibrate
from .lie import GeneratorElement, basis_index, basis_pair, dexp_inv, exp, expm, realize
from .moments import MomentSet, ObjectiveConfig, estimate_moments, objective, penalized_objective
from .rating_data import MatrixSeries, RatingHistory, RatingScale, parse_history, parse_matrix_series
from .sde import ModelParams, PathEnsemble, SimulationGrid, simulate, simulate_direct, simulate_gem
from .synth import bootstrap_series, summarize_targets
from .validator import PropertyReport, check_matrix, check_series, report

__version__ = "0.1.0"
