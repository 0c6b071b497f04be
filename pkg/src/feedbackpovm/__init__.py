"""Simulation, optimization and detector tomography of adaptive displacement receivers."""
from .channel import IDEAL, ImperfectionParams, StageParams, kraus_n, kraus_zero, stage_map
from .exceptions import (ConfigError, DataInconsistencyError, DimensionError,
                         FeedbackPovmError, NotPSDError, OptimizationFailure, ParameterError,
                         ReconstructionError, ScheduleError, TruncationError, TruncationWarning)
from .optimizer import OptimizationProblem, ReceiverOptimizer, optimize, sweep_t1
from .povm import PovmSet
from .receiver import (OutcomeRecord, StageSchedule, error_probability, helstrom_bound,
                       homodyne_reference, outcome_distribution, outcome_probability,
                       povm_elements, sign_rule, simulate_trajectories)
from .tomography import (CountDataset, MLDetectorTomography, ProbeSet, error_from_povm,
                         generate_dataset, ml_reconstruct, truncate_povm)

__version__ = "0.1.0"

__all__ = [
    "IDEAL", "ImperfectionParams", "StageParams", "kraus_n", "kraus_zero", "stage_map",
    "ConfigError", "DataInconsistencyError", "DimensionError", "FeedbackPovmError",
    "NotPSDError", "OptimizationFailure", "ParameterError", "ReconstructionError",
    "ScheduleError", "TruncationError", "TruncationWarning",
    "OptimizationProblem", "ReceiverOptimizer", "optimize", "sweep_t1", "PovmSet",
    "OutcomeRecord", "StageSchedule", "error_probability", "helstrom_bound",
    "homodyne_reference", "outcome_distribution", "outcome_probability", "povm_elements",
    "sign_rule", "simulate_trajectories", "CountDataset", "MLDetectorTomography", "ProbeSet",
    "error_from_povm", "generate_dataset", "ml_reconstruct", "truncate_povm",
]
