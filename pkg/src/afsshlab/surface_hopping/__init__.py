"""Fewest-switches surface hopping with optional decoherence."""

from .core import (
    POPULATION_COLUMNS,
    DecoherenceConfig,
    EnsembleResult,
    SimConfig,
    TrajectoryAbort,
    TrajectoryState,
    apply_decoherence,
    attempt_hop,
    diabatic_populations,
    estimate_decoherence_time,
    hop_probability,
    initial_state,
    propagate_electronic,
    propagate_nuclear,
    run_ensemble,
    write_population_csv,
)

__all__ = [
    "POPULATION_COLUMNS",
    "DecoherenceConfig",
    "EnsembleResult",
    "SimConfig",
    "TrajectoryAbort",
    "TrajectoryState",
    "apply_decoherence",
    "attempt_hop",
    "diabatic_populations",
    "estimate_decoherence_time",
    "hop_probability",
    "initial_state",
    "propagate_electronic",
    "propagate_nuclear",
    "run_ensemble",
    "write_population_csv",
]
