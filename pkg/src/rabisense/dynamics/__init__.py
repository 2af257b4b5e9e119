from .lindblad import (
    Channel,
    KappaFitError,
    KappaFitResult,
    LeakageError,
    LindbladModel,
    ancilla_lindblad_model,
    evolve_lindblad,
    fit_effective_kappa,
    noisy_rabi_lindblad_model,
    rabi_lindblad_model,
    steady_state,
    two_ion_lindblad_model,
)
from .records import TrajectoryRecord, load_records, save_records
from .trajectories import (
    TrajectoryOutput,
    TrajectorySpec,
    ancilla_spec,
    default_dt,
    noisy_spec,
    perfect_spec,
    run_block,
    run_trajectory_ancilla,
    run_trajectory_noisy,
    run_trajectory_perfect,
    validate_step_doubling,
)

__all__ = [name for name in dir() if not name.startswith("_")]
