"""Matrix-free operators of the time-domain component-separation system."""
from .mixing import (
    BETA_DUST_TRUE,
    BETA_SYNC_TRUE,
    DEFAULT_FREQUENCIES,
    N_CS,
    NU_REF,
    T_CMB,
    T_DUST_TRUE,
    MixingCoefficients,
    compute_mixing_coefficients,
    kron_factor,
    mix,
    mix_transpose,
    rj_to_thermo,
)
from .noise import NoiseModel, apply_noise, apply_noise_inverse, noise_sqrt
from .pointing import ScanPattern, apply_pointing, apply_pointing_transpose
from .system import (
    BlockDiagPreconditioner,
    MapMakingOperator,
    SystemOperator,
    apply_preconditioner_inverse,
    apply_rotation,
    apply_system,
    assemble_preconditioner,
    build_rhs,
)

__all__ = [
    "BETA_DUST_TRUE", "BETA_SYNC_TRUE", "DEFAULT_FREQUENCIES", "N_CS", "NU_REF", "T_CMB",
    "T_DUST_TRUE", "MixingCoefficients", "compute_mixing_coefficients", "kron_factor", "mix",
    "mix_transpose", "rj_to_thermo", "NoiseModel", "apply_noise", "apply_noise_inverse",
    "noise_sqrt", "ScanPattern", "apply_pointing", "apply_pointing_transpose",
    "BlockDiagPreconditioner", "MapMakingOperator", "SystemOperator",
    "apply_preconditioner_inverse", "apply_rotation", "apply_system",
    "assemble_preconditioner", "build_rhs",
]
