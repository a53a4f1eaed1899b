"""KP solitary waves, Gross-Pitaevskii travelling waves and their transonic link."""

from .spectral_core import (
    ComplexField2,
    Grid2,
    GridMismatchError,
    RealField2,
    Symbol2,
    apply_symbol,
    derivative,
    dump_field,
    integrate,
    inv_d1,
    load_field,
    norm_l2,
)
from .kp_solver import (
    KernelSpec,
    KPState,
    action,
    energy_kp,
    kernel_norm,
    kernel_symbol,
    lump,
    mass,
    petviashvili_solve,
    rescale_speed,
    s_kp_estimate,
    sw_residual,
)
from .gp_solver import (
    GPState,
    MinimizeParams,
    discrepancy,
    gl_energy,
    lift,
    minimize_fixed_momentum,
    momentum,
    oracle_1d,
    pohozaev_diagnostics,
    polar_residuals,
    solve_tw_1d,
    twc_residual,
)
from .transonic import (
    SlowPair,
    energy_expansion,
    fixed_point_solve,
    kp_bound_check,
    momentum_slow,
    remainder_fields,
    rescale,
    residual_slow1,
    residual_slow2,
    sigma_expansion_check,
    sweep,
    unrescale,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexField2",
    "Grid2",
    "GridMismatchError",
    "RealField2",
    "Symbol2",
    "apply_symbol",
    "derivative",
    "dump_field",
    "integrate",
    "inv_d1",
    "load_field",
    "norm_l2",
    "KernelSpec",
    "KPState",
    "action",
    "energy_kp",
    "kernel_norm",
    "kernel_symbol",
    "lump",
    "mass",
    "petviashvili_solve",
    "rescale_speed",
    "s_kp_estimate",
    "sw_residual",
    "GPState",
    "MinimizeParams",
    "discrepancy",
    "gl_energy",
    "lift",
    "minimize_fixed_momentum",
    "momentum",
    "oracle_1d",
    "pohozaev_diagnostics",
    "polar_residuals",
    "solve_tw_1d",
    "twc_residual",
    "SlowPair",
    "energy_expansion",
    "fixed_point_solve",
    "kp_bound_check",
    "momentum_slow",
    "remainder_fields",
    "rescale",
    "residual_slow1",
    "residual_slow2",
    "sigma_expansion_check",
    "sweep",
    "unrescale",
]
