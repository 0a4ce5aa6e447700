"""Exciton dynamics in a single waveguide mode or a homogeneous slab."""

from .analytic import (
    FieldTrace,
    analytic_fc,
    analytic_gi,
    convolve_pulse,
    decay_rate,
    detuning_wavenumber,
    emitted_field_fc,
    emitted_field_gi,
    frequency_shift,
    peak_speedup,
    read_commented_csv,
    two_j1_over_x,
)
from .params import (
    FRONT_COUPLING,
    GRAZING_INCIDENCE,
    Drive,
    DynamicsParams,
    Pulse,
)
from .volterra import (
    ExcitonField,
    GridError,
    emitted_field_numeric,
    full_kernel_grid,
    integrate_reduced,
    make_x_grid,
    max_x_step,
    solve_full_kernel,
    solve_volterra,
)

__all__ = [
    "FRONT_COUPLING",
    "GRAZING_INCIDENCE",
    "Drive",
    "DynamicsParams",
    "ExcitonField",
    "FieldTrace",
    "GridError",
    "Pulse",
    "analytic_fc",
    "analytic_gi",
    "convolve_pulse",
    "decay_rate",
    "detuning_wavenumber",
    "emitted_field_fc",
    "emitted_field_gi",
    "emitted_field_numeric",
    "frequency_shift",
    "full_kernel_grid",
    "integrate_reduced",
    "make_x_grid",
    "max_x_step",
    "peak_speedup",
    "read_commented_csv",
    "solve_full_kernel",
    "solve_volterra",
    "two_j1_over_x",
]
