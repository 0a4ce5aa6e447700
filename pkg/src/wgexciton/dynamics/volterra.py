"""Numerical solution of the exciton equation of motion on an x-grid.

In retarded time and with the carrier of the drive factored out,

    sigma(x, t) = i A phase0(x) exp(-gamma t / 2) s(x, t),
    ds/dt = -kappa (W s),  (W s)(x) = int_{-L}^{x} exp(i dk (x - x')) s(x') dx',

plus, for the full kernel, a backward branch int_x^0 exp(i dk_b (x' - x)) s dx'.
W does not depend on t, so s(t) = exp(-kappa t W) s0.  W is discretized by
product integration (trapezoidal in s, exact in the exponential) and the
operator exponential is applied by a Taylor series on substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from .analytic import FieldTrace
from .params import (
    FRONT_COUPLING,
    GRAZING_INCIDENCE,
    Drive,
    DynamicsParams,
    one_minus_cos,
)

# Taylor substep bound on |kappa| * (integration length) * dt
_SUBSTEP_NORM = 2.0
# solve_full_kernel guards
FULL_KERNEL_MAX_LENGTH = 5000.0  # nm
FULL_KERNEL_STEPS_PER_WAVELENGTH = 20


class GridError(ValueError):
    """Grid too coarse, non-uniform or not covering [-L, 0]."""


@dataclass
class ExcitonField:
    x_grid: np.ndarray  # nm, stored positions
    t_grid: np.ndarray  # ns, retarded delays
    sigma: np.ndarray  # shape (len(t_grid), len(x_grid))
    params: DynamicsParams
    drive: Drive


def _phi1(z):
    if abs(z) < 0.1:
        return sum(z ** n / math.factorial(n + 1) for n in range(14))
    return np.expm1(z) / z


def _phi_prev(z):
    # (z e^z - (e^z - 1)) / z^2
    if abs(z) < 0.1:
        return sum(z ** n * (n + 1) / math.factorial(n + 2) for n in range(14))
    return (z * np.exp(z) - np.expm1(z)) / z ** 2


def cell_weights(dk: complex, h: float):
    """Product-trapezoid weights for int_{x_{i-1}}^{x_i} exp(i dk (x_i - x')) s(x') dx'.

    Returns (decay, w_prev, w_cur) with the integral = w_prev s_{i-1} + w_cur s_i
    and decay = exp(i dk h) carrying the running integral one cell on.
    """
    z = complex(1j * dk * h)
    e0 = h * _phi1(z)
    w_prev = h * _phi_prev(z)
    return complex(np.exp(z)), complex(w_prev), complex(e0 - w_prev)


class _KernelOperator:
    """Discrete W: running integrals from the entrance (and from the exit)."""

    def __init__(self, h, n, dk_forward, dk_backward=None):
        self.n = n
        self.fwd = cell_weights(dk_forward, h)
        self.bwd = None if dk_backward is None else cell_weights(dk_backward, h)
        self.length = h * (n - 1) * (1 if dk_backward is None else 2)

    @staticmethod
    def _running(s, weights):
        decay, w_prev, w_cur = weights
        zi = (-w_cur * s[0])[np.newaxis]
        out, _ = signal.lfilter([w_cur, w_prev], [1.0, -decay], s, axis=0, zi=zi)
        return out

    def __call__(self, s):
        out = self._running(s, self.fwd)
        if self.bwd is not None:
            out = out + self._running(s[::-1], self.bwd)[::-1]
        return out


def _propagate(op: _KernelOperator, s, kappa, dt):
    """s <- exp(-kappa dt W) s by Taylor series on bounded substeps."""
    if dt <= 0 or kappa == 0:
        return s
    n_sub = max(1, math.ceil(abs(kappa) * op.length * dt / _SUBSTEP_NORM))
    factor = -kappa * dt / n_sub
    for _ in range(n_sub):
        term = s
        acc = s.copy()
        scale = np.max(np.abs(s)) or 1.0
        for n in range(1, 80):
            term = factor * op(term) / n
            acc += term
            if np.max(np.abs(term)) < 1e-17 * scale:
                break
        s = acc
    return s


def _check_uniform(x_grid):
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise GridError("x_grid must be 1-D with at least 3 points")
    dx = np.diff(x)
    h = (x[-1] - x[0]) / (x.size - 1)
    if h <= 0 or np.max(np.abs(dx - h)) > 1e-6 * h:
        raise GridError("x_grid must be uniform and increasing")
    return x, h


def _check_t(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) < 0):
        raise GridError("t_grid must be 1-D and nondecreasing")
    return t


def max_x_step(params: DynamicsParams) -> float:
    """Largest admissible x-step: Lambda_res/(50|zeta|) and Lambda_m/50."""
    limits = [params.lambda_m / 50.0]
    if params.zeta != 0:
        limits.append(params.lambda_res / (50.0 * abs(params.zeta)))
    return min(limits)


def make_x_grid(params: DynamicsParams, step: float | None = None, multiple: int = 4):
    """Uniform grid over [-L, 0] with step <= ``step`` and (n-1) divisible by ``multiple``.

    The default multiple of 4 lets Simpson quadrature be Richardson-checked
    on every second point.
    """
    step = max_x_step(params) if step is None else step
    n_int = math.ceil(params.length / step)
    n_int = multiple * math.ceil(n_int / multiple)
    return np.linspace(-params.length, 0.0, n_int + 1)


def _carrier(params: DynamicsParams, drive: Drive):
    """(k_ref, phase0(x)) such that the drive is i A phase0(x) at t = 0+."""
    if drive.geometry == FRONT_COUPLING:
        k_ref = params.k0 * params.nu

        def phase0(x):
            return np.exp(1j * k_ref * (x + params.length))

        return k_ref, phase0
    kx = params.k0 * (1.0 - one_minus_cos(drive.theta_in))

    def phase0(x):
        return np.exp(1j * kx * x)

    return kx, phase0


def _forward_dk(params: DynamicsParams, drive: Drive) -> complex:
    # k0 nu - k_ref, formed from small quantities to avoid cancellation
    if drive.geometry == FRONT_COUPLING:
        return 0j
    return params.k0 * (one_minus_cos(drive.theta_in) - params.deficit)


def integrate_reduced(
    s0, x_grid, t_grid, kappa, dk_forward, dk_backward=None, store_every: int = 1
):
    """Evolve the reduced amplitude s(x, t) = exp(-kappa t W) s0.

    Low-level entry point: arbitrary initial data ``s0`` on a uniform grid,
    forward kernel wavenumber ``dk_forward`` and optional backward branch.
    Returns an array of shape (len(t_grid), len(x_grid[::store_every])),
    zero for t < 0.
    """
    x, h = _check_uniform(x_grid)
    t = _check_t(t_grid)
    s = np.array(s0, dtype=complex)
    if s.shape != x.shape:
        raise GridError("s0 must match x_grid")
    op = _KernelOperator(h, x.size, dk_forward, dk_backward)
    out = np.zeros((t.size, x[::store_every].size), dtype=complex)
    t_prev = 0.0
    for i, ti in enumerate(t):
        if ti < 0:
            continue
        s = _propagate(op, s, kappa, ti - t_prev)
        t_prev = ti
        out[i] = s[::store_every]
    return out


def _assemble(params, drive, x, t, s_red, store_every):
    _, phase0 = _carrier(params, drive)
    xs = x[::store_every]
    envelope = np.where(t >= 0, np.exp(-0.5 * params.gamma * np.clip(t, 0, None)), 0.0)
    sigma = 1j * drive.amplitude * envelope[:, None] * phase0(xs)[None, :] * s_red
    return ExcitonField(xs, t, sigma, params, drive)


def _check_domain(params, x, h):
    if abs(x[0] + params.length) > 0.5 * h or x[-1] > 1e-9 * params.length + 1e-12:
        raise GridError("x_grid must run from -L to at most 0")


def solve_volterra(
    params: DynamicsParams, drive: Drive, x_grid, t_grid, store_every: int = 1
) -> ExcitonField:
    """Forward-scattering solution sigma(x, t) for a delta-pulse drive.

    ``store_every`` keeps every n-th x sample in the output (the solve itself
    always uses the full grid).
    """
    x, h = _check_uniform(x_grid)
    _check_domain(params, x, h)
    limit = max_x_step(params)
    if h > limit * (1 + 1e-9):
        raise GridError(f"x-step {h:.4g} nm exceeds the admissible {limit:.4g} nm")
    t = _check_t(t_grid)
    s_red = integrate_reduced(
        np.ones_like(x, dtype=complex), x, t, params.kappa, _forward_dk(params, drive),
        store_every=store_every,
    )
    return _assemble(params, drive, x, t, s_red, store_every)


def solve_full_kernel(
    params: DynamicsParams, drive: Drive, x_grid, t_grid, store_every: int = 1
) -> ExcitonField:
    """Solution including the backward-scattered branch of the |x - x'| kernel.

    Toy scale only: L <= 5 um and x-step <= lambda/20, so that the 2 k0
    oscillation of the backward branch is resolved.
    """
    if params.length > FULL_KERNEL_MAX_LENGTH:
        raise GridError(
            f"full kernel refuses L = {params.length:.4g} nm > {FULL_KERNEL_MAX_LENGTH:.0f} nm"
        )
    x, h = _check_uniform(x_grid)
    _check_domain(params, x, h)
    wavelength = 2 * math.pi / params.k0
    if h > wavelength / FULL_KERNEL_STEPS_PER_WAVELENGTH * (1 + 1e-9):
        raise GridError(f"x-step {h:.4g} nm exceeds lambda/20 = {wavelength / 20:.4g} nm")
    t = _check_t(t_grid)
    k_ref, _ = _carrier(params, drive)
    dk_b = params.k0 * params.nu + k_ref
    s_red = integrate_reduced(
        np.ones_like(x, dtype=complex), x, t, params.kappa, _forward_dk(params, drive), dk_b,
        store_every=store_every,
    )
    return _assemble(params, drive, x, t, s_red, store_every)


def full_kernel_grid(params: DynamicsParams, multiple: int = 4):
    wavelength = 2 * math.pi / params.k0
    return make_x_grid(params, wavelength / FULL_KERNEL_STEPS_PER_WAVELENGTH, multiple)


def emitted_field_numeric(field: ExcitonField, rtol: float = 1e-3) -> FieldTrace:
    """Exit field b(t) = i kappa int exp(-i k0 nu x) sigma(x, t) dx by Simpson's rule.

    The quadrature error is estimated by comparing with the rule on every
    second point (Richardson, /15); raises GridError above ``rtol`` of peak |b|.
    """
    x, h = _check_uniform(field.x_grid)
    if (x.size - 1) % 2:
        raise GridError("emission quadrature needs an odd number of x samples")
    p = field.params
    integrand = np.exp(-1j * p.k0 * p.nu * x)[None, :] * field.sigma
    fine = integrate.simpson(integrand, dx=h, axis=1)
    coarse = integrate.simpson(integrand[:, ::2], dx=2 * h, axis=1)
    b = 1j * p.kappa * fine
    err = abs(p.kappa) * np.abs(fine - coarse) / 15.0
    peak = np.max(np.abs(b)) if b.size else 0.0
    if err.size and np.max(err) > rtol * peak:
        raise GridError(
            f"emission quadrature error {np.max(err):.3g} exceeds {rtol} of peak {peak:.3g}"
        )
    meta = {"geometry": field.drive.geometry, "source": "numeric quadrature"}
    return FieldTrace(field.t_grid, b, meta)
