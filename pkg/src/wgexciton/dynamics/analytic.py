"""Closed-form exciton dynamics in the two experimental limits.

All delays ``t`` are retarded (co-moving) delays: the time since the pulse
passed the point ``x``.  In that frame the forward-scattering equation has no
explicit propagation delay, and the results below are exact solutions of it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .params import (
    FRONT_COUPLING,
    GRAZING_INCIDENCE,
    Drive,
    DynamicsParams,
    one_minus_cos,
    require_geometry,
)

_PROFILE_NOTE = "field at depth z scales as u_m(z)/u_m(z0)"


@dataclass
class FieldTrace:
    """Field envelope b(t) at the waveguide exit x = 0.

    ``b`` is a Rabi frequency (1/ns) proportional to the pulse area; the
    overall detection scale is left to fitted amplitudes.
    """

    t_grid: np.ndarray
    b: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.b = np.asarray(self.b, dtype=complex)
        if self.t_grid.shape != self.b.shape:
            raise ValueError("t_grid and b must have the same shape")
        self.metadata.setdefault("profile_factor", _PROFILE_NOTE)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.b) ** 2

    def detuned(self, detuning: float) -> "FieldTrace":
        """The same response from a line shifted by ``detuning`` (rad/ns)."""
        return FieldTrace(self.t_grid, self.b * np.exp(-1j * detuning * self.t_grid), dict(self.metadata))

    def to_csv(self, path) -> None:
        header = "".join(f"# {k} = {v}\n" for k, v in sorted(self.metadata.items()))
        rows = np.column_stack([self.t_grid, self.b.real, self.b.imag, self.intensity])
        with open(path, "w", newline="") as fh:
            fh.write(header)
            fh.write("t_ns,re_b,im_b,abs_b2\n")
            np.savetxt(fh, rows, delimiter=",", fmt="%.12e")

    @classmethod
    def from_csv(cls, path) -> "FieldTrace":
        meta, body = read_commented_csv(path)
        return cls(body["t_ns"], body["re_b"] + 1j * body["im_b"], meta)


def read_commented_csv(path):
    """Read a CSV with ``# key = value`` header lines; returns (meta, columns)."""
    meta, rows, names = {}, [], None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if " = " in line:
                key, value = line[1:].strip().split(" = ", 1)
                meta[key] = value
        elif names is None:
            names = [n.strip() for n in line.split(",")]
        else:
            rows.append([float(v) for v in line.split(",")])
    if names is None:
        raise ValueError(f"{path}: no column header line")
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return meta, {n: data[:, i] for i, n in enumerate(names)}


def _causal(t):
    return np.asarray(t, dtype=float) >= 0


def two_j1_over_x(u):
    """2 J1(u)/u, equal to 1 at u = 0 (series used near the origin)."""
    u = np.asarray(u, dtype=complex)
    out = np.ones_like(u)
    small = np.abs(u) < 1e-4
    out[small] = 1.0 - u[small] ** 2 / 8.0
    big = ~small
    out[big] = 2.0 * special.jv(1, u[big]) / u[big]
    return out


def analytic_fc(params: DynamicsParams, drive: Drive, x, t):
    """sigma(x, t) for front coupling (nuclear-forward-scattering form).

    ``x`` in [-L, 0] (entrance at -L), ``t`` retarded delay in ns.
    """
    require_geometry(drive, FRONT_COUPLING)
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    ell = x + params.length
    if np.any(ell < -1e-9 * params.length) or np.any(x > 1e-9 * params.length):
        raise ValueError("x must lie in [-L, 0]")
    ell = np.clip(ell, 0.0, None)
    tr = np.where(_causal(t), t, 0.0)
    arg = np.sqrt(params.gamma * tr * ell * params.zeta / params.lambda_res + 0j)
    sigma = (
        1j
        * drive.amplitude
        * np.exp(1j * params.k0 * params.nu * ell - 0.5 * params.gamma * tr)
        * special.jv(0, arg)
    )
    return np.where(_causal(t), sigma, 0j)


def detuning_wavenumber(params: DynamicsParams, theta_in: float) -> float:
    """q = k0 (cos theta_in - Re nu), computed without cancellation."""
    return params.k0 * (params.deficit.real - one_minus_cos(theta_in))


def frequency_shift(params: DynamicsParams, theta_in) -> complex:
    """Complex collective shift eta (1/ns) of a mode excited at ``theta_in``.

    Re(eta) is the collective Lamb shift; 2 Im(eta) adds to the intensity
    decay rate.  Equivalent to (zeta Lambda_m/Lambda_res)(gamma/2)/(2 Lambda_m q - i).
    """
    q = detuning_wavenumber(params, theta_in)
    return params.kappa / (q - 1j * params.k0 * params.nu.imag)


def decay_rate(params: DynamicsParams, theta_in) -> float:
    """Intensity decay rate in units of gamma: 1 + 2 Im(eta)/gamma."""
    return 1.0 + 2.0 * np.imag(frequency_shift(params, theta_in)) / params.gamma


def peak_speedup(params: DynamicsParams) -> float:
    """1 + zeta Lambda_m / Lambda_res, the on-resonance rate in units of gamma."""
    return float(1.0 + (params.zeta * params.lambda_m / params.lambda_res).real)


def analytic_gi(params: DynamicsParams, drive: Drive, x, t):
    """sigma(x, t) for grazing incidence, valid far from the entrance."""
    require_geometry(drive, GRAZING_INCIDENCE)
    if params.length < 5 * params.lambda_m:
        warnings.warn(
            f"L = {params.length:.3g} nm < 5 Lambda_m: entrance effects not negligible",
            stacklevel=2,
        )
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    eta = frequency_shift(params, drive.theta_in)
    tr = np.where(_causal(t), t, 0.0)
    kx = params.k0 * (1.0 - one_minus_cos(drive.theta_in))
    sigma = 1j * drive.amplitude * np.exp(1j * kx * x - (0.5 * params.gamma - 1j * eta) * tr)
    return np.where(_causal(t), sigma, 0j)


def emitted_field_fc(params: DynamicsParams, drive: Drive, t_grid) -> FieldTrace:
    """Exit field of the front-coupled guide: a foil of thickness zeta L."""
    require_geometry(drive, FRONT_COUPLING)
    t = np.asarray(t_grid, dtype=float)
    tr = np.where(_causal(t), t, 0.0)
    depth = params.optical_depth
    u = np.sqrt(params.gamma * tr * depth + 0j)
    b = (
        -drive.amplitude
        * 0.25
        * params.gamma
        * depth
        * np.exp(1j * params.k0 * params.nu * params.length - 0.5 * params.gamma * tr)
        * two_j1_over_x(u)
    )
    b = np.where(_causal(t), b, 0j)
    meta = {"geometry": FRONT_COUPLING, "optical_depth": f"{depth.real:.6g}"}
    return _apply_pulse(FieldTrace(t, b, meta), drive)


def emitted_field_gi(params: DynamicsParams, drive: Drive, t_grid) -> FieldTrace:
    """Exit field for grazing incidence; falls off as a Lorentzian in q."""
    require_geometry(drive, GRAZING_INCIDENCE)
    t = np.asarray(t_grid, dtype=float)
    tr = np.where(_causal(t), t, 0.0)
    eta = frequency_shift(params, drive.theta_in)
    b = 1j * drive.amplitude * eta * np.exp(-(0.5 * params.gamma - 1j * eta) * tr)
    b = np.where(_causal(t), b, 0j)
    meta = {"geometry": GRAZING_INCIDENCE, "theta_in_rad": f"{drive.theta_in:.9g}"}
    return _apply_pulse(FieldTrace(t, b, meta), drive)


def convolve_pulse(trace: FieldTrace, pulse) -> FieldTrace:
    """Response to a finite pulse: the delta response averaged over Pi(t')."""
    w = pulse.envelope / pulse.envelope.sum()
    t = trace.t_grid
    out = np.zeros_like(trace.b)
    for tk, wk in zip(pulse.t - pulse.t[0], w):
        shifted = t - tk
        re = np.interp(shifted, t, trace.b.real, left=0.0)
        im = np.interp(shifted, t, trace.b.imag, left=0.0)
        out += wk * (re + 1j * im)
    meta = dict(trace.metadata, pulse_duration_ns=f"{pulse.duration:.6g}")
    return FieldTrace(t, out, meta)


def _apply_pulse(trace: FieldTrace, drive: Drive) -> FieldTrace:
    return trace if drive.pulse is None else convolve_pulse(trace, drive.pulse)
