"""Detector-level intensity traces from ideal single-line fields.

Hyperfine structure enters as a distribution of line detunings: a quadrupole
doublet at +-splitting/2, each line Gaussian broadened.  A detuned line
multiplies the single-line field by exp(-i D t).  The lines of the exciton
radiate into the same mode, so their amplitudes are summed before squaring.
Angular divergence is incoherent and averages intensities.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import constants
from .dynamics.analytic import FieldTrace, read_commented_csv

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
DEFAULT_GATE = (13.0, constants.REPETITION_PERIOD_NS)


@dataclass(frozen=True)
class HyperfineModel:
    """Line distribution; widths in units of gamma."""

    broadening_fwhm: float = 0.0
    quad_splitting: float = 0.0
    n_lines: int = 9  # Gauss-Hermite nodes per doublet line

    def __post_init__(self):
        if self.broadening_fwhm < 0 or self.quad_splitting < 0:
            raise ValueError("broadening and splitting must be >= 0")
        if self.n_lines < 1 or self.n_lines % 2 == 0:
            raise ValueError("n_lines must be odd and >= 1")

    @property
    def is_trivial(self) -> bool:
        return self.broadening_fwhm == 0 and self.quad_splitting == 0

    def lines(self, gamma: float = constants.FE57_GAMMA):
        """Detunings (rad/ns) and weights (sum 1) of the discrete line set."""
        centres = [0.0] if self.quad_splitting == 0 else [-0.5, 0.5]
        centres = np.array(centres) * self.quad_splitting * gamma
        if self.broadening_fwhm == 0:
            nodes, weights = np.zeros(1), np.ones(1)
        else:
            nodes, weights = np.polynomial.hermite_e.hermegauss(self.n_lines)
            weights = weights / weights.sum()
            nodes = nodes * self.broadening_fwhm * FWHM_TO_SIGMA * gamma
        det = (centres[:, None] + nodes[None, :]).ravel()
        w = np.repeat(np.full(centres.size, 1.0 / centres.size), nodes.size) * np.tile(
            weights, centres.size
        )
        return det, w

    def envelope(self, t, gamma: float = constants.FE57_GAMMA):
        """Exact continuum limit sum_j w_j exp(-i D_j t) of the line set."""
        t = np.asarray(t, dtype=float)
        sig = self.broadening_fwhm * FWHM_TO_SIGMA * gamma
        return np.cos(0.5 * self.quad_splitting * gamma * t) * np.exp(-0.5 * (sig * t) ** 2)


@dataclass(frozen=True)
class DivergenceModel:
    fwhm: float = 0.0  # rad, uniform full width
    n_angles: int = 21
    distribution: str = "uniform"

    def __post_init__(self):
        if self.fwhm < 0:
            raise ValueError("divergence fwhm must be >= 0")
        if self.n_angles < 1 or self.n_angles % 2 == 0:
            raise ValueError("n_angles must be odd and >= 1")
        if self.distribution != "uniform":
            raise ValueError("only the uniform distribution is supported")

    def angles(self, theta: float) -> np.ndarray:
        """Midpoint samples of [theta - w/2, theta + w/2], ascending."""
        if self.fwhm == 0:
            return np.array([theta])
        j = np.arange(self.n_angles)
        return theta - 0.5 * self.fwhm + self.fwhm * (j + 0.5) / self.n_angles


@dataclass
class TimeTrace:
    """Intensity (arbitrary units) or counts per time bin."""

    t_grid: np.ndarray
    intensity: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    gate: tuple = (0.0, constants.REPETITION_PERIOD_NS)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.intensity is None and self.counts is None:
            raise ValueError("trace needs intensity or counts")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=float)
            if self.intensity.shape != self.t_grid.shape:
                raise ValueError("intensity shape mismatch")
            if np.any(self.intensity < 0) or not np.all(np.isfinite(self.intensity)):
                raise ValueError("intensity must be finite and >= 0")
        if self.counts is not None:
            counts = np.asarray(self.counts)
            if counts.shape != self.t_grid.shape:
                raise ValueError("counts shape mismatch")
            if np.any(counts < 0) or np.any(counts != np.round(counts)):
                raise ValueError("counts must be nonnegative integers")
            self.counts = counts.astype(np.int64)
        lo, hi = self.gate
        if not 0 <= lo < hi <= constants.REPETITION_PERIOD_NS:
            raise ValueError(
                f"gate {self.gate} must lie within the {constants.REPETITION_PERIOD_NS} ns period"
            )

    @property
    def values(self) -> np.ndarray:
        """Counts when present, else intensity."""
        return self.counts.astype(float) if self.counts is not None else self.intensity

    def gated(self, gate: Optional[tuple] = None) -> "TimeTrace":
        """Restrict to bins with gate[0] <= t <= gate[1]."""
        gate = self.gate if gate is None else tuple(gate)
        sel = (self.t_grid >= gate[0]) & (self.t_grid <= gate[1])
        return TimeTrace(
            self.t_grid[sel],
            None if self.intensity is None else self.intensity[sel],
            None if self.counts is None else self.counts[sel],
            gate,
            dict(self.provenance),
        )

    def scaled(self, factor: float) -> "TimeTrace":
        if self.intensity is None:
            raise ValueError("only intensity traces can be scaled")
        return TimeTrace(self.t_grid, self.intensity * factor, None, self.gate, dict(self.provenance))

    def to_csv(self, path) -> None:
        meta = dict(self.provenance, gate_ns=f"{self.gate[0]:g},{self.gate[1]:g}")
        cols, names = [self.t_grid], ["t_ns"]
        if self.intensity is not None:
            cols.append(self.intensity)
            names.append("intensity")
        if self.counts is not None:
            cols.append(self.counts)
            names.append("counts")
        with open(path, "w", newline="") as fh:
            fh.write("".join(f"# {k} = {v}\n" for k, v in sorted(meta.items())))
            fh.write(",".join(names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TimeTrace":
        meta, cols = read_commented_csv(path)
        if "t_ns" not in cols:
            raise ValueError(f"{path}: missing t_ns column")
        gate = (0.0, constants.REPETITION_PERIOD_NS)
        if "gate_ns" in meta:
            gate = tuple(float(v) for v in meta.pop("gate_ns").split(","))
        return cls(
            cols["t_ns"],
            cols.get("intensity"),
            None if "counts" not in cols else np.round(cols["counts"]).astype(np.int64),
            gate,
            meta,
        )


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return f"{float(v):.12e}"


def _trace_from_field(t, intensity, provenance):
    return TimeTrace(t, np.clip(intensity, 0.0, None), provenance=provenance)


def hyperfine_average(
    base: Callable[[float], FieldTrace],
    model: HyperfineModel,
    gamma: float = constants.FE57_GAMMA,
    check: bool = True,
) -> TimeTrace:
    """Intensity |sum_j w_j b(t; D_j)|^2 over the hyperfine line set.

    ``base(detuning)`` returns the single-line field for a line shifted by
    ``detuning`` (rad/ns).  With ``check`` the quadrature is repeated with
    2 n + 1 nodes and a ValueError raised if the change exceeds 1% of peak.
    """
    prov = {
        "hyperfine_broadening_gamma": f"{model.broadening_fwhm:g}",
        "hyperfine_splitting_gamma": f"{model.quad_splitting:g}",
        "hyperfine_nodes": str(model.n_lines),
    }
    if model.is_trivial:
        bare = base(0.0)
        return _trace_from_field(bare.t_grid, bare.intensity, prov)
    intensity, t = _coherent_sum(base, model, gamma)
    if check and model.broadening_fwhm > 0:
        finer = HyperfineModel(model.broadening_fwhm, model.quad_splitting, 2 * model.n_lines + 1)
        ref, _ = _coherent_sum(base, finer, gamma)
        err = np.max(np.abs(ref - intensity))
        if err > 0.01 * np.max(ref):
            raise ValueError(
                f"n_lines = {model.n_lines} too small: quadrature change {err / np.max(ref):.2%}"
            )
    return _trace_from_field(t, intensity, prov)


def _coherent_sum(base, model, gamma):
    det, w = model.lines(gamma)
    total, t = None, None
    for dj, wj in zip(det, w):
        trace = base(float(dj))
        t = trace.t_grid
        total = wj * trace.b if total is None else total + wj * trace.b
    return np.abs(total) ** 2, t


def detuned_generator(trace: FieldTrace) -> Callable[[float], FieldTrace]:
    """Generator for ``hyperfine_average`` from a single resonant-line trace."""
    return trace.detuned


def divergence_average(
    base: Callable[[float], TimeTrace], model: DivergenceModel, theta_nominal: float
) -> TimeTrace:
    """Mean intensity over uniformly distributed incidence angles."""
    thetas = np.sort(model.angles(theta_nominal))
    traces = [base(float(th)) for th in thetas]
    if model.fwhm == 0:
        out = traces[0]
    else:
        stack = np.array([tr.intensity for tr in traces])
        out = TimeTrace(traces[0].t_grid, stack.mean(axis=0), provenance=dict(traces[0].provenance))
    out.provenance.update(
        divergence_fwhm_mdeg=f"{math.degrees(model.fwhm) * 1e3:g}",
        divergence_samples=str(thetas.size),
    )
    return out


def poissonize(trace: TimeTrace, total_counts: int, seed: int) -> TimeTrace:
    """Poisson counts with expected total ``total_counts`` (deterministic per seed)."""
    if total_counts <= 0:
        raise ValueError("total_counts must be > 0")
    if trace.intensity is None:
        raise ValueError("poissonize needs an intensity trace")
    total = trace.intensity.sum()
    rng = np.random.default_rng(seed)
    mean = trace.intensity * (total_counts / total) if total > 0 else trace.intensity
    counts = rng.poisson(mean)
    prov = dict(trace.provenance, total_counts=str(total_counts), seed=str(seed))
    return TimeTrace(trace.t_grid, trace.intensity, counts, trace.gate, prov)


def apply_gate(trace: TimeTrace, gate=DEFAULT_GATE) -> TimeTrace:
    """Keep only bins inside the detector gate (prompt pulse excluded)."""
    return trace.gated(gate)


def config_digest(items: dict) -> str:
    """Stable sha256 of a flat parameter dictionary."""
    text = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(text.encode()).hexdigest()


def multiline_gi_field(
    eta_per_unit: complex, gamma: float, detunings, weights, t, amplitude: complex = 1e-3
) -> np.ndarray:
    """Exit field of a GI exciton whose lines share the mode self-consistently.

    Each line j obeys ds_j/dt = -(gamma/2 + i D_j) s_j + i eta sum_k w_k s_k,
    with eta the single-line shift; the emitted field is i A eta sum_k w_k s_k.
    With a single line this reduces to ``emitted_field_gi``.
    """
    d = np.asarray(detunings, dtype=float)
    w = np.asarray(weights, dtype=float)
    mat = -np.diag(0.5 * gamma + 1j * d) + 1j * eta_per_unit * np.outer(np.ones_like(w), w)
    vals, vecs = np.linalg.eig(mat)
    coef = np.linalg.solve(vecs, np.ones_like(w, dtype=complex))
    t = np.asarray(t, dtype=float)
    s = (vecs * coef) @ np.exp(np.outer(vals, np.clip(t, 0, None)))
    b = 1j * amplitude * eta_per_unit * (w @ s)
    return np.where(t >= 0, b, 0j)


def average_intensities(traces: Sequence[TimeTrace]) -> TimeTrace:
    stack = np.array([tr.intensity for tr in traces])
    return TimeTrace(traces[0].t_grid, stack.mean(axis=0), provenance=dict(traces[0].provenance))
