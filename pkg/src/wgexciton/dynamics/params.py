"""Parameter containers for the exciton equation of motion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import constants

FRONT_COUPLING = "front_coupling"
GRAZING_INCIDENCE = "grazing_incidence"
GEOMETRIES = (FRONT_COUPLING, GRAZING_INCIDENCE)

# largest pulse area still treated as linear response
MAX_PULSE_AREA = 0.1


@dataclass(frozen=True)
class DynamicsParams:
    """One propagation channel: a waveguide mode (nu, zeta) or a slab (n, 1).

    Lengths in nm, rates in 1/ns.  ``deficit = 1 - nu`` is carried separately
    because it is the physically relevant small number; when omitted it is
    computed from ``nu``.
    """

    nu: complex
    zeta: complex
    lambda_res: float
    length: float
    gamma: float = constants.FE57_GAMMA
    k0: float = constants.FE57_K0
    deficit: Optional[complex] = None

    def __post_init__(self):
        object.__setattr__(self, "nu", complex(self.nu))
        object.__setattr__(self, "zeta", complex(self.zeta))
        if self.deficit is None:
            object.__setattr__(self, "deficit", complex(1.0 - self.nu))
        else:
            object.__setattr__(self, "deficit", complex(self.deficit))
        if self.nu.imag < 0:
            raise ValueError(f"Im(nu) must be >= 0, got {self.nu!r}")
        for name in ("lambda_res", "length", "gamma", "k0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @classmethod
    def from_mode(cls, mode, stack, length: float) -> "DynamicsParams":
        res = stack.resonant
        return cls(
            nu=mode.nu,
            zeta=mode.zeta,
            lambda_res=res.attenuation_length,
            length=length,
            gamma=res.gamma,
            k0=stack.k0,
            deficit=mode.deficit,
        )

    @classmethod
    def slab(cls, delta: float, beta: float, lambda_res: float, length: float, **kw):
        """Homogeneous foil: nu = n = 1 - delta + i beta and zeta = 1."""
        return cls(
            nu=complex(1 - delta, beta),
            zeta=1.0,
            lambda_res=lambda_res,
            length=length,
            deficit=complex(delta, -beta),
            **kw,
        )

    @property
    def kappa(self) -> complex:
        """Coupling rate density gamma*zeta/(4 Lambda_res), 1/(ns nm)."""
        return self.gamma * self.zeta / (4.0 * self.lambda_res)

    @property
    def lambda_m(self) -> float:
        """Off-resonance attenuation length of the channel (inf if lossless)."""
        if self.nu.imag == 0:
            return math.inf
        return 1.0 / (2.0 * self.k0 * self.nu.imag)

    @property
    def theta_m(self) -> float:
        return 2.0 * math.asin(math.sqrt(0.5 * self.deficit.real))

    @property
    def optical_depth(self) -> complex:
        """Effective foil thickness zeta*L/Lambda_res."""
        return self.zeta * self.length / self.lambda_res

    def replace(self, **changes) -> "DynamicsParams":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "nu" in changes and "deficit" not in changes:
            data["deficit"] = None
        data.update(changes)
        return DynamicsParams(**data)


@dataclass(frozen=True)
class Pulse:
    """Tabulated excitation envelope Pi(t); normalized to unit area on use."""

    t: np.ndarray
    envelope: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        env = np.asarray(self.envelope, dtype=float)
        if t.shape != env.shape or t.ndim != 1 or t.size < 2:
            raise ValueError("pulse needs matching 1-D t and envelope arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("pulse times must increase")
        if np.any(env < 0) or not env.sum() > 0:
            raise ValueError("pulse envelope must be nonnegative and nonzero")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "envelope", env)

    @property
    def duration(self) -> float:
        """Effective duration: area divided by peak value (ns)."""
        return float(np.trapezoid(self.envelope, self.t) / self.envelope.max())

    @classmethod
    def gaussian(cls, fwhm: float, n: int = 41) -> "Pulse":
        sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
        t = np.linspace(0.0, 8 * sigma, n)
        return cls(t, np.exp(-0.5 * ((t - 4 * sigma) / sigma) ** 2))


@dataclass(frozen=True)
class Drive:
    """Excitation: geometry, pulse area and (for GI) incidence angle."""

    geometry: str
    amplitude: complex = 1e-3
    theta_in: Optional[float] = None  # rad
    pulse: Optional[Pulse] = field(default=None, repr=False)  # None = delta pulse

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if abs(self.amplitude) > MAX_PULSE_AREA:
            raise ValueError(
                f"|A| = {abs(self.amplitude)} exceeds {MAX_PULSE_AREA}: outside linear response"
            )
        if self.geometry == GRAZING_INCIDENCE:
            if self.theta_in is None or not 0 < self.theta_in < math.pi / 2:
                raise ValueError("grazing incidence needs 0 < theta_in < pi/2")

    @classmethod
    def front(cls, amplitude: complex = 1e-3, pulse: Optional[Pulse] = None) -> "Drive":
        return cls(FRONT_COUPLING, amplitude, None, pulse)

    @classmethod
    def grazing(cls, theta_in: float, amplitude: complex = 1e-3, pulse=None) -> "Drive":
        return cls(GRAZING_INCIDENCE, amplitude, theta_in, pulse)

    @property
    def pulse_duration(self) -> float:
        return 0.0 if self.pulse is None else self.pulse.duration


def one_minus_cos(theta):
    """1 - cos(theta) without cancellation."""
    return 2.0 * np.sin(0.5 * np.asarray(theta)) ** 2


def require_geometry(drive: Drive, geometry: str):
    if drive.geometry != geometry:
        raise ValueError(f"expected a {geometry} drive, got {drive.geometry}")
