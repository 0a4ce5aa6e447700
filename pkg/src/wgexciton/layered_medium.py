"""Planar layer systems, their optical constants and the embedded resonant layer.

Depth ``z`` increases downward from the top surface of the first finite layer
(``z = 0``).  The ambient medium (first layer) occupies ``z < 0`` and the
substrate (last layer) everything below the stack.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import constants


class StackParseError(ValueError):
    """The stack configuration file could not be parsed."""


class StackValidationError(ValueError):
    """A stack violates one of its invariants.

    ``field`` names the offending entry (``"layer:Mo.thickness_nm"`` style).
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class OpticalConstants:
    """Refractive index n = 1 - delta + i*beta at the working energy."""

    delta: float
    beta: float

    def __post_init__(self):
        for name in ("delta", "beta"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1e-3):
                raise StackValidationError(name, f"must lie in [0, 1e-3], got {value!r}")

    @property
    def n(self) -> complex:
        return complex(1.0 - self.delta, self.beta)

    @property
    def epsilon(self) -> complex:
        return self.n ** 2


VACUUM = OpticalConstants(0.0, 0.0)


@dataclass(frozen=True)
class Layer:
    label: str
    thickness: float  # nm, math.inf for the outer claddings
    optics: OpticalConstants

    @property
    def semi_infinite(self) -> bool:
        return math.isinf(self.thickness)


@dataclass(frozen=True)
class ResonantLayerSpec:
    """Thin layer of resonant nuclei embedded in the guiding core.

    Either ``lambda_res`` or ``sigma_res`` may be omitted; the other follows
    from Lambda_res = 1/(rho*sigma_res).  When both are given they must agree.
    ``optics`` are the off-resonant optical constants of the layer material;
    they are overlaid on the host layer when building the permittivity profile.
    """

    z0: float  # nm, depth of the layer centre
    d: float  # nm
    rho: float  # nm^-3
    energy: float = constants.FE57_ENERGY_KEV  # keV
    gamma_nev: float = constants.FE57_GAMMA_NEV
    lambda_res: Optional[float] = None  # nm
    sigma_res: Optional[float] = None  # nm^2
    optics: Optional[OpticalConstants] = None

    def __post_init__(self):
        if not self.d > 0:
            raise StackValidationError("resonant.d_nm", "must be > 0")
        if not self.rho > 0:
            raise StackValidationError("resonant.rho_per_nm3", "must be > 0")
        if not self.gamma_nev > 0:
            raise StackValidationError("resonant.gamma_neV", "must be > 0")
        if self.lambda_res is None and self.sigma_res is None:
            raise StackValidationError(
                "resonant.Lambda_res_nm", "give Lambda_res_nm or sigma_res_nm2"
            )
        if self.lambda_res is not None and not self.lambda_res > 0:
            raise StackValidationError("resonant.Lambda_res_nm", "must be > 0")
        if self.sigma_res is not None and not self.sigma_res > 0:
            raise StackValidationError("resonant.sigma_res_nm2", "must be > 0")
        if self.lambda_res is not None and self.sigma_res is not None:
            derived = 1.0 / (self.rho * self.sigma_res)
            if abs(derived - self.lambda_res) > 1e-12 * self.lambda_res:
                raise StackValidationError(
                    "resonant.sigma_res_nm2",
                    f"1/(rho*sigma_res) = {derived!r} conflicts with Lambda_res_nm = "
                    f"{self.lambda_res!r}",
                )

    @property
    def attenuation_length(self) -> float:
        """On-resonance attenuation length Lambda_res (nm)."""
        if self.lambda_res is not None:
            return self.lambda_res
        return 1.0 / (self.rho * self.sigma_res)

    @property
    def cross_section(self) -> float:
        if self.sigma_res is not None:
            return self.sigma_res
        return 1.0 / (self.rho * self.lambda_res)

    @property
    def gamma(self) -> float:
        """Natural decay rate in ns^-1."""
        return constants.linewidth_to_rate(self.gamma_nev)

    @property
    def k0(self) -> float:
        return constants.wavenumber(self.energy)

    @property
    def top(self) -> float:
        return self.z0 - 0.5 * self.d

    @property
    def bottom(self) -> float:
        return self.z0 + 0.5 * self.d


@dataclass(frozen=True)
class LayerStack:
    layers: tuple
    resonant: ResonantLayerSpec
    energy: float = constants.FE57_ENERGY_KEV  # keV
    name: str = ""
    interfaces: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        layers = self.layers
        if len(layers) == 0:
            raise StackValidationError("layers", "stack has no layers")
        if len(layers) < 3:
            raise StackValidationError(
                "layers", "need ambient, at least one finite layer and substrate"
            )
        for i, layer in enumerate(layers):
            outer = i in (0, len(layers) - 1)
            if layer.semi_infinite and not outer:
                raise StackValidationError(
                    f"layer:{layer.label}.thickness_nm",
                    "only the two outermost layers may be semi-infinite",
                )
            if not layer.semi_infinite and not layer.thickness > 0:
                raise StackValidationError(f"layer:{layer.label}.thickness_nm", "must be > 0")
        for i in (0, len(layers) - 1):
            if not layers[i].semi_infinite:
                raise StackValidationError(
                    f"layer:{layers[i].label}.thickness_nm", "outer layers must be 'inf'"
                )
        if not self.energy > 0:
            raise StackValidationError("stack.energy_keV", "must be > 0")
        interfaces = np.concatenate([[0.0], np.cumsum([l.thickness for l in layers[1:-1]])])
        object.__setattr__(self, "interfaces", interfaces)
        self._check_resonant_in_core()

    def _check_resonant_in_core(self):
        res = self.resonant
        core = self.core_index
        if core is None:
            raise StackValidationError(
                "resonant.z0_nm", f"z0 = {res.z0!r} is not inside a finite layer"
            )
        top, bottom = self.interfaces[core - 1], self.interfaces[core]
        if res.top < top or res.bottom > bottom:
            raise StackValidationError(
                "resonant.z0_nm", "resonant layer crosses an interface of its host layer"
            )

    def check_guiding_core(self):
        """Raise unless the resonant layer's host has lower delta than both neighbours."""
        core = self.core_index
        delta_core = self.layers[core].optics.delta
        neighbours = (self.layers[core - 1].optics.delta, self.layers[core + 1].optics.delta)
        if not all(delta_core < dn for dn in neighbours):
            raise StackValidationError(
                "resonant.z0_nm",
                f"host layer {self.layers[core].label!r} is not a guiding core "
                "(its delta must be below both neighbours)",
            )
        return self

    @property
    def k0(self) -> float:
        return constants.wavenumber(self.energy)

    @property
    def wavelength(self) -> float:
        return constants.wavelength(self.energy)

    @property
    def total_thickness(self) -> float:
        return float(self.interfaces[-1])

    @property
    def core_index(self) -> Optional[int]:
        """Index into ``layers`` of the finite layer hosting the resonant layer."""
        z0 = self.resonant.z0
        for i in range(1, len(self.layers) - 1):
            if self.interfaces[i - 1] <= z0 < self.interfaces[i]:
                return i
        return None

    @property
    def max_delta(self) -> float:
        return max(l.optics.delta for l in self.layers)

    def optical_layers(self):
        """Effective layer sequence with the resonant layer spliced into its host.

        Returns ``(ambient, [(optics, thickness), ...], substrate)``.
        """
        res = self.resonant
        core = self.core_index
        finite = []
        for i, layer in enumerate(self.layers[1:-1], start=1):
            if i == core and res.optics is not None:
                top = res.top - self.interfaces[i - 1]
                bottom = self.interfaces[i] - res.bottom
                if top > 0:
                    finite.append((layer.optics, top))
                finite.append((res.optics, res.d))
                if bottom > 0:
                    finite.append((layer.optics, bottom))
            else:
                finite.append((layer.optics, layer.thickness))
        return self.layers[0].optics, finite, self.layers[-1].optics


def permittivity_profile(stack: LayerStack, z) -> np.ndarray:
    """Complex relative permittivity eps(z) = n(z)^2 at depths ``z`` (nm).

    At an interface the lower layer applies.
    """
    z = np.asarray(z, dtype=float)
    ambient, finite, substrate = stack.optical_layers()
    bounds = np.concatenate([[0.0], np.cumsum([t for _, t in finite])])
    eps = np.array(
        [ambient.epsilon] + [o.epsilon for o, _ in finite] + [substrate.epsilon],
        dtype=complex,
    )
    idx = np.searchsorted(bounds, z, side="right")
    return eps[idx]


# --- configuration files ---------------------------------------------------

_LAYER_PREFIX = "layer:"


def _get_float(section, key, where, required=True):
    raw = section.get(key)
    if raw is None:
        if required:
            raise StackValidationError(f"{where}.{key}", "missing")
        return None
    try:
        return float(raw)
    except ValueError:
        raise StackParseError(f"{where}.{key}: cannot parse {raw!r} as a number") from None


def parse_stack(text: str, name: str = "") -> LayerStack:
    """Build a ``LayerStack`` from configuration text (see ``load_stack``)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise StackParseError(str(exc)) from exc

    energy = constants.FE57_ENERGY_KEV
    if parser.has_section("stack"):
        energy = _get_float(parser["stack"], "energy_keV", "stack", required=False) or energy
        name = parser["stack"].get("name", name)

    layers = []
    for sec_name in parser.sections():
        if not sec_name.startswith(_LAYER_PREFIX):
            continue
        label = sec_name[len(_LAYER_PREFIX):].strip()
        where = sec_name
        sec = parser[sec_name]
        raw_t = sec.get("thickness_nm")
        if raw_t is None:
            raise StackValidationError(f"{where}.thickness_nm", "missing")
        if raw_t.strip().lower() == "inf":
            thickness = math.inf
        else:
            thickness = _get_float(sec, "thickness_nm", where)
        delta, beta = _get_float(sec, "delta", where), _get_float(sec, "beta", where)
        try:
            optics = OpticalConstants(delta, beta)
        except StackValidationError as exc:
            raise StackValidationError(f"{where}.{exc.field}", str(exc).split(": ", 1)[1]) from None
        layers.append(Layer(label, thickness, optics))

    if not parser.has_section("resonant"):
        raise StackValidationError("resonant", "missing [resonant] section")
    sec = parser["resonant"]
    res_optics = None
    if "delta" in sec or "beta" in sec:
        res_optics = OpticalConstants(
            _get_float(sec, "delta", "resonant"), _get_float(sec, "beta", "resonant")
        )
    resonant = ResonantLayerSpec(
        z0=_get_float(sec, "z0_nm", "resonant"),
        d=_get_float(sec, "d_nm", "resonant"),
        rho=_get_float(sec, "rho_per_nm3", "resonant"),
        energy=_get_float(sec, "E0_keV", "resonant", required=False) or energy,
        gamma_nev=_get_float(sec, "gamma_neV", "resonant", required=False)
        or constants.FE57_GAMMA_NEV,
        lambda_res=_get_float(sec, "Lambda_res_nm", "resonant", required=False),
        sigma_res=_get_float(sec, "sigma_res_nm2", "resonant", required=False),
        optics=res_optics,
    )
    return LayerStack(layers, resonant, energy=energy, name=name).check_guiding_core()


def load_stack(config_path) -> LayerStack:
    """Load and validate a layer stack from a configuration file.

    The file is INI-style: an optional ``[stack]`` section (``name``,
    ``energy_keV``), one ``[layer:<label>]`` section per layer from top to
    bottom (``thickness_nm`` or ``inf``, ``delta``, ``beta``) and a single
    ``[resonant]`` section.  See ``docs/stack_format.md``.
    """
    path = Path(config_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StackParseError(f"cannot read stack file {str(path)!r}: {exc.strerror}") from exc
    return parse_stack(text, name=path.stem)


def dump_stack(stack: LayerStack) -> str:
    """Serialize a stack to configuration text; ``parse_stack`` inverts it.

    Sections are keyed by label, so labels must be unique.
    """
    seen = set()
    for layer in stack.layers:
        if layer.label in seen:
            raise StackValidationError(f"{_LAYER_PREFIX}{layer.label}", "duplicate layer label")
        seen.add(layer.label)
    lines = ["[stack]"]
    if stack.name:
        lines.append(f"name = {stack.name}")
    lines += [f"energy_keV = {stack.energy!r}", ""]
    for layer in stack.layers:
        thickness = "inf" if layer.semi_infinite else repr(layer.thickness)
        lines += [
            f"[{_LAYER_PREFIX}{layer.label}]",
            f"thickness_nm = {thickness}",
            f"delta = {layer.optics.delta!r}",
            f"beta = {layer.optics.beta!r}",
            "",
        ]
    res = stack.resonant
    lines += [
        "[resonant]",
        f"z0_nm = {res.z0!r}",
        f"d_nm = {res.d!r}",
        f"rho_per_nm3 = {res.rho!r}",
        f"E0_keV = {res.energy!r}",
        f"gamma_neV = {res.gamma_nev!r}",
    ]
    if res.lambda_res is not None:
        lines.append(f"Lambda_res_nm = {res.lambda_res!r}")
    if res.sigma_res is not None:
        lines.append(f"sigma_res_nm2 = {res.sigma_res!r}")
    if res.optics is not None:
        lines += [f"delta = {res.optics.delta!r}", f"beta = {res.optics.beta!r}"]
    return "\n".join(lines) + "\n"


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture file (``"fc"``, ``"gi"`` or a file name)."""
    import os

    base = os.environ.get("WGEXCITON_FIXTURES")
    root = Path(base) if base else Path(__file__).parent / "fixtures"
    candidate = root / name
    if candidate.suffix == "":
        candidate = candidate.with_suffix(".cfg")
    return candidate


def load_fixture(name: str) -> LayerStack:
    return load_stack(fixture_path(name))


def layers_from_table(spec: Sequence[tuple]) -> list:
    """Convenience: ``[(label, thickness, delta, beta), ...]`` -> ``[Layer, ...]``."""
    return [Layer(lbl, t, OpticalConstants(d, b)) for lbl, t, d, b in spec]
