"""Resonant (guided and leaky) modes of a planar x-ray waveguide.

A single scalar polarization family is solved (TE and TM are degenerate to
well below the accuracy needed at weak index contrast).  The mode equation is

    u'' + k0^2 (eps(z) - nu^2) u = 0

with outgoing (or decaying) waves in both semi-infinite claddings.  All
internal work uses the index deficit ``s = 1 - nu`` because every quantity of
interest is of order 1e-6 and ``nu`` itself would lose six digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .layered_medium import LayerStack, OpticalConstants, ResonantLayerSpec

_ROT = np.exp(0.25j * np.pi)


class ModeNotFoundError(RuntimeError):
    """The stack supports no resonant mode in the searched region."""


class RootNotConvergedError(RuntimeError):
    """Newton iteration failed; ``last_iterate`` holds the final nu."""

    def __init__(self, message: str, last_iterate: complex):
        super().__init__(f"{message} (last iterate nu = {last_iterate!r})")
        self.last_iterate = last_iterate


def attenuation_length(nu, k0: float):
    """Off-resonance attenuation length Lambda = 1 / (2 k0 Im nu) in nm."""
    im = np.imag(nu)
    if np.any(np.asarray(im) <= 0):
        raise ValueError(f"attenuation length needs Im(nu) > 0, got {nu!r}")
    return 1.0 / (2.0 * k0 * im)


def mode_angle(nu):
    """Mode angle theta with cos(theta) = Re(nu), in rad."""
    re = np.real(nu)
    if np.any(np.asarray(re) > 1.0) or np.any(np.asarray(re) <= 0.0):
        raise ValueError(f"mode angle needs 0 < Re(nu) <= 1, got {nu!r}")
    # arccos is ill-conditioned at 1; use the half-angle form
    return 2.0 * np.arcsin(np.sqrt(0.5 * (1.0 - re)))


def mirror_guide_deficit(m: int, core_thickness: float, wavelength: float, core_delta=0.0):
    """1 - Re(nu) of mode ``m`` in an ideal-mirror guide of the given core.

    The walls enforce ``sin(theta_m) = m * lambda / (2 D)``; the core material
    shifts the result by its ``delta`` to first order.
    """
    sin_t = m * wavelength / (2.0 * core_thickness)
    if sin_t >= 1:
        raise ValueError("mode is cut off")
    return core_delta + (1.0 - math.sqrt(1.0 - sin_t ** 2))


def _kz(optics: OpticalConstants, s, k0):
    # eps - nu^2 = (n - nu)(n + nu); branch cut on the negative imaginary axis
    # of eps - nu^2 keeps guided (decaying) and leaky (outgoing) waves continuous.
    w = (s - optics.delta + 1j * optics.beta) * (2.0 - s - optics.delta + 1j * optics.beta)
    return k0 * _ROT * np.sqrt(-1j * w)


def _propagate(u, du, k, dist):
    """Carry (u, u') a distance ``dist`` through a uniform layer.

    Split into exp(+ikz) and exp(-ikz) parts: a pure exponential then stays
    exact instead of emerging from the cancellation of cos and sin terms.
    """
    a = 0.5 * (u + du / (1j * k))
    b = 0.5 * (u - du / (1j * k))
    ep, em = np.exp(1j * k * dist), np.exp(-1j * k * dist)
    return a * ep + b * em, 1j * k * (a * ep - b * em)


def _renormalize(u, du, k, log_scale):
    # divide by a positive real factor: zeros and the phase of D are unchanged
    size = np.abs(u) + np.abs(du / k)
    size = np.where(size > 0, size, 1.0)
    return u / size, du / size, log_scale + np.log(size)


class Dispersion:
    """Transfer-matrix characteristic function of a stack, in ``s = 1 - nu``.

    The solution satisfying the top boundary condition is marched down and the
    one satisfying the bottom condition is marched up, both to an interface
    inside the core, where their Wronskian is taken.  Each march then follows
    the solution that grows towards the core, so thick evanescent claddings do
    not amplify rounding errors.  The Wronskian is constant in ``z``, so this
    equals the plain top-to-bottom determinant.
    """

    def __init__(self, stack: LayerStack):
        self.k0 = stack.k0
        self.ambient, self.finite, self.substrate = stack.optical_layers()
        self.bounds = np.concatenate([[0.0], np.cumsum([t for _, t in self.finite])])
        core = stack.core_index
        centre = 0.5 * (stack.interfaces[core - 1] + stack.interfaces[core])
        self.split = int(np.argmin(np.abs(self.bounds - centre)))

    def _march(self, s, rescale=False):
        s = np.asarray(s, dtype=complex)
        log_scale = np.zeros(s.shape)
        k = _kz(self.ambient, s, self.k0)
        u, du = np.ones_like(s), -1j * k
        upper = []
        for optics, d in self.finite[: self.split]:
            k = _kz(optics, s, self.k0)
            upper.append((u, du, k))
            u, du = _propagate(u, du, k, d)
            if rescale:
                u, du, log_scale = _renormalize(u, du, k, log_scale)
        kb = _kz(self.substrate, s, self.k0)
        v, dv = np.ones_like(s), 1j * kb
        lower = []
        for optics, d in reversed(self.finite[self.split :]):
            k = _kz(optics, s, self.k0)
            lower.append((v, dv, k))
            v, dv = _propagate(v, dv, k, -d)
            if rescale:
                v, dv, log_scale = _renormalize(v, dv, k, log_scale)
        if rescale:
            return (du * v - u * dv) / self.k0, log_scale
        return upper, (u, du), lower[::-1], (v, dv)

    def __call__(self, s):
        _, (u, du), _, (v, dv) = self._march(s)
        return (du * v - u * dv) / self.k0

    def scaled(self, s):
        """``(m, l)`` with D = m exp(l); safe where D itself would overflow."""
        return self._march(s, rescale=True)

    def term_residual(self, s):
        """|D| normalized by the size of its two terms."""
        _, (u, du), _, (v, dv) = self._march(s)
        return np.abs(du * v - u * dv) / (np.abs(du * v) + np.abs(u * dv))

    def newton_step(self, s, h):
        """D / D' by central differences, evaluated on the rescaled function."""
        s = np.asarray(s, dtype=complex)
        m, l = self.scaled(np.stack([s, s + h, s - h]))
        deriv = (m[1] * np.exp(l[1] - l[0]) - m[2] * np.exp(l[2] - l[0])) / (2 * h)
        return m[0] / deriv

    def residual(self, s):
        """Relative Newton correction |D / (s dD/ds)|, i.e. the root error in units of s."""
        s = np.asarray(s, dtype=complex)
        return np.abs(self.newton_step(s, 1e-6 * np.abs(s)) / s)

    def _segments(self, s: complex):
        """Per-layer ``(u, du, k, sign)`` plus the bottom amplitude.

        Layers above the split are anchored at their top edge (``sign = +1``),
        layers below at their bottom edge (``sign = -1``), so that each is
        evaluated along the direction in which it was marched.  The lower
        solution is rescaled to join the upper one at the split.
        """
        upper, (u, du), lower, (v, dv) = self._march(np.array([s]))
        # least-squares match of (v, dv) onto (u, du); exact at a root
        w = 1.0 / (self.k0 * self.k0)
        scale = (u * np.conj(v) + w * du * np.conj(dv)) / (abs(v) ** 2 + w * abs(dv) ** 2)
        layers = [(a[0], b[0], k[0], 1) for a, b, k in upper]
        layers += [(scale[0] * a[0], scale[0] * b[0], k[0], -1) for a, b, k in lower]
        return layers, complex(scale[0])

    def field(self, s: complex, z):
        """Unnormalized profile (u = 1 at the top surface) at depths ``z``."""
        z = np.asarray(z, dtype=float)
        layers, ub = self._segments(s)
        out = np.empty(z.shape, dtype=complex)
        k_top, kb = self.tail_wavenumbers(s)
        above = z < 0
        out[above] = np.exp(-1j * k_top * z[above])
        for (u, du, k, sign), top, bottom in zip(layers, self.bounds[:-1], self.bounds[1:]):
            sel = (z >= top) & (z < bottom)
            t = z[sel] - (top if sign > 0 else bottom)
            out[sel] = u * np.cos(k * t) + du * np.sin(k * t) / k
        below = z >= self.bounds[-1]
        out[below] = ub * np.exp(1j * kb * (z[below] - self.bounds[-1]))
        return out

    def norm(self, s: complex) -> complex:
        """Closed-form bi-norm of the unnormalized profile, int u^2/eps dz.

        The cladding tails are continued analytically: int_0^inf exp(2ikz) dz
        = i/(2k), which is the standard regularization for leaky modes.
        """
        layers, ub = self._segments(s)
        k_top, kb = self.tail_wavenumbers(s)
        total = 1j / (2 * k_top) / self.ambient.epsilon
        for (u, du, k, sign), (optics, d) in zip(layers, self.finite):
            # a layer anchored at its bottom is the mirror image with du -> -du
            a, b = u, sign * du / k
            s2 = np.sin(2 * k * d) / (4 * k)
            integral = a * a * (d / 2 + s2) + a * b * np.sin(k * d) ** 2 / k + b * b * (d / 2 - s2)
            total += integral / optics.epsilon
        total += ub ** 2 * 1j / (2 * kb) / self.substrate.epsilon
        return complex(total)

    def tail_wavenumbers(self, s):
        return _kz(self.ambient, s, self.k0), _kz(self.substrate, s, self.k0)


@dataclass
class ResonantMode:
    m: int
    nu: complex
    deficit: complex  # 1 - nu, kept separately for precision
    z: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    zeta: complex = 0j
    attenuation: float = math.inf  # Lambda_m, nm
    theta: float = 0.0  # rad
    residual: float = 0.0
    field_fn: Optional[Callable] = field(default=None, repr=False, compare=False)

    def field(self, z):
        """Bi-normalized profile u_m evaluated at arbitrary depths."""
        return self.field_fn(np.asarray(z, dtype=float))


def coupling_coefficient(mode: ResonantMode, resonant: ResonantLayerSpec) -> complex:
    """zeta_m = d * u_m(z0)^2 with u_m interpolated on the sampled profile."""
    if resonant.d == 0:
        return 0j
    z0 = resonant.z0
    if not (mode.z[0] <= z0 <= mode.z[-1]):
        raise ValueError(f"z0 = {z0} nm lies outside the profile grid")
    u0 = np.interp(z0, mode.z, mode.profile.real) + 1j * np.interp(z0, mode.z, mode.profile.imag)
    return complex(resonant.d * u0 ** 2)


# --- root search -------------------------------------------------------------


def _winding_number(f, corners, n0=48, max_refine=20):
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        t = np.linspace(0.0, 1.0, n0 + 1)
        v = f(a + (b - a) * t)
        for _ in range(max_refine):
            step = np.angle(v[1:] / v[:-1])
            bad = np.abs(step) > 0.4
            if not bad.any():
                break
            tm = 0.5 * (t[:-1][bad] + t[1:][bad])
            vm = f(a + (b - a) * tm)
            t = np.concatenate([t, tm])
            v = np.concatenate([v, vm])
            order = np.argsort(t)
            t, v = t[order], v[order]
        total += np.sum(np.angle(v[1:] / v[:-1]))
    return total / (2 * np.pi)


class _RootSearch:
    def __init__(self, disp: Dispersion, scale: float, tol=1e-10):
        self.f = disp
        self.scale = scale
        self.tol = tol

    def count(self, rect):
        (x0, y0), (x1, y1) = rect
        corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        w = _winding_number(lambda z: self.f.scaled(z)[0], corners)
        n = int(round(w))
        if abs(w - n) > 0.25:
            raise RootNotConvergedError(f"non-integer winding number {w:.3f}", 1 - corners[0])
        return max(n, 0)

    def newton(self, s0, max_iter=60):
        s = complex(s0)
        h = 1e-7 * self.scale
        for _ in range(max_iter):
            step = complex(self.f.newton_step(s, h))
            if not np.isfinite(step):
                return s, False
            s -= step
            if not np.isfinite(s) or abs(s) > 100 * self.scale:
                return s, False
            if abs(step) < 1e-12 * self.scale:
                return s, float(self.f.residual(np.array([s]))[0]) < self.tol
        return s, False

    @staticmethod
    def inside(s, rect):
        (x0, y0), (x1, y1) = rect
        return x0 <= s.real <= x1 and y0 <= s.imag <= y1

    def search(self, rect, known: list, depth=0, max_depth=10):
        n = self.count(rect)
        inside = [r for r in known if self.inside(r, rect)]
        if n <= len(inside):
            return []
        (x0, y0), (x1, y1) = rect
        centre = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
        if n - len(inside) == 1 or depth >= max_depth:
            s, ok = self.newton(centre)
            if ok and self.inside(s, rect) and not _is_duplicate(s, known, self.scale):
                return [s]
            if depth >= max_depth:
                raise RootNotConvergedError("root location failed", 1 - s)
        found = []
        xm, ym = centre.real, centre.imag
        for sub in (
            ((x0, y0), (xm, ym)),
            ((xm, y0), (x1, ym)),
            ((x0, ym), (xm, y1)),
            ((xm, ym), (x1, y1)),
        ):
            found += self.search(sub, known + found, depth + 1, max_depth)
        return found


def _is_duplicate(s, roots, scale):
    return any(abs(s - r) < 1e-7 * scale for r in roots)


def _profile_grid(stack: LayerStack, disp: Dispersion, s, dz):
    z0 = stack.resonant.z0
    h = z0 / math.ceil(z0 / dz)
    k_top, k_bot = disp.tail_wavenumbers(s)
    ext_top = min(3.0 / max(abs(k_top.imag), 1e-12), 100.0)
    ext_bot = min(3.0 / max(abs(k_bot.imag), 1e-12), 100.0)
    n_up = math.ceil((z0 + ext_top) / h)
    n_down = math.ceil((stack.total_thickness + ext_bot - z0) / h)
    return z0 + h * np.arange(-n_up, n_down + 1)


def _build_mode(stack, disp, s, m, dz):
    scale = 1.0 / np.sqrt(disp.norm(s))
    z = _profile_grid(stack, disp, s, dz)

    def field_fn(zz, _s=s, _c=scale):
        return _c * disp.field(_s, zz)

    u0 = field_fn(np.array([stack.resonant.z0]))[0]
    ref = u0
    if abs(u0.real) < 1e-8 * np.max(np.abs(field_fn(z))):
        # odd mode: fix the branch by the largest-magnitude sample instead
        prof = field_fn(z)
        ref = prof[np.argmax(np.abs(prof))]
    if ref.real < 0:
        scale = -scale

        def field_fn(zz, _s=s, _c=scale):  # noqa: F811
            return _c * disp.field(_s, zz)

    nu = 1.0 - s
    mode = ResonantMode(
        m=m,
        nu=complex(nu),
        deficit=complex(s),
        z=z,
        profile=field_fn(z),
        attenuation=float(attenuation_length(nu, stack.k0)),
        theta=float(mode_angle(nu)),
        residual=float(disp.residual(np.array([s]))[0]),
        field_fn=field_fn,
    )
    mode.zeta = coupling_coefficient(mode, stack.resonant)
    return mode


def solve_modes(stack: LayerStack, max_modes: int = 10, dz: float = 0.1) -> List[ResonantMode]:
    """Find the resonant modes of ``stack``, sorted by increasing 1 - Re(nu).

    Resonant modes are the roots with ``1 - Re(nu)`` below the largest
    ``delta`` of the finite layers, i.e. modes confined by the densest
    cladding.  Roots are seeded from ideal-mirror estimates and refined by
    Newton iteration; an argument-principle count over the strip
    ``0 < 1 - Re(nu) < 2.5 max(delta)`` then locates anything the seeds missed.

    Args:
        stack: the layer system.
        max_modes: return at most this many modes.
        dz: profile sampling step (nm), capped at 0.1 nm.

    Raises:
        ModeNotFoundError: if the stack guides nothing.
        RootNotConvergedError: if a counted root cannot be located.
    """
    if max_modes < 1:
        raise ValueError("max_modes must be >= 1")
    dz = min(dz, 0.1)
    disp = Dispersion(stack)
    delta_max = stack.max_delta
    if delta_max <= 0:
        raise ModeNotFoundError("stack has no index contrast")
    strip = 2.5 * delta_max
    search = _RootSearch(disp, scale=delta_max)

    roots: list = []
    core = stack.layers[stack.core_index]
    m = 1
    while True:
        try:
            seed = mirror_guide_deficit(m, core.thickness, stack.wavelength, core.optics.delta)
        except ValueError:
            break
        if seed > strip:
            break
        s, ok = search.newton(complex(seed, -core.optics.beta - 1e-2 * seed))
        if ok and s.imag < 0 and 0 < s.real < strip and not _is_duplicate(s, roots, delta_max):
            roots.append(s)
        m += 1

    # rectangles in the s-plane, avoiding the vertical branch cuts s_r = delta_j
    # (for Im nu > beta_j) of the two semi-infinite media
    im_lo, im_hi = -delta_max, 1e-3 * delta_max
    eps = 1e-3 * delta_max
    cuts = sorted(
        o.delta
        for o in (disp.ambient, disp.substrate)
        if 0 < o.delta < strip and o.beta < -im_lo
    )
    # the left edge hugs s = 0 so that weakly confined modes are counted
    edges = [1e-6 * delta_max] + [c for cut in cuts for c in (cut - eps, cut + eps)] + [strip]
    for x0, x1 in zip(edges[::2], edges[1::2]):
        if x1 > x0:
            roots += search.search(((x0, im_lo), (x1, im_hi)), roots)

    confined = max(l.optics.delta for l in stack.layers[1:-1])
    roots = sorted(
        (r for r in roots if r.imag < 0 and 0 < r.real < confined), key=lambda r: r.real
    )
    if not roots:
        raise ModeNotFoundError(f"no resonant mode found for stack {stack.name!r}")
    return [_build_mode(stack, disp, s, i + 1, dz) for i, s in enumerate(roots[:max_modes])]


def binormalization_integral(mode: ResonantMode, stack: LayerStack, order: int = 64) -> complex:
    """int u^2/eps dz by per-layer Gauss-Legendre quadrature plus analytic tails.

    Independent of the closed-form integrals used to normalize the mode.
    """
    disp = Dispersion(stack)
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0j
    for (optics, d), top in zip(disp.finite, disp.bounds[:-1]):
        zz = top + 0.5 * d * (x + 1)
        total += 0.5 * d * np.sum(w * mode.field(zz) ** 2) / optics.epsilon
    k_top, k_bot = disp.tail_wavenumbers(mode.deficit)
    u_top = mode.field(np.array([0.0]))[0]
    u_bot = mode.field(np.array([disp.bounds[-1]]))[0]
    total += u_top ** 2 * 1j / (2 * k_top) / disp.ambient.epsilon
    total += u_bot ** 2 * 1j / (2 * k_bot) / disp.substrate.epsilon
    return complex(total)
