"""Dynamical beats in front coupling.

A waveguide of length L coupled with strength zeta radiates like a foil of
thickness zeta L.  The first intensity minimum moves to earlier delays as L
grows, following the first zero of J1.
"""

import numpy as np
from scipy import special

from wgexciton.dynamics import Drive, DynamicsParams, emitted_field_fc
from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes

stack = load_fixture("fc")
mode = solve_modes(stack)[0]
t = np.linspace(0.0, 192.0, 19201)
j11 = special.jn_zeros(1, 1)[0]
print(f"fundamental mode: zeta = {mode.zeta.real:.4f}")
for length_mm in (0.25, 0.5, 1.0, 2.0):
    p = DynamicsParams.from_mode(mode, stack, length_mm * 1e6)
    inten = emitted_field_fc(p, Drive.front(), t).intensity
    interior = (inten[1:-1] < inten[:-2]) & (inten[1:-1] < inten[2:])
    first = t[1:-1][interior][0]
    depth = p.optical_depth.real
    print(
        f"L = {length_mm:4.2f} mm  zeta L/Lambda_res = {depth:7.1f}  first minimum {first:6.2f} ns  "
        f"(J1 zero predicts {j11 ** 2 / depth / p.gamma:6.2f} ns)"
    )
