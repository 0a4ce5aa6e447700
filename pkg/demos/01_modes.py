"""Resonant modes of the two shipped waveguide stacks.

Solves the dispersion relation, then prints each mode's effective-index
deficit, attenuation length and nuclear coupling coefficient.  In the
symmetric front-coupling guide the odd mode has a node at the centred iron
layer, so its coupling vanishes.
"""

import math

from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes

for name in ("fc", "gi"):
    stack = load_fixture(name)
    print(f"stack {name}: " + " / ".join(l.label for l in stack.layers))
    for m in solve_modes(stack):
        print(
            f"  m={m.m}  1-Re nu={m.deficit.real:.3e}  Im nu={m.nu.imag:.3e}  "
            f"theta={math.degrees(m.theta):.4f} deg  Lambda={m.attenuation * 1e-6:.3f} mm  "
            f"zeta={m.zeta.real:.4f}"
        )
