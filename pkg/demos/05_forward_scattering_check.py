"""Numerical solvers against closed forms.

The Volterra solver reproduces the Bessel solution in front coupling, and the
full kernel, which keeps the back-scattered branch, agrees with the
forward-scattering solution on a short guide.
"""

import numpy as np

from wgexciton.dynamics import (
    Drive,
    DynamicsParams,
    analytic_fc,
    full_kernel_grid,
    make_x_grid,
    solve_full_kernel,
    solve_volterra,
)
from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes

stack = load_fixture("fc")
mode = solve_modes(stack)[0]
drive = Drive.front()
t = np.linspace(0.0, 192.0, 97)

p = DynamicsParams.from_mode(mode, stack, 2e5)
field = solve_volterra(p, drive, make_x_grid(p), t, store_every=4)
exact = analytic_fc(p, drive, field.x_grid[None, :], t[:, None])
print(f"Volterra vs Bessel at L = 0.2 mm: max rel dev {np.max(np.abs(field.sigma - exact)) / np.max(np.abs(exact)):.2e}")

short = p.replace(length=2000.0, zeta=p.zeta * 1e3)
x = full_kernel_grid(short)
full = solve_full_kernel(short, drive, x, t[:9])
fsa = solve_volterra(short, drive, x, t[:9])
dev = np.max(np.abs(np.abs(full.sigma) - np.abs(fsa.sigma))) / np.max(np.abs(fsa.sigma))
print(f"full kernel vs forward scattering at L = 2 um: max rel dev in |sigma| {dev:.2e}")
