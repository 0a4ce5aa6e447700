"""Closed-loop fit of front-coupling traces.

Synthetic traces with hyperfine structure are poissonized, then fitted with
the four-parameter foil model.  The fitted effective thickness grows in
proportion to the waveguide length with slope zeta.  The likelihood has
many local minima in the thickness, so a dense pre-scan seeds the simplex.
"""

import numpy as np

from wgexciton.dynamics import Drive, DynamicsParams, emitted_field_fc
from wgexciton.inference import FitProblem, fit_mle, proportionality_fit
from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes
from wgexciton.observables import HyperfineModel, apply_gate, hyperfine_average, poissonize

stack = load_fixture("fc")
mode = solve_modes(stack)[0]
t = np.arange(0.25, 192.0, 0.5)
hf = HyperfineModel(broadening_fwhm=6.0, quad_splitting=6.0)
lengths = np.linspace(0.25, 2.0, 5)
foil = []
for i, length_mm in enumerate(lengths):
    p = DynamicsParams.from_mode(mode, stack, length_mm * 1e6)
    trace = apply_gate(hyperfine_average(emitted_field_fc(p, Drive.front(), t).detuned, hf))
    data = poissonize(trace, 100_000, seed=i)
    problem = FitProblem(
        "fc_foil", data, [(0, np.inf), (1, 5000), (0, 20), (0, 20)], [1.0, 800.0, 5.0, 5.0],
        seed=i, grid={"thickness": np.geomspace(10, 5000, 320)},
    )
    res = fit_mle(problem)
    foil.append(res.p_hat[1] * p.lambda_res)
    print(f"L = {length_mm:.3f} mm  fitted L_foil = {foil[-1]:8.1f} nm  (true {p.optical_depth.real * p.lambda_res:8.1f})")
slope, intercept, _, _ = proportionality_fit(lengths * 1e6, foil)
print(f"slope {slope:.5f} vs zeta {mode.zeta.real:.5f}; intercept {intercept:.1f} nm")
