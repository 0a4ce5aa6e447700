"""The nine acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line that is printed at the end of the
session (see ``conftest.py``) and on stdout with ``-s``.
"""

import inspect
import math
import time
from decimal import Decimal

import numpy as np
import pytest
from scipy import optimize, special

from conftest import ACCEPTANCE_LINES
from wgexciton import constants
from wgexciton.dynamics import (
    Drive,
    DynamicsParams,
    analytic_fc,
    analytic_gi,
    decay_rate,
    emitted_field_fc,
    emitted_field_gi,
    full_kernel_grid,
    make_x_grid,
    peak_speedup,
    solve_full_kernel,
    solve_volterra,
)
from wgexciton.inference import FitProblem, extract_speedup, fit_mle, proportionality_fit
from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes
from wgexciton.observables import (
    DivergenceModel,
    HyperfineModel,
    TimeTrace,
    apply_gate,
    divergence_average,
    hyperfine_average,
    poissonize,
)

# reference mode table: (zeta x 1e-2, 1 - Re nu, Im nu, Lambda_m in mm), printed strings
REFERENCE_MODES = {
    "fc": [
        ("3.8", "3.8e-6", "2.8e-8", "0.25"),
        ("0", "6.8e-6", "6.8e-8", "0.11"),
    ],
    "gi": [
        ("2.1", "2.9e-6", "1.3e-8", "0.51"),
        ("0", "3.9e-6", "2.2e-8", "0.31"),
        ("2.3", "5.9e-6", "7.5e-8", "0.09"),
        ("0", "8.2e-6", "1.6e-7", "0.04"),
    ],
}
REL_TOL_MODES = 0.15


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES[str(number)] = line
    print(line)
    return ok


def half_unit(printed: str) -> float:
    """Half of the last printed digit, e.g. '0.25' -> 0.005, '2.8e-8' -> 5e-10."""
    return 0.5 * 10.0 ** Decimal(printed).as_tuple().exponent


def test_c1_table_s1_reproduction():
    t0 = time.perf_counter()
    solved = {name: solve_modes(load_fixture(name)) for name in REFERENCE_MODES}
    elapsed = time.perf_counter() - t0

    worst, pattern_ok, problems = 0.0, True, []
    for name, rows in REFERENCE_MODES.items():
        modes = solved[name]
        if len(modes) < len(rows):
            problems.append(f"{name}: {len(modes)} modes < {len(rows)}")
            continue
        for i, (zeta_s, dre_s, im_s, lam_s) in enumerate(rows):
            mode = modes[i]
            got = {
                "1-Re nu": mode.deficit.real,
                "Im nu": mode.nu.imag,
                "Lambda_m": mode.attenuation / 1e6,
            }
            want = {"1-Re nu": float(dre_s), "Im nu": float(im_s), "Lambda_m": float(lam_s)}
            zeta_printed = float(zeta_s) * 1e-2
            # zero means "prints as 0" at the table's precision
            is_zero = abs(mode.zeta) < half_unit(zeta_s) * 1e-2
            if (zeta_printed == 0) != is_zero:
                pattern_ok = False
                problems.append(f"{name} mode {i + 1}: zeta {mode.zeta:.3g}")
            if zeta_printed != 0:
                got["|zeta|"], want["|zeta|"] = abs(mode.zeta), zeta_printed
            for key in got:
                rel = abs(got[key] / want[key] - 1)
                worst = max(worst, rel)
                if rel > REL_TOL_MODES:
                    problems.append(f"{name} mode {i + 1} {key}: {got[key]:.4g} vs {want[key]:.4g}")
    ok = not problems and pattern_ok and elapsed < 5.0
    record(1, "reference mode table", ok,
           f"worst rel dev {worst:.3f} <= {REL_TOL_MODES}, zeta pattern "
           f"{'ok' if pattern_ok else 'wrong'}, {elapsed:.2f} s < 5 s"
           + (f"; {'; '.join(problems)}" if problems else ""))
    assert ok, problems


def test_c2_reference_table_consistency():
    k0 = constants.FE57_K0
    bad = []
    for name, rows in REFERENCE_MODES.items():
        for i, (_, _, im_s, lam_s) in enumerate(rows):
            im, h_im = float(im_s), half_unit(im_s)
            lam, h_lam = float(lam_s), half_unit(lam_s)
            # Lambda range implied by the printed Im nu, in mm
            lo = 1.0 / (2 * k0 * (im + h_im)) / 1e6
            hi = 1.0 / (2 * k0 * (im - h_im)) / 1e6
            if hi < lam - h_lam or lo > lam + h_lam:
                bad.append(f"{name} mode {i + 1}: Im nu {im_s} -> [{lo:.4f}, {hi:.4f}] mm vs {lam_s}")
    ok = not bad
    record(2, "Lambda_m = 1/(2 k0 Im nu) on the reference table", ok,
           "all rows consistent" if ok else "; ".join(bad))
    assert ok, bad


@pytest.fixture(scope="module")
def fc_mode1():
    stack = load_fixture("fc")
    return stack, solve_modes(stack)[0]


@pytest.fixture(scope="module")
def gi_mode3():
    stack = load_fixture("gi")
    return stack, solve_modes(stack)[2]


def test_c3_fc_volterra_vs_analytic(fc_mode1):
    stack, mode = fc_mode1
    params = DynamicsParams.from_mode(mode, stack, 2e6)
    drive = Drive.front()
    t = np.linspace(0.0, 192.0, 97)
    t0 = time.perf_counter()
    field = solve_volterra(params, drive, make_x_grid(params), t, store_every=10)
    elapsed = time.perf_counter() - t0
    exact = analytic_fc(params, drive, field.x_grid[None, :], t[:, None])
    dev = np.max(np.abs(field.sigma - exact)) / np.max(np.abs(exact))
    ok = dev < 1e-3 and elapsed < 60
    record("3a", "FC Volterra vs Bessel solution", ok,
           f"max rel dev {dev:.2e} < 1e-3, {elapsed:.1f} s < 60 s")
    assert ok


def test_c3_gi_volterra_vs_analytic(gi_mode3):
    stack, mode = gi_mode3
    params = DynamicsParams.from_mode(mode, stack, 1.0)
    params = params.replace(length=10 * params.lambda_m)
    drive = Drive.grazing(params.theta_m)
    t = np.linspace(0.0, 192.0, 97)
    t0 = time.perf_counter()
    field = solve_volterra(params, drive, make_x_grid(params), t, store_every=4)
    elapsed = time.perf_counter() - t0
    exact = analytic_gi(params, drive, field.x_grid[None, :], t[:, None])
    sel = field.x_grid > -params.length + 3 * params.lambda_m
    dev = np.max(np.abs(field.sigma - exact)[:, sel]) / np.max(np.abs(exact[:, sel]))
    ok = dev < 1e-2 and elapsed < 60
    record("3b", "GI Volterra vs plane-wave solution, x > -L + 3 Lambda_m", ok,
           f"max rel dev {dev:.2e} vs 1e-2, {elapsed:.1f} s < 60 s; "
           "residual is the entrance transient exp(-l/(2 Lambda_m)), see test_dynamics")
    assert ok


def test_c4_forward_scattering_approximation(fc_mode1):
    stack, mode = fc_mode1
    params = DynamicsParams.from_mode(mode, stack, 2000.0)
    drive = Drive.front()
    x = full_kernel_grid(params)
    t = np.linspace(0.0, 192.0, 49)
    full = solve_full_kernel(params, drive, x, t, store_every=4)
    fsa = solve_volterra(params, drive, x, t, store_every=4)
    ref = np.abs(fsa.sigma)
    mask = ref > 0
    dev = np.max(np.abs(np.abs(full.sigma[mask]) - ref[mask]) / ref[mask])
    ok = dev < 0.05
    record(4, "full kernel vs forward scattering at L = 2 um", ok, f"max rel dev in |sigma| {dev:.2e} < 5e-2")
    assert ok


def _intensity_minima(params, drive, t_max, n=20001):
    t = np.linspace(0.0, t_max, n)
    inten = emitted_field_fc(params, drive, t).intensity
    idx = np.flatnonzero((inten[1:-1] < inten[:-2]) & (inten[1:-1] <= inten[2:])) + 1
    found = []
    dt = t[1] - t[0]
    for i in idx:
        res = optimize.minimize_scalar(
            lambda tt: abs(emitted_field_fc(params, drive, [tt]).b[0]),
            bounds=(t[i] - dt, t[i] + dt),
            method="bounded",
            options={"xatol": 1e-10},
        )
        found.append(res.x)
    return np.array(found)


def test_c5_dynamical_beat_zeros(fc_mode1):
    stack, mode = fc_mode1
    zeta = mode.zeta.real
    lam_res = stack.resonant.attenuation_length
    zeros = special.jn_zeros(1, 3)
    drive = Drive.front()
    worst = 0.0
    for xi in (100.0, 500.0, 1234.0):
        params = DynamicsParams.from_mode(mode, stack, xi * lam_res / zeta).replace(zeta=zeta)
        gamma = params.gamma
        predicted = zeros ** 2 / xi / gamma
        found = _intensity_minima(params, drive, 1.3 * predicted[-1])
        assert found.size >= 3
        worst = max(worst, np.max(np.abs(found[:3] / predicted - 1)))
    ok = worst < 0.01
    record(5, "dynamical-beat zeros at j1k^2/(zeta L/Lambda_res)", ok, f"worst rel offset {worst:.2e} < 1e-2")
    assert ok


def test_c6_speedup_formula(gi_mode3):
    stack, mode = gi_mode3
    params = DynamicsParams.from_mode(mode, stack, 2e6)
    t = np.arange(0.0, 192.0, 0.5)
    thetas = params.theta_m + np.linspace(-6e-5, 6e-5, 25)
    errs = []
    for th in thetas:
        trace = emitted_field_gi(params, Drive.grazing(th), t)
        rate = extract_speedup(TimeTrace(t, trace.intensity), window=(13.0, 30.0))
        errs.append(abs(rate / decay_rate(params, th) - 1))
    worst = max(errs)
    formula = 1 + (mode.zeta * mode.attenuation / stack.resonant.attenuation_length).real
    peak = decay_rate(params, params.theta_m)
    peak_ok = abs(peak / formula - 1) < 1e-9 and abs(peak_speedup(params) / formula - 1) < 1e-12
    near_45 = abs(formula / 45 - 1) < 0.15
    ok = worst < 0.02 and peak_ok and near_45
    record(6, "speedup 1 + 2 Im(eta)/gamma over the theta scan", ok,
           f"worst rel dev {worst:.2e} < 2e-2; peak {peak:.2f} = 1 + zeta Lambda_m/Lambda_res = {formula:.2f}")
    assert ok


def test_c7_experimental_peak(gi_mode3):
    stack, mode = gi_mode3
    params = DynamicsParams.from_mode(mode, stack, 2e6)
    t = np.arange(0.0, 192.0, 0.5)
    hf = HyperfineModel(broadening_fwhm=4.0, quad_splitting=7.0)
    div = DivergenceModel(fwhm=math.radians(2.1e-3), n_angles=21)
    thetas = params.theta_m + np.linspace(-3e-5, 3e-5, 13)

    def trace(th, model):
        base = emitted_field_gi(params, Drive.grazing(th), t)
        return hyperfine_average(base.detuned, model)

    variants = {
        "simple": lambda th: trace(th, HyperfineModel()),
        "hyperfine": lambda th: trace(th, hf),
        "hyperfine+divergence": lambda th: divergence_average(lambda a: trace(a, hf), div, th),
    }
    peaks = {k: max(extract_speedup(fn(th)) for th in thetas) for k, fn in variants.items()}
    apparent = peaks["hyperfine+divergence"]
    in_band = abs(apparent / 30.0 - 1) <= 0.2
    ordering = peaks["hyperfine"] > peaks["simple"] and apparent < peaks["hyperfine"]
    ok = in_band and ordering
    record(7, "apparent GI peak rate with hyperfine and divergence", ok,
           f"peak {apparent:.1f} gamma vs 30 +- 20%; simple {peaks['simple']:.1f}, "
           f"hyperfine {peaks['hyperfine']:.1f}, ordering {'holds' if ordering else 'broken'}")
    assert ok


def test_c8_fit_closed_loop(fc_mode1):
    stack, mode = fc_mode1
    t = np.arange(0.5, 192.0, 1.0)
    hf = HyperfineModel(broadening_fwhm=6.0, quad_splitting=6.0)
    lengths = np.linspace(0.1e6, 2e6, 8)
    thick, err = [], []
    for i, length in enumerate(lengths):
        params = DynamicsParams.from_mode(mode, stack, length)
        base = emitted_field_fc(params, Drive.front(), t)
        counts = poissonize(apply_gate(hyperfine_average(base.detuned, hf)), 100_000, seed=i)
        problem = FitProblem(
            "fc_foil",
            counts,
            bounds=[(0, np.inf), (1, 5000), (0, 20), (0, 20)],
            init=[1, 800, 5, 5],
            seed=i,
            grid={"thickness": np.geomspace(10, 5000, 320)},
        )
        result = fit_mle(problem)
        assert result.converged
        thick.append(result.p_hat[1])
        err.append(result.stderr[1])
    lam_res = stack.resonant.attenuation_length
    slope, icept, _, icept_err = proportionality_fit(
        lengths, np.array(thick) * lam_res, np.array(err) * lam_res
    )
    zeta = mode.zeta.real
    slope_ok = abs(slope / zeta - 1) < 0.05
    icept_ok = abs(icept) < 3 * icept_err
    ok = slope_ok and icept_ok
    record(8, "fitted L_foil proportional to L", ok,
           f"slope {slope:.5f} vs zeta {zeta:.5f} ({slope / zeta - 1:+.2%}, limit 5%); "
           f"intercept {icept:.1f} +- {icept_err:.1f} nm")
    assert ok


def test_c9_lifetime_constant(fc_stack, gi_stack):
    tau = constants.FE57_LIFETIME_NS
    gamma = constants.FE57_GAMMA
    users = {
        "fc stack": fc_stack.resonant.gamma,
        "gi stack": gi_stack.resonant.gamma,
        "DynamicsParams default": DynamicsParams(1 - 1e-6 + 1e-8j, 0.03, 47.0, 1e6).gamma,
        "extract_speedup default": inspect.signature(extract_speedup).parameters["gamma"].default,
        "FitProblem default": FitProblem.__dataclass_fields__["gamma"].default,
        "HyperfineModel.lines default": inspect.signature(HyperfineModel.lines).parameters["gamma"].default,
    }
    consistent = all(abs(v / gamma - 1) < 1e-12 for v in users.values())
    ok = abs(tau - 141.0) <= 1.0 and consistent
    record(9, "natural lifetime from 4.7 neV", ok,
           f"tau = {tau:.2f} ns (141 +- 1), gamma shared by {len(users)} consumers: {consistent}")
    assert ok
