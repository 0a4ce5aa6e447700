import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgexciton import constants
from wgexciton.dynamics import DynamicsParams, Drive, FieldTrace, emitted_field_fc, emitted_field_gi, frequency_shift
from wgexciton.observables import (
    DivergenceModel,
    HyperfineModel,
    TimeTrace,
    apply_gate,
    config_digest,
    detuned_generator,
    divergence_average,
    hyperfine_average,
    multiline_gi_field,
    poissonize,
)

GAMMA = constants.FE57_GAMMA
T = np.linspace(0.0, 192.0, 385)


def natural_decay():
    return FieldTrace(T, np.exp(-0.5 * GAMMA * T))


@pytest.fixture(scope="module")
def fc_params(fc_stack, fc_modes):
    return DynamicsParams.from_mode(fc_modes[0], fc_stack, 2e6)


@pytest.fixture(scope="module")
def gi_params(gi_stack, gi_modes):
    return DynamicsParams.from_mode(gi_modes[2], gi_stack, 2e6)


def gi_generator(params):
    def at_angle(theta):
        base = emitted_field_gi(params, Drive.grazing(theta), T)
        return TimeTrace(T, base.intensity)

    return at_angle


# --- model validation ----------------------------------------------------------


def test_model_validation():
    with pytest.raises(ValueError):
        HyperfineModel(-1.0, 0.0)
    with pytest.raises(ValueError):
        HyperfineModel(1.0, 0.0, n_lines=4)
    with pytest.raises(ValueError):
        DivergenceModel(-1e-5)
    with pytest.raises(ValueError):
        DivergenceModel(1e-5, n_angles=0)
    with pytest.raises(ValueError):
        DivergenceModel(1e-5, distribution="gaussian")


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.sampled_from([1, 3, 9, 21]))
def test_line_weights_sum_to_one(broad, split, n):
    det, w = HyperfineModel(broad, split, n).lines()
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w > 0)
    # doublet plus Gaussian samples are symmetric about zero
    assert np.allclose(np.sort(det), -np.sort(det)[::-1], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.01), st.floats(-1, 1))
def test_divergence_samples_symmetric(fwhm, theta):
    angles = DivergenceModel(fwhm, 21).angles(theta)
    assert angles.mean() == pytest.approx(theta, abs=1e-12)
    assert np.all(np.abs(angles - theta) <= fwhm / 2 + 1e-15)


# --- hyperfine average -------------------------------------------------------------


def test_trivial_model_is_bit_identical(gi_params):
    bare = emitted_field_gi(gi_params, Drive.grazing(gi_params.theta_m), T)
    out = hyperfine_average(detuned_generator(bare), HyperfineModel())
    assert np.array_equal(out.intensity, bare.intensity)


def test_quadrupole_beat_period():
    out = hyperfine_average(detuned_generator(natural_decay()), HyperfineModel(0.0, 7.0))
    period = 2 * math.pi / (7 * GAMMA)
    # the quoted 127 ns assumes tau = 141.1 ns; with tau = 140.05 ns it is 125.7 ns
    assert period == pytest.approx(2 * math.pi * constants.FE57_LIFETIME_NS / 7, rel=1e-12)
    assert period == pytest.approx(127.0, rel=0.015)
    # |cos(7 gamma t / 2)|^2 vanishes at odd multiples of half a period
    expected = np.exp(-GAMMA * T) * np.cos(3.5 * GAMMA * T) ** 2
    assert np.allclose(out.intensity, expected, rtol=1e-12, atol=1e-15)
    t_zero = np.array([0.5, 1.5]) * period
    fine = np.linspace(0, 192, 19201)
    dense = hyperfine_average(detuned_generator(FieldTrace(fine, np.exp(-0.5 * GAMMA * fine))), HyperfineModel(0.0, 7.0))
    minima = fine[1:-1][(dense.intensity[1:-1] < dense.intensity[:-2]) & (dense.intensity[1:-1] < dense.intensity[2:])]
    assert np.allclose(minima, t_zero, atol=0.02)


def test_continuum_envelope_matches_lines():
    model = HyperfineModel(4.0, 7.0, 41)
    det, w = model.lines()
    t = np.linspace(0, 60, 61)
    direct = (w[None, :] * np.exp(-1j * np.outer(t, det))).sum(axis=1)
    assert np.allclose(direct, model.envelope(t), atol=1e-10)


@pytest.mark.parametrize("which, model", [("fc", (6.0, 6.0)), ("gi", (4.0, 7.0))])
def test_node_doubling_converged(which, model, fc_params, gi_params):
    if which == "fc":
        bare = emitted_field_fc(fc_params.replace(length=2e6 * 0.029 / abs(fc_params.zeta)), Drive.front(), T)
    else:
        bare = emitted_field_gi(gi_params, Drive.grazing(gi_params.theta_m), T)
    base = detuned_generator(bare)
    coarse = hyperfine_average(base, HyperfineModel(*model))
    fine = hyperfine_average(base, HyperfineModel(*model, n_lines=19), check=False)
    # measured relative to the peak intensity
    assert np.max(np.abs(fine.intensity - coarse.intensity)) < 1e-3 * np.max(fine.intensity)


def test_quadrature_check_error():
    with pytest.raises(ValueError, match="n_lines"):
        hyperfine_average(detuned_generator(natural_decay()), HyperfineModel(30.0, 0.0, n_lines=1))


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0, 8), st.floats(0, 8))
def test_averages_commute_with_scaling(c, broad, split):
    base = natural_decay()
    scaled = FieldTrace(T, math.sqrt(c) * base.b)
    model = HyperfineModel(broad, split)
    a = hyperfine_average(detuned_generator(base), model, check=False)
    b = hyperfine_average(detuned_generator(scaled), model, check=False)
    assert np.all(a.intensity >= 0)
    assert np.allclose(b.intensity, c * a.intensity, rtol=1e-9, atol=0)


# --- divergence average ----------------------------------------------------------


def test_divergence_identity(gi_params):
    gen = gi_generator(gi_params)
    out = divergence_average(gen, DivergenceModel(0.0), gi_params.theta_m)
    assert np.array_equal(out.intensity, gen(gi_params.theta_m).intensity)


def test_divergence_order_invariant(gi_params):
    gen = gi_generator(gi_params)
    model = DivergenceModel(math.radians(2.1e-3), 21)
    ref = divergence_average(gen, model, gi_params.theta_m)

    class Reversed(DivergenceModel):
        def angles(self, theta):
            return super().angles(theta)[::-1]

    rev = divergence_average(gen, Reversed(model.fwhm, 21), gi_params.theta_m)
    assert np.array_equal(ref.intensity, rev.intensity)


def test_divergence_far_detuning_flat(gi_params):
    gen = gi_generator(gi_params)
    theta = gi_params.theta_m + 2e-4
    few = divergence_average(gen, DivergenceModel(math.radians(2.1e-3), 3), theta)
    many = divergence_average(gen, DivergenceModel(math.radians(2.1e-3), 21), theta)
    assert np.max(np.abs(few.intensity - many.intensity)) < 5e-3 * np.max(many.intensity)


def test_divergence_lowers_peak_rate(gi_params):
    gen = gi_generator(gi_params)
    model = DivergenceModel(math.radians(2.1e-3), 21)
    out = divergence_average(gen, model, gi_params.theta_m)
    peak = gen(gi_params.theta_m).intensity
    # averaging over slower off-resonant angles slows the early decay
    assert out.intensity[8] / out.intensity[0] > peak[8] / peak[0]
    assert out.provenance["divergence_samples"] == "21"


# --- multiline GI field ------------------------------------------------------------


def test_multiline_single_line_matches_analytic(gi_params):
    theta = gi_params.theta_m + 1e-5
    eta = frequency_shift(gi_params, theta)
    b = multiline_gi_field(eta, GAMMA, [0.0], [1.0], T)
    ref = emitted_field_gi(gi_params, Drive.grazing(theta), T)
    assert np.allclose(b, ref.b, rtol=1e-10, atol=1e-18)
    assert np.all(multiline_gi_field(eta, GAMMA, [0.0], [1.0], [-1.0, -0.1]) == 0)


def test_multiline_weak_coupling_is_line_sum():
    det, w = HyperfineModel(0.0, 7.0).lines()
    eta = 1e-9j
    b = multiline_gi_field(eta, GAMMA, det, w, T)
    ref = 1j * 1e-3 * eta * (w[None, :] * np.exp(-(0.5 * GAMMA + 1j * det[None, :]) * T[:, None])).sum(axis=1)
    assert np.allclose(b, ref, rtol=1e-6)


# --- traces, gating, counts ------------------------------------------------------------


def test_time_trace_validation():
    with pytest.raises(ValueError):
        TimeTrace(T)
    with pytest.raises(ValueError):
        TimeTrace(T, -np.ones_like(T))
    with pytest.raises(ValueError):
        TimeTrace(T, counts=np.full(T.size, 0.5))
    with pytest.raises(ValueError):
        TimeTrace(T, np.ones_like(T), gate=(0.0, 200.0))
    with pytest.raises(ValueError):
        TimeTrace(T, np.ones(3))


def test_gate(gi_params):
    trace = TimeTrace(T, np.ones_like(T))
    gated = apply_gate(trace)
    assert gated.t_grid.min() >= 13.0 and gated.gate == (13.0, 192.0)


def test_time_trace_csv_round_trip(tmp_path):
    trace = poissonize(TimeTrace(T, np.exp(-GAMMA * T), provenance={"source": "test"}), 10_000, seed=3)
    trace = trace.gated((13.0, 150.0))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = TimeTrace.from_csv(path)
    assert np.array_equal(back.counts, trace.counts)
    assert np.allclose(back.intensity, trace.intensity, rtol=1e-11)
    assert back.gate == (13.0, 150.0)
    assert back.provenance["source"] == "test"


def test_poissonize_basics():
    zero = poissonize(TimeTrace(T, np.zeros_like(T)), 1000, seed=1)
    assert np.all(zero.counts == 0)
    smooth = TimeTrace(T, np.exp(-GAMMA * T))
    a, b = poissonize(smooth, 1000, seed=7), poissonize(smooth, 1000, seed=7)
    assert np.array_equal(a.counts, b.counts)
    with pytest.raises(ValueError):
        poissonize(smooth, 0, seed=1)


def test_poissonize_statistics():
    smooth = TimeTrace(T, np.exp(-GAMMA * T))
    trace = poissonize(smooth, 1_000_000, seed=11)
    mean = smooth.intensity * 1e6 / smooth.intensity.sum()
    chi2 = np.sum((trace.counts - mean) ** 2 / mean) / T.size
    assert 0.8 <= chi2 <= 1.2
    assert trace.counts.sum() == pytest.approx(1e6, rel=5e-3)


def test_config_digest_stable():
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})
