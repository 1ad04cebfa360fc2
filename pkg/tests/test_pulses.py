import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqedsim.device import FluxBias
from cqedsim.errors import ClampBindingWarning, SamplingError, UnreachableDetuningError
from cqedsim.pulses import (
    DEFAULT_CONTROL,
    FluxPulse,
    GaussEdgeRect,
    LineFilter,
    apply_line_filter,
    build_swap_sequence,
    export_waveform_csv,
    parse_sequence,
    precompensate,
    sample_envelope,
    sample_flux_waveform,
    serialize_sequence,
)


# ------------------------------------------------------------------ envelopes

def test_gauss_edge_rect_plateau():
    p = GaussEdgeRect(length_total=70.0, edge_length=35.0, edge_sigma=9.0,
                      amplitude=1.0)
    assert sample_envelope(p, 35.0) == pytest.approx(1.0)
    p2 = GaussEdgeRect(length_total=100.0, edge_length=35.0, edge_sigma=9.0,
                       amplitude=0.7)
    assert sample_envelope(p2, 50.0) == pytest.approx(0.7)
    assert sample_envelope(p2, -1.0) == 0.0
    assert sample_envelope(p2, 101.0) == 0.0


def test_flux_pulse_edge_value_at_one_sigma():
    p = FluxPulse(plateau_length=10.0, edge_sigma=1.1, amplitude=0.25,
                  baseline=FluxBias(0.03))
    t = p.edge_length - 1.1  # one sigma before the plateau starts
    assert sample_envelope(p, t) == pytest.approx(0.03 + 0.25 * np.exp(-0.5))
    assert sample_envelope(p, p.edge_length + 5.0) == pytest.approx(0.28)
    assert sample_envelope(p, -2.0) == pytest.approx(0.03)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.0, 100.0))
def test_envelope_time_symmetry(t):
    p = GaussEdgeRect(length_total=100.0, edge_length=35.0, edge_sigma=9.0)
    assert sample_envelope(p, t) == pytest.approx(
        sample_envelope(p, 100.0 - t), rel=1e-12, abs=1e-15)
    f = FluxPulse(plateau_length=91.2, edge_sigma=1.1, amplitude=0.2)
    assert sample_envelope(f, t) == pytest.approx(
        sample_envelope(f, f.total_length - t), rel=1e-12, abs=1e-15)


def test_envelope_bounds():
    p = GaussEdgeRect(length_total=70.0, edge_length=35.0, edge_sigma=9.0,
                      amplitude=0.9)
    t = np.linspace(-5.0, 75.0, 500)
    env = sample_envelope(p, t)
    assert np.all(env >= 0.0) and np.all(env <= 0.9 + 1e-15)


def test_invalid_shapes():
    with pytest.raises(ValueError):
        GaussEdgeRect(length_total=50.0, edge_length=35.0, edge_sigma=9.0)
    with pytest.raises(ValueError):
        FluxPulse(plateau_length=-1.0, edge_sigma=1.1, amplitude=0.1)
    with pytest.raises(ValueError):
        FluxPulse(plateau_length=1.0, edge_sigma=0.0, amplitude=0.1)


# --------------------------------------------------------------- line filter

def test_filter_step_rise_time():
    filt = LineFilter(f3db=100.0)
    dt = 0.01
    t = np.arange(0.0, 60.0, dt)
    x = (t >= 5.0).astype(float)
    y = apply_line_filter(x, filt, dt)
    t10 = t[np.argmax(y >= 0.1)]
    t90 = t[np.argmax(y >= 0.9)]
    rise_expected = np.log(9.0) / (2 * np.pi * 0.1)  # ln(9)/(2 pi f3db), ns
    assert (t90 - t10) == pytest.approx(rise_expected, rel=0.05)


def test_filter_dc_gain_exact():
    filt = LineFilter(f3db=100.0, order=2)
    x = np.full(200, 0.37)
    y = apply_line_filter(x, filt, 0.1)
    assert np.allclose(y, x, atol=1e-15)


def test_filter_short_plateau_undershoots():
    filt = LineFilter(f3db=100.0)
    dt = 0.01
    t = np.arange(0.0, 20.0, dt)
    x = ((t >= 2.0) & (t < 5.0)).astype(float)  # 3 ns rectangular plateau
    y = apply_line_filter(x, filt, dt)
    peak = y.max()
    assert peak < 0.9
    # closed-form exponential ramp toward the target
    assert peak == pytest.approx(1.0 - np.exp(-2 * np.pi * 0.1 * 3.0), abs=0.01)


def test_filter_sampling_error():
    with pytest.raises(SamplingError):
        apply_line_filter(np.zeros(10), LineFilter(f3db=100.0), dt_ns=1.0)


def test_filter_causality():
    filt = LineFilter(f3db=100.0)
    rng = np.random.default_rng(0)
    x = rng.normal(size=400)
    y_full = apply_line_filter(x, filt, 0.1)
    x_trunc = x.copy()
    x_trunc[250:] = 0.0
    y_trunc = apply_line_filter(x_trunc, filt, 0.1)
    assert np.array_equal(y_full[:250], y_trunc[:250])


def test_filter_linearity():
    filt = LineFilter(f3db=100.0)
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=300), rng.normal(size=300)
    a, b = 1.7, -0.4
    lhs = apply_line_filter(a * x + b * y, filt, 0.1)
    rhs = a * apply_line_filter(x, filt, 0.1) + b * apply_line_filter(y, filt, 0.1)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_filter_area_preserved():
    """Window = pulse support + 10 time constants; the geometric tail of
    the recurrence completes the integral exactly."""
    filt = LineFilter(f3db=100.0)
    dt = 0.05
    pulse = FluxPulse(plateau_length=10.0, edge_sigma=1.1, amplitude=0.3)
    tail = 10.0 * filt.tau_ns()
    t = np.arange(0.0, pulse.total_length + tail, dt)
    x = sample_envelope(pulse, t)
    y = apply_line_filter(x, filt, dt, initial=0.0)  # relaxed filter
    a = filt.pole(dt)
    area_x = np.sum(x) * dt
    area_y = (np.sum(y) + y[-1] * a / (1.0 - a)) * dt  # analytic tail
    assert area_y == pytest.approx(area_x, rel=1e-9)


# ------------------------------------------------------------- precompensate

def test_precompensate_roundtrip():
    filt = LineFilter(f3db=100.0)
    dt = 0.1
    pulse = FluxPulse(plateau_length=10.0, edge_sigma=1.1, amplitude=0.3)
    t = np.arange(0.0, pulse.total_length + 20.0, dt)
    target = sample_envelope(pulse, t)
    res = precompensate(target, filt, dt, clamp=5.0)
    achieved = apply_line_filter(res.waveform, filt, dt)
    assert not res.clamp_active
    assert np.max(np.abs(achieved - target)) < 0.01 * 0.3


def test_precompensate_identity_limit():
    filt = LineFilter(f3db=25_000.0)  # effectively infinite bandwidth
    dt = 0.1
    pulse = FluxPulse(plateau_length=10.0, edge_sigma=1.1, amplitude=0.3)
    t = np.arange(0.0, pulse.total_length + 5.0, dt)
    target = sample_envelope(pulse, t)
    res = precompensate(target, filt, dt, clamp=5.0)
    assert np.max(np.abs(res.waveform - target)) < 1e-6


def test_precompensate_clamp_binds():
    filt = LineFilter(f3db=100.0)
    dt = 0.05
    pulse = FluxPulse(plateau_length=3.0, edge_sigma=1.1, amplitude=1.0)
    t = np.arange(0.0, pulse.total_length + 20.0, dt)
    target = sample_envelope(pulse, t)
    with pytest.warns(ClampBindingWarning):
        res = precompensate(target, filt, dt, clamp=1.05)
    assert res.clamp_active
    assert res.max_residual > 0.0


def test_precompensate_clamp_validation():
    with pytest.raises(ValueError):
        precompensate(np.ones(10), LineFilter(100.0), 0.1, clamp=0.5)


def test_precompensate_order2_roundtrip():
    filt = LineFilter(f3db=150.0, order=2)
    dt = 0.05
    pulse = FluxPulse(plateau_length=8.0, edge_sigma=1.1, amplitude=0.2)
    t = np.arange(0.0, pulse.total_length + 30.0, dt)
    target = sample_envelope(pulse, t)
    res = precompensate(target, filt, dt, clamp=10.0)
    achieved = apply_line_filter(res.waveform, filt, dt)
    assert np.max(np.abs(achieved - target)) < 1e-10


# --------------------------------------------------------- sequence assembly

def test_swap_sequence_inversion_residual(dev):
    from cqedsim.spectral import transmon_spectrum

    seq = build_swap_sequence(dev, 0.0, tau_int=20.0)
    flux = seq.by_role("flux")[0].pulse
    plateau = FluxBias(flux.baseline.phi_ratio + flux.amplitude)
    f01 = transmon_spectrum(dev.transmon, plateau, 2)[1]
    assert abs(f01 - dev.cavity.omega_bare) * 1e3 < 0.1  # < 0.1 MHz


def test_swap_sequence_degenerate_plateau(dev):
    seq = build_swap_sequence(dev, 0.0, tau_int=0.0)
    flux = seq.by_role("flux")[0].pulse
    assert flux.plateau_length == 0.0
    assert flux.total_length == pytest.approx(2 * flux.edge_length)


def test_swap_sequence_pump_delay(dev):
    seq = build_swap_sequence(dev, 0.0, tau_int=10.0, tau_d=8800.0,
                              with_pump=True)
    pump = seq.by_role("pump")[0]
    ctrl = seq.by_role("control")[0]
    pump_end = pump.start_ns + pump.pulse.duration
    assert ctrl.start_ns - pump_end == 8800.0  # exactly


def test_swap_sequence_unreachable(dev):
    with pytest.raises(UnreachableDetuningError):
        build_swap_sequence(dev, 2.0, tau_int=10.0)  # above max f01


def test_sequence_roles_ordered(dev):
    seq = build_swap_sequence(dev, 0.1, tau_int=15.0, with_pump=True,
                              tau_d=500.0)
    roles = [s.role for s in seq.segments]
    assert roles == ["pump", "control", "flux", "measure"]
    starts = [s.start_ns for s in seq.segments]
    assert starts == sorted(starts)


# ----------------------------------------------------------- serialization

def test_sequence_roundtrip_exact(dev):
    seq = build_swap_sequence(dev, 0.05, tau_int=12.345678901234567,
                              tau_d=8800.0, with_pump=True)
    text = serialize_sequence(seq)
    back = parse_sequence(text)
    assert back.tau_d == seq.tau_d
    assert back.tau_int == seq.tau_int
    for a, b in zip(seq.segments, back.segments):
        assert a.role == b.role
        assert a.start_ns == b.start_ns  # bitwise-exact times
        assert type(a.pulse) is type(b.pulse)
    fa = seq.by_role("flux")[0].pulse
    fb = back.by_role("flux")[0].pulse
    assert fa.amplitude == fb.amplitude
    assert fa.baseline.phi_ratio == fb.baseline.phi_ratio


def test_serialization_deterministic(dev):
    seq = build_swap_sequence(dev, 0.0, tau_int=7.0)
    assert serialize_sequence(seq) == serialize_sequence(seq)


def test_waveform_csv(tmp_path, dev):
    seq = build_swap_sequence(dev, 0.0, tau_int=5.0)
    t, phi = sample_flux_waveform(seq, 0.1)
    path = tmp_path / "wave.csv"
    export_waveform_csv(path, t, phi)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_ns,value"
    assert len(lines) == len(t) + 1


def test_flux_waveform_baseline_outside_support(dev):
    seq = build_swap_sequence(dev, 0.0, tau_int=5.0)
    t, phi = sample_flux_waveform(seq, 0.1)
    flux_seg = seq.by_role("flux")[0]
    before = phi[t < flux_seg.start_ns - 0.2]
    assert np.allclose(before, 0.0, atol=1e-15)
    target = flux_seg.pulse.amplitude
    mid = phi[np.abs(t - (flux_seg.start_ns + flux_seg.pulse.edge_length
                          + 2.5)) < 0.05]
    assert mid[0] == pytest.approx(target, rel=1e-12)


def test_default_control_matches_experiment_shape():
    assert DEFAULT_CONTROL.edge_length == 35.0
    assert DEFAULT_CONTROL.edge_sigma == 9.0
