"""Time-domain pulse construction and the flux-line transfer function.

Envelopes are pure functions of time (ns); waveform transforms are
linear, causal, and deterministic.  Sequences are immutable values with
an exact text serialization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np
from scipy.signal import lfilter

from .device import DeviceModel, FluxBias
from .errors import ClampBindingWarning, SamplingError
from .spectral import flux_for_detuning

# Half-Gaussian flux edges are truncated at this many sigmas.
EDGE_SUPPORT_SIGMAS = 4.0


def _edged_unit_envelope(t: np.ndarray, rise_end: float, fall_start: float,
                         total: float, sigma: float) -> np.ndarray:
    """Unit envelope: Gaussian rise to 1, plateau, Gaussian fall, 0 outside."""
    out = np.zeros_like(t)
    inside = (t >= 0.0) & (t <= total)
    rising = inside & (t < rise_end)
    falling = inside & (t > fall_start)
    flat = inside & ~rising & ~falling
    out[flat] = 1.0
    out[rising] = np.exp(-0.5 * ((t[rising] - rise_end) / sigma) ** 2)
    out[falling] = np.exp(-0.5 * ((t[falling] - fall_start) / sigma) ** 2)
    return out

# Default sample steps (ns): fine enough to resolve sigma = 1.1 ns edges
# and a 100 MHz line filter with < 0.1% discretization error.
FLUX_DT_NS = 0.1
CONTROL_DT_NS = 0.2


@dataclass(frozen=True)
class GaussEdgeRect:
    """Rectangular pulse with Gaussian rise/fall edges.

    The edges are Gaussian segments of duration ``edge_length`` and width
    ``edge_sigma`` that meet the plateau at full amplitude; the envelope
    is symmetric, envelope(t) = envelope(length_total - t).  ``amplitude``
    is dimensionless for waveform work or a drive strength in GHz when
    used as a Hamiltonian coefficient.
    """

    length_total: float
    edge_length: float
    edge_sigma: float
    amplitude: float = 1.0
    carrier_freq: float = 0.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if 2.0 * self.edge_length > self.length_total:
            raise ValueError("edges overlap: 2*edge_length > length_total")
        if self.edge_sigma <= 0:
            raise ValueError("edge_sigma must be > 0")

    def envelope(self, t):
        """Envelope at time t (ns past pulse start); 0 outside support."""
        scalar = np.isscalar(t) or np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        out = _edged_unit_envelope(tt, self.edge_length,
                                   self.length_total - self.edge_length,
                                   self.length_total, self.edge_sigma)
        out = self.amplitude * out
        return float(out[0]) if scalar else out


@dataclass(frozen=True)
class FluxPulse:
    """Flux excursion: half-Gaussian rise, flat plateau, half-Gaussian fall.

    ``amplitude`` is the reduced-flux step on top of ``baseline``; each
    edge is a half-Gaussian of width ``edge_sigma`` truncated at
    EDGE_SUPPORT_SIGMAS sigmas and joined to the plateau with value
    continuity.
    """

    plateau_length: float
    edge_sigma: float
    amplitude: float
    baseline: FluxBias = FluxBias(0.0)

    def __post_init__(self) -> None:
        if self.edge_sigma <= 0:
            raise ValueError("edge_sigma must be > 0")
        if self.plateau_length < 0:
            raise ValueError("plateau_length must be >= 0")

    @property
    def edge_length(self) -> float:
        return EDGE_SUPPORT_SIGMAS * self.edge_sigma

    @property
    def total_length(self) -> float:
        return 2.0 * self.edge_length + self.plateau_length

    def envelope(self, t):
        """Absolute reduced flux at time t (ns past pulse start)."""
        scalar = np.isscalar(t) or np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        rise_end = self.edge_length
        out = _edged_unit_envelope(tt, rise_end, rise_end + self.plateau_length,
                                   self.total_length, self.edge_sigma)
        value = self.baseline.phi_ratio + self.amplitude * out
        return float(value[0]) if scalar else value


@dataclass(frozen=True)
class PumpTone:
    """Strong pump segment; carries metadata only at this layer."""

    duration: float
    freq_ghz: float
    n_d: float = 0.0


@dataclass(frozen=True)
class MeasureWindow:
    """Readout window; metadata for the trace-synthesis layer."""

    duration: float
    freq_ghz: float


@dataclass(frozen=True)
class LineFilter:
    """Unity-DC-gain low-pass cascade modeling the flux line.

    f3db  : -3 dB bandwidth of one stage, in MHz.
    order : number of cascaded first-order stages.
    """

    f3db: float
    order: int = 1

    def __post_init__(self) -> None:
        if self.f3db <= 0:
            raise ValueError("f3db must be > 0")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    def pole(self, dt_ns: float) -> float:
        """Discrete pole a = exp(-2*pi*f3db*dt) of one stage."""
        return float(np.exp(-2.0 * np.pi * self.f3db * 1e-3 * dt_ns))

    def tau_ns(self) -> float:
        """Continuous time constant 1/(2*pi*f3db) in ns."""
        return 1.0 / (2.0 * np.pi * self.f3db * 1e-3)


def sample_envelope(pulse, t):
    """Envelope of a GaussEdgeRect or FluxPulse at time(s) t in ns."""
    return pulse.envelope(t)


def apply_line_filter(waveform, filt: LineFilter, dt_ns: float,
                      initial: float | None = None) -> np.ndarray:
    """Propagate a sampled waveform through the low-pass cascade.

    Exact zero-order-hold recurrence y[k] = a*y[k-1] + (1-a)*x[k] per
    stage: causal, DC gain exactly 1, and (for order 1) never exceeding
    the input range.  The filter starts in steady state at ``initial``
    (default: the first sample), so waveforms that begin at their
    baseline see no startup transient.

    Raises SamplingError when dt violates dt <= 0.05/f3db.
    """
    x = np.asarray(waveform, dtype=float)
    dt_max = 50.0 / filt.f3db  # 0.05 / f3db with f3db in MHz, dt in ns
    if dt_ns > dt_max:
        raise SamplingError(
            f"dt = {dt_ns} ns too coarse for f3db = {filt.f3db} MHz "
            f"(need dt <= {dt_max:.4g} ns)")
    a = filt.pole(dt_ns)
    y = x
    for _ in range(filt.order):
        prev = y[0] if initial is None else float(initial)
        y, _ = lfilter([1.0 - a], [1.0, -a], y, zi=[a * prev])
    return y


@dataclass(frozen=True)
class PrecompensationResult:
    """Pre-distorted waveform plus clamp diagnostics."""

    waveform: np.ndarray
    max_residual: float
    clamp_active: bool
    n_clamped: int


def precompensate(target, filt: LineFilter, dt_ns: float,
                  clamp: float) -> PrecompensationResult:
    """Invert the line filter so filtering the result reproduces target.

    The first-order stage inverts exactly:
    w[k] = (y[k] - a*y[k-1]) / (1-a), w[0] = y[0]; cascaded stages invert
    in sequence.  Samples beyond ``clamp`` in magnitude are clipped and a
    ClampBindingWarning reports the worst residual of the clamped
    waveform after forward filtering.
    """
    y = np.asarray(target, dtype=float)
    if clamp <= np.max(np.abs(y)):
        raise ValueError("clamp must exceed max|target|")
    a = filt.pole(dt_ns)
    w = y.copy()
    for _ in range(filt.order):
        prev = w.copy()
        w = np.empty_like(prev)
        w[0] = prev[0]
        w[1:] = (prev[1:] - a * prev[:-1]) / (1.0 - a)
    clipped = np.clip(w, -clamp, clamp)
    n_clamped = int(np.sum(clipped != w))
    if n_clamped:
        achieved = apply_line_filter(clipped, filt, dt_ns)
        max_residual = float(np.max(np.abs(achieved - y)))
        warnings.warn(
            f"clamp {clamp} binds on {n_clamped} samples; worst residual "
            f"after filtering = {max_residual:.4g}",
            ClampBindingWarning, stacklevel=2)
    else:
        max_residual = 0.0
    return PrecompensationResult(waveform=clipped, max_residual=max_residual,
                                 clamp_active=bool(n_clamped), n_clamped=n_clamped)


@dataclass(frozen=True)
class Segment:
    role: str  # pump | control | flux | measure
    start_ns: float
    pulse: object


@dataclass(frozen=True)
class PulseSequence:
    """Timed segments of the swap/readout protocol.

    tau_d is the pump-end to control-start delay and tau_int the flux
    plateau length; both are stored redundantly for bookkeeping and kept
    consistent with the segment geometry by the builders.
    """

    segments: tuple
    tau_d: float
    tau_int: float

    def by_role(self, role: str) -> list:
        return [s for s in self.segments if s.role == role]

    def end_time(self) -> float:
        t = 0.0
        for s in self.segments:
            length = getattr(s.pulse, "total_length", None)
            if length is None:
                length = getattr(s.pulse, "length_total", None)
            if length is None:
                length = getattr(s.pulse, "duration", 0.0)
            t = max(t, s.start_ns + length)
        return t


DEFAULT_CONTROL = GaussEdgeRect(length_total=70.0, edge_length=35.0,
                                edge_sigma=9.0, amplitude=1.0)
DEFAULT_FLUX_EDGE_SIGMA = 1.1
DEFAULT_PUMP_LENGTH = 1000.0
DEFAULT_MEASURE_LENGTH = 2000.0
MEASURE_GUARD_NS = 10.0


def build_swap_sequence(dev: DeviceModel, target_detuning: float,
                        tau_int: float, tau_d: float = 0.0,
                        with_pump: bool = False,
                        control: GaussEdgeRect | None = None,
                        pump_n_d: float = 2.1e4,
                        flux_edge_sigma: float = DEFAULT_FLUX_EDGE_SIGMA,
                        baseline: FluxBias = FluxBias(0.0)) -> PulseSequence:
    """Assemble the single-excitation swap protocol.

    [optional pump at the bare cavity frequency] -> delay tau_d ->
    pi-pulse at the qubit frequency -> flux pulse whose plateau solves
    f01(Phi) = omega_c_bare + target_detuning -> return to baseline ->
    measure window.  The flux plateau amplitude comes from inverting the
    SQUID relation through the exact transmon spectrum (residual well
    below 0.1 MHz); raises UnreachableDetuningError outside the tunable
    range.
    """
    ctrl = control if control is not None else DEFAULT_CONTROL
    plateau_flux = flux_for_detuning(dev, target_detuning)
    amplitude = plateau_flux.phi_ratio - baseline.phi_ratio

    segments = []
    t = 0.0
    if with_pump:
        pump = PumpTone(duration=DEFAULT_PUMP_LENGTH,
                        freq_ghz=dev.cavity.omega_bare, n_d=pump_n_d)
        segments.append(Segment("pump", t, pump))
        t += pump.duration + tau_d

    segments.append(Segment("control", t, ctrl))
    t += ctrl.length_total

    flux = FluxPulse(plateau_length=tau_int, edge_sigma=flux_edge_sigma,
                     amplitude=amplitude, baseline=baseline)
    segments.append(Segment("flux", t, flux))
    t += flux.total_length + MEASURE_GUARD_NS

    measure = MeasureWindow(duration=DEFAULT_MEASURE_LENGTH,
                            freq_ghz=dev.cavity.omega_bare)
    segments.append(Segment("measure", t, measure))
    return PulseSequence(segments=tuple(segments), tau_d=tau_d,
                         tau_int=tau_int)


def sample_flux_waveform(seq: PulseSequence, dt_ns: float = FLUX_DT_NS,
                         t_end: float | None = None,
                         baseline: FluxBias | None = None):
    """Sample the sequence's flux channel on a uniform grid.

    Returns (t, phi) arrays covering [0, t_end]; outside flux-pulse
    support the waveform sits at the baseline.
    """
    flux_segments = seq.by_role("flux")
    if baseline is None:
        baseline = (flux_segments[0].pulse.baseline if flux_segments
                    else FluxBias(0.0))
    if t_end is None:
        t_end = seq.end_time()
    t = np.arange(0.0, t_end + dt_ns / 2, dt_ns)
    phi = np.full_like(t, baseline.phi_ratio)
    for seg in flux_segments:
        local = t - seg.start_ns
        mask = (local >= 0.0) & (local <= seg.pulse.total_length)
        phi[mask] += seg.pulse.envelope(local[mask]) - seg.pulse.baseline.phi_ratio
    return t, phi


def export_waveform_csv(path, t, values) -> None:
    """CSV export: header t_ns,value."""
    with open(path, "w") as fh:
        fh.write("t_ns,value\n")
        for ti, vi in zip(np.asarray(t), np.asarray(values)):
            fh.write(f"{ti:.10g},{vi:.10g}\n")


_SHAPE_TYPES = {
    "GaussEdgeRect": GaussEdgeRect,
    "FluxPulse": FluxPulse,
    "PumpTone": PumpTone,
    "MeasureWindow": MeasureWindow,
}


def _shape_params(pulse) -> str:
    parts = []
    for f in fields(pulse):
        v = getattr(pulse, f.name)
        if isinstance(v, FluxBias):
            v = v.phi_ratio
        parts.append(f"{f.name}={v!r}")
    return " ".join(parts)


def serialize_sequence(seq: PulseSequence) -> str:
    """Deterministic text form: (role, start_ns, shape-name, shape-params).

    Field order follows the shape dataclass definitions; floats use repr
    so all times round-trip exactly.
    """
    lines = ["# cqedsim pulse-sequence v1",
             f"tau_d_ns = {seq.tau_d!r}",
             f"tau_int_ns = {seq.tau_int!r}"]
    for seg in seq.segments:
        name = type(seg.pulse).__name__
        lines.append(
            f"segment = {seg.role} {seg.start_ns!r} {name} {_shape_params(seg.pulse)}")
    return "\n".join(lines) + "\n"


def parse_sequence(text: str) -> PulseSequence:
    """Inverse of serialize_sequence."""
    tau_d = tau_int = 0.0
    segments = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition("=")
        key = key.strip()
        rest = rest.strip()
        if key == "tau_d_ns":
            tau_d = float(rest)
        elif key == "tau_int_ns":
            tau_int = float(rest)
        elif key == "segment":
            role, start_s, shape_name, *param_parts = rest.split()
            cls = _SHAPE_TYPES[shape_name]
            kwargs = {}
            for part in param_parts:
                pname, _, pval = part.partition("=")
                kwargs[pname] = float(pval)
            if "baseline" in kwargs:
                kwargs["baseline"] = FluxBias(kwargs["baseline"])
            segments.append(Segment(role, float(start_s), cls(**kwargs)))
        else:
            raise ValueError(f"unrecognized sequence line: {line!r}")
    return PulseSequence(segments=tuple(segments), tau_d=tau_d,
                         tau_int=tau_int)
