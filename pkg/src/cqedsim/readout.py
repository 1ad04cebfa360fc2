"""Dispersive-readout synthesis, the normalized-signal estimator, and fits.

Covers the full analysis pipeline of the time-domain measurements:
IQ trace synthesis with cavity ring-up and readout-induced decay, the
normalized integrated signal V_H, damped-cosine Rabi fits, the
phenomenological pump-recovery model with its saturating-exponential fit,
ac-Stark photon calibration, and the Kerr slope fit.  Everything is
deterministic given a seed; random streams are per-call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import OptimizeWarning, brentq, curve_fit

from .device import DissipationParams
from .errors import (
    ConvergenceError,
    DegenerateNormalizationError,
    IllPosedFitWarning,
    InconsistentSignError,
    NonlinearityWarning,
)
from .spectral import DerivedSpectrum

_TWO_PI = 2.0 * np.pi

DEFAULT_ENSEMBLE = 50_000  # averaged time traces per measured point
BASE_NOISE_SIGMA = 1.0     # single-shot additive noise, arbitrary volts


@dataclass(frozen=True)
class SignalTrace:
    """Ensemble-averaged IQ readout record on a uniform time grid."""

    t_ns: np.ndarray
    i: np.ndarray
    q: np.ndarray
    role: str = "V_m"  # V_g | V_s | V_m
    ensemble: int = DEFAULT_ENSEMBLE

    def __post_init__(self) -> None:
        if not (len(self.t_ns) == len(self.i) == len(self.q)):
            raise ValueError("trace arrays must share a length")
        if len(self.t_ns) > 1:
            steps = np.diff(self.t_ns)
            if np.max(np.abs(steps - steps[0])) > 1e-9:
                raise ValueError("time grid must be uniform")
        if self.ensemble < 1:
            raise ValueError("ensemble must be >= 1")

    @property
    def dt(self) -> float:
        return float(self.t_ns[1] - self.t_ns[0])


def synthesize_trace(populations, spec: DerivedSpectrum,
                     dissipation: DissipationParams, readout_nbar: float,
                     duration_ns: float, noise_seed: int | None = 0,
                     dt_ns: float = 10.0, role: str = "V_m",
                     ensemble: int = DEFAULT_ENSEMBLE) -> SignalTrace:
    """Simulated ensemble-averaged readout trace for given qubit populations.

    The cavity rings up (rate kappa/2) toward a steady state whose complex
    amplitude depends on the qubit state through the dispersive detunings
    +-chi/2 around the readout tone; |steady|^2 matches ``readout_nbar``.
    Qubit decay during the measurement mixes the conditional responses,
    with the relaxation lag of the cavity after a jump included, so the
    documented V_H bias is reproduced.  The saturation reference (role
    'V_s') is held at its populations, modeling the sustained saturation
    tone used for normalization.  White noise is scaled by
    1/sqrt(ensemble), deterministic given the seed; ``noise_seed=None``
    disables it.
    """
    populations = np.asarray(populations, dtype=float)
    if populations.size != 2:
        raise ValueError("populations must be (p_ground, p_excited)")
    if abs(populations.sum() - 1.0) > 1e-9:
        raise ValueError("populations must sum to 1")
    if readout_nbar <= 0:
        raise ValueError("readout_nbar must be > 0")

    kappa_rate = _TWO_PI * dissipation.kappa * 1e-3      # 1/ns
    gamma = 1.0 / (dissipation.t1_q * 1e3)               # 1/ns
    chi_ghz = spec.chi * 1e-3
    delta_g = +0.5 * chi_ghz                              # tone centered
    delta_e = -0.5 * chi_ghz
    # drive chosen so the ground-state steady amplitude holds readout_nbar
    denom_g = 0.5 * kappa_rate + 1j * _TWO_PI * delta_g
    eps = np.sqrt(readout_nbar) * abs(denom_g)
    alpha_ss = {s: -1j * eps / (0.5 * kappa_rate + 1j * _TWO_PI * d)
                for s, d in (("g", delta_g), ("e", delta_e))}

    t = np.arange(0.0, duration_ns + dt_ns / 2, dt_ns)
    p_g, p_e = populations
    if role == "V_s" or p_e == 0.0:
        # sustained saturation (populations pinned) and the pure ground
        # state are jump-free: plain conditional ring-ups, analytic
        alpha = (p_g * _ring_up(alpha_ss["g"], delta_g, kappa_rate, t)
                 + p_e * _ring_up(alpha_ss["e"], delta_e, kappa_rate, t))
    else:
        alpha = _decaying_ensemble_amplitude(
            p_e, delta_g, delta_e, kappa_rate, gamma, eps, t)

    i, q = alpha.real.copy(), alpha.imag.copy()
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        sigma = BASE_NOISE_SIGMA / np.sqrt(ensemble)
        i += rng.normal(0.0, sigma, t.size)
        q += rng.normal(0.0, sigma, t.size)
    return SignalTrace(t_ns=t, i=i, q=q, role=role, ensemble=ensemble)


def _ring_up(alpha_ss: complex, delta_ghz: float, kappa_rate: float,
             t: np.ndarray) -> np.ndarray:
    pole = 0.5 * kappa_rate + 1j * _TWO_PI * delta_ghz
    return alpha_ss * (1.0 - np.exp(-pole * t))


def _decaying_ensemble_amplitude(p_e0: float, delta_g: float, delta_e: float,
                                 kappa_rate: float, gamma: float, eps: float,
                                 t: np.ndarray) -> np.ndarray:
    """Ensemble-averaged cavity amplitude with qubit decay e -> g.

    Evolves the conditional amplitudes x_s = E[alpha * 1{qubit = s}]:
    jumps transfer amplitude from the e-branch to the g-branch, which then
    relaxes toward the g steady state at rate kappa/2 (the relaxation lag
    responsible for the V_H bias).
    """
    pole_g = 0.5 * kappa_rate + 1j * _TWO_PI * delta_g
    pole_e = 0.5 * kappa_rate + 1j * _TWO_PI * delta_e

    def rhs(_t, y):
        x_g, x_e, p_e = y[0] + 1j * y[1], y[2] + 1j * y[3], y[4].real
        dx_g = -pole_g * x_g - 1j * eps * (1.0 - p_e) + gamma * x_e
        dx_e = -pole_e * x_e - 1j * eps * p_e - gamma * x_e
        return [dx_g.real, dx_g.imag, dx_e.real, dx_e.imag, -gamma * p_e]

    y0 = [0.0, 0.0, 0.0, 0.0, p_e0]
    sol = solve_ivp(rhs, (float(t[0]), float(t[-1])), y0, t_eval=t,
                    method="DOP853", rtol=1e-10, atol=1e-12)
    return (sol.y[0] + 1j * sol.y[1]) + (sol.y[2] + 1j * sol.y[3])


def v_h(vg: SignalTrace, vs: SignalTrace, vm: SignalTrace) -> float:
    """Normalized integrated signal
    V_H = 0.5 * sum(V_g - V_m) / sum(V_g - V_s).

    Computed on the quadrature maximizing the |V_g - V_s| integral
    (ground/saturation contrast).  Exact per the formula: affine
    transforms applied to all three traces cancel, and a pointwise mixture
    V_m = lam*V_g + (1-lam)*V_s returns (1-lam)/2.
    """
    if not (len(vg.t_ns) == len(vs.t_ns) == len(vm.t_ns)):
        raise ValueError("traces must share a time grid")
    if abs(vg.dt - vs.dt) > 1e-12 or abs(vg.dt - vm.dt) > 1e-12:
        raise ValueError("traces must share dt")
    dt = vg.dt
    denom_i = np.sum(vg.i - vs.i) * dt
    denom_q = np.sum(vg.q - vs.q) * dt
    use_i = abs(denom_i) >= abs(denom_q)
    denom = denom_i if use_i else denom_q
    num = (np.sum(vg.i - vm.i) if use_i else np.sum(vg.q - vm.q)) * dt

    noise = _noise_floor(vg, "i" if use_i else "q")
    floor = 3.0 * noise * np.sqrt(len(vg.t_ns)) * dt
    if abs(denom) <= floor:
        raise DegenerateNormalizationError(
            f"|ground-saturation integral| = {abs(denom):.3g} below the "
            f"noise floor {floor:.3g}; no readout contrast")
    return float(0.5 * num / denom)


def _noise_floor(trace: SignalTrace, quad: str) -> float:
    """Robust per-sample noise estimate from first differences."""
    y = getattr(trace, quad)
    if len(y) < 3:
        return 0.0
    d = np.diff(y)
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / np.sqrt(2.0))


@dataclass(frozen=True)
class RabiFit:
    """Damped-cosine fit A exp(-t/tau) cos(2 pi f t + phi) + c."""

    amplitude: float
    frequency: float
    decay_time: float
    phase: float
    offset: float
    stderr: dict
    residual_norm: float
    covariance: np.ndarray


def fit_rabi(t, y) -> RabiFit:
    """Least-squares damped cosine; deterministic given the data.

    Needs at least 8 points covering roughly one oscillation period.
    Raises ConvergenceError with residual diagnostics when the optimizer
    fails.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 points")

    def model(tt, a, f, tau, phi, c):
        return a * np.exp(-tt / tau) * np.cos(_TWO_PI * f * tt + phi) + c

    c0 = float(np.mean(y))
    a0 = 0.5 * (np.max(y) - np.min(y))
    span = t[-1] - t[0]
    # frequency seed from the periodogram
    yc = y - c0
    freqs = np.fft.rfftfreq(4 * t.size, t[1] - t[0])
    power = np.abs(np.fft.rfft(yc, 4 * t.size))
    f0 = float(freqs[np.argmax(power[1:]) + 1]) if np.max(power[1:]) > 0 else 1.0 / span
    if a0 == 0.0:
        a0 = 1e-12  # constant data: let the fit report a zero amplitude
    p0 = [a0, f0, 2.0 * span, 0.0, c0]
    try:
        with warnings.catch_warnings():
            # degenerate (flat) data legitimately yields a singular
            # covariance; stderr = inf carries that to the caller
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(model, t, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        resid = float(np.linalg.norm(y - model(t, *p0)))
        raise ConvergenceError(f"Rabi fit did not converge: {exc}",
                               residual=resid) from exc
    resid = float(np.linalg.norm(y - model(t, *popt)))
    perr = np.sqrt(np.diag(pcov)) if np.all(np.isfinite(pcov)) else np.full(5, np.inf)
    names = ("amplitude", "frequency", "decay_time", "phase", "offset")
    # canonical sign: positive amplitude, phase wrapped
    a, f, tau, phi, c = popt
    if a < 0:
        a, phi = -a, phi + np.pi
    phi = float(np.angle(np.exp(1j * phi)))
    return RabiFit(amplitude=float(a), frequency=float(abs(f)),
                   decay_time=float(tau), phase=phi, offset=float(c),
                   stderr=dict(zip(names, perr.tolist())),
                   residual_norm=resid, covariance=pcov)


@dataclass(frozen=True)
class PumpRecoveryModel:
    """Phenomenological coherence recovery after a strong pump.

    amplitude(tau_d) = f_max * P_confined(tau_d) * C_photon(tau_d) with
      P_confined = 1 - exp(-tau_d / t_unconfined)   (transmon re-confined)
      C_photon   = exp(-s * n_d * exp(-kappa * tau_d))  (residual pump
                   photons dephase; s is the dephasing sensitivity)
    Both factor shapes are explicit model choices, not measured forms.
    """

    n_d: float = 2.1e4
    kappa: float = 1.38          # MHz, /2pi value
    t_unconfined: float = 4.0    # us
    dephasing_s: float = 1e-3    # per photon
    f_max: float = 1.0

    def __post_init__(self) -> None:
        if min(self.n_d, self.kappa, self.t_unconfined,
               self.dephasing_s, self.f_max) <= 0:
            raise ValueError("all recovery-model parameters must be > 0")

    def amplitude(self, tau_d_us) -> np.ndarray:
        tau = np.asarray(tau_d_us, dtype=float)
        kappa_per_us = _TWO_PI * self.kappa  # 1/us from the /2pi MHz value
        confined = 1.0 - np.exp(-tau / self.t_unconfined)
        nbar = self.n_d * np.exp(-kappa_per_us * tau)
        return self.f_max * confined * np.exp(-self.dephasing_s * nbar)


def recovery_amplitude_model(model: PumpRecoveryModel, tau_d_grid) -> np.ndarray:
    """Forward model amplitudes on a positive ascending delay grid (us)."""
    tau = np.asarray(tau_d_grid, dtype=float)
    if np.any(tau < 0) or (tau.size > 1 and not np.all(np.diff(tau) > 0)):
        raise ValueError("tau_d grid must be positive ascending")
    return model.amplitude(tau)


@dataclass(frozen=True)
class ResurgenceFit:
    """Saturating-exponential fit F (1 - exp(-(t - t0)/tau)), clipped at 0.

    The printed fit form in the source experiment carries a growing
    exponent; a growing exponential cannot saturate, so the decaying sign
    is used here (recorded in ``notes``).
    """

    f_max: float
    t0: float
    tau: float
    residual_norm: float
    notes: str = "exponent sign: decaying, e^{-(t-t0)/tau}"

    @property
    def timescale(self) -> float:
        """Headline recovery scale t0 + tau."""
        return self.t0 + self.tau


def fit_resurgence(tau_d, amplitudes) -> ResurgenceFit:
    """Fit the clipped saturating exponential to recovery amplitudes.

    Needs >= 5 points with at least one near saturation; warns ill-posed
    when no point exceeds 0.8 * F or the rise is unresolved by the grid.
    """
    t = np.asarray(tau_d, dtype=float)
    y = np.asarray(amplitudes, dtype=float)
    if t.size < 5:
        raise ValueError("need at least 5 points")

    spread = np.max(y) - np.min(y)
    scale = max(abs(float(np.max(y))), 1e-30)
    if spread < 1e-9 * scale:
        warnings.warn("all amplitudes equal: tau -> 0 branch is ill-posed",
                      IllPosedFitWarning, stacklevel=2)
        return ResurgenceFit(f_max=float(np.mean(y)), t0=float(t[0]),
                             tau=0.0, residual_norm=0.0)

    def model(tt, f, t0, tau):
        return f * np.clip(1.0 - np.exp(-(tt - t0) / tau), 0.0, None)

    # seed from the rise geometry: crossing times of 25/50/75% of the
    # saturation level (robust against noise, unlike sorting-based lookups)
    f0 = float(np.mean(np.sort(y)[-3:]))
    def first_crossing(level):
        above = y >= level * f0
        return float(t[np.argmax(above)]) if np.any(above) else float(t[-1])
    t25, t50, t75 = (first_crossing(l) for l in (0.25, 0.50, 0.75))
    tau_seed = max((t75 - t25) / 1.0986, (t[-1] - t[0]) / 20.0)
    t0_seed = t50 - 0.6931 * tau_seed
    try:
        popt, pcov = curve_fit(model, t, y, p0=[f0, t0_seed, tau_seed],
                               maxfev=20000,
                               bounds=([0.0, -np.inf, 1e-12],
                                       [np.inf, np.inf, np.inf]))
    except RuntimeError as exc:
        raise ConvergenceError(f"resurgence fit did not converge: {exc}",
                               residual=float(np.std(y))) from exc
    f_max, t0, tau = popt
    resid = float(np.linalg.norm(y - model(t, *popt)))
    if not np.any(y > 0.8 * f_max):
        warnings.warn("no amplitude above 0.8*F: saturation unconstrained",
                      IllPosedFitWarning, stacklevel=2)
    if tau < np.min(np.diff(t)) * 1e-3:
        warnings.warn("fitted tau below the grid resolution",
                      IllPosedFitWarning, stacklevel=2)
    return ResurgenceFit(f_max=float(f_max), t0=float(t0), tau=float(tau),
                         residual_norm=resid)


def tune_recovery_to_timescale(target_t0_plus_tau: float,
                               base: PumpRecoveryModel,
                               tau_grid=None) -> PumpRecoveryModel:
    """Adjust t_unconfined so the noiseless fit returns the target t0+tau."""
    if tau_grid is None:
        tau_grid = np.linspace(0.4, 14.0, 24)

    def fitted(t_u: float) -> float:
        m = PumpRecoveryModel(n_d=base.n_d, kappa=base.kappa,
                              t_unconfined=t_u, dephasing_s=base.dephasing_s,
                              f_max=base.f_max)
        with warnings.catch_warnings():
            # probe fits at extreme t_u legitimately miss saturation
            warnings.simplefilter("ignore", IllPosedFitWarning)
            return fit_resurgence(tau_grid, m.amplitude(tau_grid)).timescale

    t_u = brentq(lambda x: fitted(x) - target_t0_plus_tau, 0.2, 20.0,
                 xtol=1e-6)
    return PumpRecoveryModel(n_d=base.n_d, kappa=base.kappa,
                             t_unconfined=float(t_u),
                             dephasing_s=base.dephasing_s, f_max=base.f_max)


@dataclass(frozen=True)
class StarkCalibration:
    """ac-Stark photon-number calibration.

    chi is the dispersive shift (MHz); the power-to-photon conversion is
    anchored at one reference point (power in dBm at the device input
    versus mean photon number) and is linear in power.
    """

    chi: float
    ref_power_dbm: float
    ref_nbar: float

    def __post_init__(self) -> None:
        if self.chi == 0:
            raise ValueError("chi must be nonzero")
        if self.ref_nbar <= 0:
            raise ValueError("ref_nbar must be > 0")

    @property
    def line_attenuation_db(self) -> float:
        """Power level corresponding to one mean photon."""
        return self.ref_power_dbm - 10.0 * np.log10(self.ref_nbar)

    def photons_from_power(self, power_dbm) -> np.ndarray:
        p = np.asarray(power_dbm, dtype=float)
        return 10.0 ** ((p - self.line_attenuation_db) / 10.0)


def photons_from_stark(qubit_shift_mhz: float, cal: StarkCalibration) -> float:
    """Mean photon number nbar = shift / (2 chi); sign-aware.

    Raises InconsistentSignError when the measured shift direction
    contradicts the sign of chi.
    """
    nbar = qubit_shift_mhz / (2.0 * cal.chi)
    if nbar < 0:
        raise InconsistentSignError(
            f"shift {qubit_shift_mhz} MHz against chi = {cal.chi} MHz "
            "implies negative photon number")
    return float(nbar)


@dataclass(frozen=True)
class KerrFit:
    """Linear fit of omega_c(nbar) = omega_c(0) - 2*alpha_c*nbar."""

    alpha_c_khz: float
    intercept_ghz: float
    alpha_c_stderr_khz: float
    residual_norm: float


def fit_kerr_slope(nbar, freq_ghz) -> KerrFit:
    """Extract the self-Kerr from dressed frequency vs photon number.

    Plain linear least squares on the stated shift law; warns when the
    residual exceeds 3x the noise estimate (points past the linear
    dynamic range).
    """
    n = np.asarray(nbar, dtype=float)
    f = np.asarray(freq_ghz, dtype=float)
    if n.size < 4:
        raise ValueError("need at least 4 points in the linear regime")
    coeffs, cov = np.polyfit(n, f, 1, cov=True)
    slope, intercept = coeffs
    alpha_c_khz = -0.5 * slope * 1e6
    resid = f - np.polyval(coeffs, n)
    resid_norm = float(np.linalg.norm(resid))
    dof = max(n.size - 2, 1)
    noise_est = float(np.sqrt(resid @ resid / dof))
    # a clean line has residual ~ noise; a cubic/critical tail inflates it
    smooth = np.abs(np.diff(resid, 2)).mean() / np.sqrt(6.0) if n.size >= 5 else noise_est
    if smooth > 0 and noise_est > 3.0 * smooth:
        warnings.warn(
            "fit residual exceeds 3x the point-noise estimate: data extend "
            "past the linear (pre-critical) regime",
            NonlinearityWarning, stacklevel=2)
    return KerrFit(alpha_c_khz=float(alpha_c_khz),
                   intercept_ghz=float(intercept),
                   alpha_c_stderr_khz=float(0.5e6 * np.sqrt(cov[0, 0])),
                   residual_norm=resid_norm)


def write_trace_csv(path, trace: SignalTrace) -> None:
    """CSV export: t_ns,i,q."""
    with open(path, "w") as fh:
        fh.write("t_ns,i,q\n")
        for t, i, q in zip(trace.t_ns, trace.i, trace.q):
            fh.write(f"{t:.10g},{i:.10g},{q:.10g}\n")


def read_trace_csv(path, role: str = "V_m",
                   ensemble: int = DEFAULT_ENSEMBLE) -> SignalTrace:
    """Ingest an externally measured trace with the same schema."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return SignalTrace(t_ns=data[:, 0], i=data[:, 1], q=data[:, 2],
                       role=role, ensemble=ensemble)


def write_fit_report(path, name: str, params: dict, stderr: dict | None = None,
                     extra: dict | None = None) -> None:
    """Structured text report: parameter, value, stderr rows."""
    with open(path, "w") as fh:
        fh.write(f"fit: {name}\n")
        fh.write("parameter,value,stderr\n")
        for key, val in params.items():
            err = (stderr or {}).get(key, "")
            fh.write(f"{key},{val!r},{err!r}\n" if err != "" else f"{key},{val!r},\n")
        for key, val in (extra or {}).items():
            fh.write(f"# {key} = {val}\n")
