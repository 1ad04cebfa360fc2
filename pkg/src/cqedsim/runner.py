"""Scenario orchestration: named figure-reproduction pipelines.

Each scenario loads a device file, runs the mapped module pipeline, and
writes CSV outputs plus rendered plots and a run manifest into
``<outdir>/<scenario>/<timestamp>/`` (with a ``latest`` link).  CSVs are
the source of truth; plot failures only warn.  Identical (config, seed)
pairs produce byte-identical CSVs.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import LoadedDevice, load_device
from .device import FluxBias
from .dynamics import (
    FluxLookup,
    HilbertSpace,
    calibrate_pi_pulse,
    simulate_chevron,
    write_chevron_csv,
)
from .errors import ConfigError
from .pulses import DEFAULT_CONTROL, LineFilter
from .readout import (
    PumpRecoveryModel,
    fit_kerr_slope,
    fit_rabi,
    fit_resurgence,
    tune_recovery_to_timescale,
    write_fit_report,
)
from .spectral import (
    dressed_shift_vs_photons,
    flux_for_detuning,
    kerr_coefficients,
    transmission_sweep,
    write_transmission_csv,
)

SCENARIOS = ("spectrum-flux-sweep", "kerr-power-sweep", "rabi-resurgence",
             "swap-chevron", "calibrate")

_2PI = 2.0 * np.pi


def _linspace(spec_str: str) -> np.ndarray:
    """Parse a 'start:stop:count' grid specifier."""
    try:
        a, b, n = spec_str.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec_str!r}; want start:stop:count") from exc


@dataclass
class ScenarioConfig:
    """Validated description of one scenario run."""

    scenario: str
    device_path: str
    out_dir: str
    seed: int = 0
    no_plots: bool = False
    tol: float = 1e-7
    filter_f3db: float | None = None
    filter_order: int = 1
    flux_grid: np.ndarray | None = None
    freq_grid: np.ndarray | None = None
    detuning_grid_mhz: np.ndarray | None = None
    tau_int_grid_ns: np.ndarray | None = None
    tau_d_grid_us: np.ndarray | None = None
    nbar_grid: np.ndarray | None = None
    kerr_detunings_ghz: np.ndarray | None = None

    def validate(self) -> LoadedDevice:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; "
                              f"choose from {', '.join(SCENARIOS)}")
        loaded = load_device(self.device_path)
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".writable"
        try:
            probe.touch()
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
        for name in ("flux_grid", "freq_grid", "detuning_grid_mhz",
                     "tau_int_grid_ns", "tau_d_grid_us", "nbar_grid"):
            g = getattr(self, name)
            if g is not None and len(g) == 0:
                raise ConfigError(f"grid {name} is empty")
        return loaded

    def canonical(self) -> dict:
        d = {}
        for key, val in self.__dict__.items():
            d[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return d


@dataclass
class RunManifest:
    """Record of one scenario run: inputs, outputs, checksums, timings."""

    scenario: str
    config_hash: str
    code_version: str
    seed: int
    resolved_defaults: dict
    files: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)
    run_dir: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _run_dir(cfg: ScenarioConfig) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S_%f")
    run = Path(cfg.out_dir) / cfg.scenario / stamp
    run.mkdir(parents=True)
    latest = Path(cfg.out_dir) / cfg.scenario / "latest"
    try:
        if latest.is_symlink() or latest.exists():
            latest.unlink()
        latest.symlink_to(run.name)
    except OSError:
        warnings.warn("could not refresh the 'latest' link", UserWarning,
                      stacklevel=2)
    return run


def run_scenario(cfg: ScenarioConfig) -> RunManifest:
    """Execute a scenario end to end; returns the written manifest."""
    loaded = cfg.validate()
    run = _run_dir(cfg)
    config_hash = hashlib.sha256(
        json.dumps(cfg.canonical(), sort_keys=True).encode()).hexdigest()[:16]
    manifest = RunManifest(scenario=cfg.scenario, config_hash=config_hash,
                           code_version=__version__, seed=cfg.seed,
                           resolved_defaults=dict(loaded.report.resolved),
                           run_dir=str(run))
    t_start = time.perf_counter()
    impl = {
        "spectrum-flux-sweep": _scenario_spectrum,
        "kerr-power-sweep": _scenario_kerr,
        "rabi-resurgence": _scenario_resurgence,
        "swap-chevron": _scenario_chevron,
        "calibrate": _scenario_calibrate,
    }[cfg.scenario]
    impl(cfg, loaded, run, manifest)
    manifest.timings_s["total"] = round(time.perf_counter() - t_start, 3)

    for path in sorted(run.iterdir()):
        if path.name != "manifest.json" and path.is_file():
            manifest.files[path.name] = _sha256(path)
    (run / "manifest.json").write_text(manifest.to_json())
    return manifest


def _maybe_plot(cfg: ScenarioConfig, fn) -> None:
    """Run a plotting closure; failures never fail the run."""
    if cfg.no_plots:
        return
    try:
        import matplotlib

        matplotlib.use("Agg")
        fn()
    except Exception as exc:  # plots are regenerable from the CSVs
        warnings.warn(f"plot skipped: {exc}", UserWarning, stacklevel=2)


def _scenario_spectrum(cfg, loaded, run, manifest):
    dev = loaded.device
    flux = cfg.flux_grid if cfg.flux_grid is not None else np.linspace(-0.5, 0.5, 201)
    omega = dev.cavity.omega_bare
    freq = cfg.freq_grid if cfg.freq_grid is not None else np.linspace(
        omega - 0.25, omega + 0.25, 401)
    t0 = time.perf_counter()
    s21 = transmission_sweep(dev, flux, freq, n_q=loaded.n_q, n_c=loaded.n_c)
    manifest.timings_s["sweep"] = round(time.perf_counter() - t0, 3)
    write_transmission_csv(run / "transmission.csv", flux, freq, s21)

    # peak trajectory: local maxima of each row above a visibility floor
    with open(run / "peak_trajectory.csv", "w") as fh:
        fh.write("phi_ratio,freq_ghz,s21_abs\n")
        for i, phi in enumerate(flux):
            row = s21[i]
            for k in range(1, len(freq) - 1):
                if row[k] >= row[k - 1] and row[k] >= row[k + 1] and row[k] > 0.05:
                    fh.write(f"{phi:.10g},{freq[k]:.10g},{row[k]:.10g}\n")

    def plot():
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        im = ax.pcolormesh(flux, freq, s21.T, shading="auto", cmap="viridis")
        ax.set_xlabel(r"$\Phi/\Phi_0$")
        ax.set_ylabel("frequency (GHz)")
        fig.colorbar(im, label=r"$|S_{21}|$ (norm.)")
        fig.tight_layout()
        fig.savefig(run / "transmission.png", dpi=150)
        plt.close(fig)

    _maybe_plot(cfg, plot)


def _scenario_kerr(cfg, loaded, run, manifest):
    dev = loaded.device
    detunings = (cfg.kerr_detunings_ghz if cfg.kerr_detunings_ghz is not None
                 else np.array([1.201, -0.600]))
    nbar = cfg.nbar_grid if cfg.nbar_grid is not None else np.linspace(0.0, 30.0, 16)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    fits = {}
    for delta in detunings:
        fb = flux_for_detuning(dev, float(delta))
        spec = kerr_coefficients(dev, fb, n_q=loaded.n_q, n_c=loaded.n_c)
        freq = dressed_shift_vs_photons(spec, nbar)
        noisy = freq + rng.normal(0.0, 2e-8, nbar.size)  # ~20 Hz read noise
        fit = fit_kerr_slope(nbar, noisy)
        fits[float(delta)] = (spec, fit)
        for n, f_clean, f_noisy in zip(nbar, freq, noisy):
            rows.append((delta, n, f_clean, f_noisy))

    with open(run / "kerr_sweep.csv", "w") as fh:
        fh.write("detuning_ghz,nbar,freq_ghz,freq_noisy_ghz\n")
        for delta, n, f_clean, f_noisy in rows:
            fh.write(f"{delta:.10g},{n:.10g},{f_clean:.10g},{f_noisy:.10g}\n")
    for delta, (spec, fit) in fits.items():
        tag = f"{delta:+.3f}".replace(".", "p")
        write_fit_report(
            run / f"kerr_fit_{tag}.txt", "kerr-slope",
            {"alpha_c_khz": fit.alpha_c_khz, "intercept_ghz": fit.intercept_ghz},
            {"alpha_c_khz": fit.alpha_c_stderr_khz},
            extra={"detuning_ghz": spec.detuning, "chi_mhz": spec.chi,
                   **spec.metadata()})

    def plot():
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for delta, (spec, fit) in fits.items():
            line = dressed_shift_vs_photons(spec, nbar)
            ax.plot(nbar, (line - line[0]) * 1e6,
                    label=f"$\\Delta$ = {delta:+.3f} GHz")
        ax.set_xlabel(r"$\bar{n}$")
        ax.set_ylabel("cavity shift (kHz)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(run / "kerr_sweep.png", dpi=150)
        plt.close(fig)

    _maybe_plot(cfg, plot)


def _scenario_resurgence(cfg, loaded, run, manifest):
    dev = loaded.device
    tau_d = (cfg.tau_d_grid_us if cfg.tau_d_grid_us is not None
             else np.linspace(0.5, 12.0, 14))
    model = tune_recovery_to_timescale(
        4.8, PumpRecoveryModel(kappa=dev.cavity.kappa))
    rng = np.random.default_rng(cfg.seed)

    t_ctrl = np.linspace(0.0, 400.0, 51)  # qubit control-pulse length, ns
    rabi_f = 0.010  # GHz
    amps_true = model.amplitude(tau_d)
    amps_fit = []
    with open(run / "rabi_traces.csv", "w") as fh:
        fh.write("tau_d_us,t_ctrl_ns,v_h\n")
        for td, amp in zip(tau_d, amps_true):
            series = (0.5 + 0.5 * amp * np.cos(_2PI * rabi_f * t_ctrl)
                      * np.exp(-t_ctrl / 2000.0))
            series = series + rng.normal(0.0, 0.01, series.size)
            for tc, v in zip(t_ctrl, series):
                fh.write(f"{td:.10g},{tc:.10g},{v:.10g}\n")
            fit = fit_rabi(t_ctrl, series)
            amps_fit.append(2.0 * fit.amplitude)  # V_H swing -> amplitude
    amps_fit = np.asarray(amps_fit)
    res = fit_resurgence(tau_d, amps_fit)

    with open(run / "resurgence.csv", "w") as fh:
        fh.write("tau_d_us,amplitude_model,amplitude_fitted\n")
        for td, am, af in zip(tau_d, amps_true, amps_fit):
            fh.write(f"{td:.10g},{am:.10g},{af:.10g}\n")
    write_fit_report(run / "resurgence_fit.txt", "resurgence",
                     {"f_max": res.f_max, "t0_us": res.t0, "tau_us": res.tau,
                      "t0_plus_tau_us": res.timescale},
                     extra={"exponent_sign": "decaying",
                            "model_t_unconfined_us": model.t_unconfined,
                            "model_dephasing_s": model.dephasing_s,
                            "model_n_d": model.n_d})

    def plot():
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(tau_d, amps_true, "k--", label="model")
        ax.plot(tau_d, amps_fit, "o", label="fitted Rabi amplitude")
        tt = np.linspace(tau_d[0], tau_d[-1], 200)
        ax.plot(tt, res.f_max * np.clip(1 - np.exp(-(tt - res.t0) / res.tau),
                                        0, None),
                label=f"fit: $t_0+\\tau$ = {res.timescale:.2f} $\\mu$s")
        ax.set_xlabel(r"$\tau_d$ ($\mu$s)")
        ax.set_ylabel("Rabi amplitude (norm.)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(run / "resurgence.png", dpi=150)
        plt.close(fig)

    _maybe_plot(cfg, plot)


def _scenario_chevron(cfg, loaded, run, manifest):
    dev = loaded.device
    det_mhz = (cfg.detuning_grid_mhz if cfg.detuning_grid_mhz is not None
               else np.linspace(-200.0, 200.0, 9))
    taus = (cfg.tau_int_grid_ns if cfg.tau_int_grid_ns is not None
            else np.linspace(0.0, 40.0, 41))
    filt = (LineFilter(cfg.filter_f3db, cfg.filter_order)
            if cfg.filter_f3db else None)
    t0 = time.perf_counter()
    result = simulate_chevron(dev, det_mhz * 1e-3, taus, line_filter=filt,
                              tol=cfg.tol)
    manifest.timings_s["chevron"] = round(time.perf_counter() - t0, 3)
    write_chevron_csv(run / "chevron.csv", result)
    meta = dict(result.params)
    meta["seed"] = cfg.seed
    (run / "chevron_meta.json").write_text(json.dumps(meta, indent=2,
                                                      sort_keys=True))

    def plot():
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        im = ax.pcolormesh(taus, det_mhz, result.p_excited, shading="auto",
                           cmap="RdBu_r", vmin=0, vmax=1)
        ax.set_xlabel(r"$\tau_{int}$ (ns)")
        ax.set_ylabel(r"$\Delta/2\pi$ (MHz)")
        fig.colorbar(im, label=r"$P_e$")
        fig.tight_layout()
        fig.savefig(run / "chevron.png", dpi=150)
        plt.close(fig)

    _maybe_plot(cfg, plot)


def _scenario_calibrate(cfg, loaded, run, manifest):
    dev = loaded.device
    spec = kerr_coefficients(dev, FluxBias(0.0), n_q=loaded.n_q,
                             n_c=loaded.n_c)
    fb_res = flux_for_detuning(dev, 0.0)
    t0 = time.perf_counter()
    space = HilbertSpace(min(loaded.n_q, 3), 3)
    lookup = FluxLookup(dev.transmon, space.n_q)
    pi_amp = calibrate_pi_pulse(dev, space, DEFAULT_CONTROL, lookup=lookup)
    manifest.timings_s["pi_pulse"] = round(time.perf_counter() - t0, 3)

    report = {
        "ej_max_ghz": dev.transmon.ej_max,
        "ec_ghz": dev.transmon.ec,
        "omega_q_dressed_ghz": spec.omega_q,
        "omega_c_dressed_ghz": spec.omega_c_dressed,
        "alpha_q_mhz": spec.alpha_q,
        "alpha_c_khz": spec.alpha_c,
        "chi_mhz": spec.chi,
        "detuning_ghz": spec.detuning,
        "resonance_flux_phi0": fb_res.phi_ratio,
        "pi_pulse_amplitude_ghz": pi_amp,
    }
    write_fit_report(run / "calibrate.txt", "device-calibration", report,
                     extra=spec.metadata())
