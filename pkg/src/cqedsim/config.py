"""Device configuration files: parsing, validation, and the Table-1 fixture.

The format is plain text, one ``key = value`` pair per line, ``#``
comments allowed.  The transmon is specified either directly
(``ej_max_ghz`` + ``ec_ghz``) or through its observables (``f01_ghz`` +
``alpha_q_mhz``), in which case E_J and E_C are derived by
calibrate_from_observables.  Mixing the two routes is rejected as
over-determined.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .device import (
    CavityParams,
    CouplingParams,
    DeviceModel,
    DissipationParams,
    TransmonParams,
)
from .errors import ConfigError, ConvergenceError
from .spectral import DEFAULT_N_Q, calibrate_from_observables

_FLOAT_KEYS = {
    "ej_max_ghz", "ec_ghz", "f01_ghz", "alpha_q_mhz", "asym", "ng",
    "omega_c_ghz", "kappa_mhz", "g_mhz", "t1_us", "gamma_phi_mhz",
}
_INT_KEYS = {"n_cut", "n_q", "n_c"}
_KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS

_DEFAULTS = {
    "ng": 0.0,
    "gamma_phi_mhz": 0.0,
    "n_cut": 30,
    "n_q": DEFAULT_N_Q,
    "n_c": 6,
}


@dataclass
class ValidationReport:
    """Full-file validation result; errors carry the offending field."""

    path: str
    ok: bool = True
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    resolved: dict = field(default_factory=dict)

    def add_error(self, msg: str) -> None:
        self.ok = False
        self.errors.append(msg)

    def render(self) -> str:
        lines = [f"config: {self.path}",
                 f"status: {'valid' if self.ok else 'INVALID'}"]
        for e in self.errors:
            lines.append(f"error: {e}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        if self.resolved:
            lines.append("resolved parameters:")
            for k in sorted(self.resolved):
                lines.append(f"  {k} = {self.resolved[k]}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LoadedDevice:
    """A validated DeviceModel plus the non-physical truncation overrides."""

    device: DeviceModel
    n_q: int
    n_c: int
    report: ValidationReport


def _parse_lines(text: str, report: ValidationReport) -> dict:
    values: dict = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            report.add_error(
                f"line {lineno}, col {col}: expected 'key = value', got {line.strip()!r}")
            continue
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        value_str = value_part.strip()
        value_col = line.index("=") + 2 + (len(value_part) - len(value_part.lstrip()))
        if key not in _KNOWN_KEYS:
            report.add_error(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            report.add_error(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = int(value_str) if key in _INT_KEYS else float(value_str)
        except ValueError:
            report.add_error(
                f"line {lineno}, col {value_col}: cannot parse value "
                f"{value_str!r} for {key!r}")
    return values


def validate_config(path) -> ValidationReport:
    """Validate a device file, listing every violation (no fail-fast)."""
    report = ValidationReport(path=str(path))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        report.add_error(f"cannot read file: {exc}")
        return report

    values = _parse_lines(text, report)

    direct = {"ej_max_ghz", "ec_ghz"} & values.keys()
    observed = {"f01_ghz", "alpha_q_mhz"} & values.keys()
    if direct and observed:
        report.add_error(
            "over-determined transmon: give either ej_max_ghz+ec_ghz or "
            f"f01_ghz+alpha_q_mhz, not both (found {sorted(direct | observed)})")
    elif direct:
        missing = {"ej_max_ghz", "ec_ghz"} - direct
        if missing:
            report.add_error(f"missing key {missing.pop()!r} "
                             "(required with the direct parameterization)")
    elif observed:
        missing = {"f01_ghz", "alpha_q_mhz"} - observed
        if missing:
            report.add_error(f"missing key {missing.pop()!r} "
                             "(required with the observable parameterization)")
    else:
        report.add_error(
            "transmon unspecified: need ej_max_ghz+ec_ghz or f01_ghz+alpha_q_mhz")

    for key in ("asym", "omega_c_ghz", "kappa_mhz", "g_mhz", "t1_us"):
        if key not in values:
            report.add_error(f"missing required key {key!r}")

    resolved = dict(_DEFAULTS)
    resolved.update(values)

    bounds = {
        "ej_max_ghz": (lambda v: v > 0, "must be > 0"),
        "ec_ghz": (lambda v: v > 0, "must be > 0"),
        "f01_ghz": (lambda v: v > 0, "must be > 0"),
        "alpha_q_mhz": (lambda v: v < 0, "must be < 0"),
        "asym": (lambda v: 0.0 <= v <= 1.0, "must be within [0, 1]"),
        "omega_c_ghz": (lambda v: v > 0, "must be > 0"),
        "kappa_mhz": (lambda v: v > 0, "must be > 0"),
        "g_mhz": (lambda v: v >= 0, "must be >= 0"),
        "t1_us": (lambda v: v > 0, "must be > 0"),
        "gamma_phi_mhz": (lambda v: v >= 0, "must be >= 0"),
        "n_cut": (lambda v: v >= 10, "must be >= 10"),
        "n_q": (lambda v: v >= 3, "must be >= 3"),
        "n_c": (lambda v: v >= 3, "must be >= 3"),
    }
    for key, (check, why) in bounds.items():
        if key in resolved and not check(resolved[key]):
            report.add_error(f"field {key!r} {why}")

    if report.ok and observed:
        try:
            ej, ec = calibrate_from_observables(
                resolved["f01_ghz"], resolved["alpha_q_mhz"],
                n_cut=resolved["n_cut"])
            resolved["ej_max_ghz"] = round(ej, 9)
            resolved["ec_ghz"] = round(ec, 9)
        except (ConvergenceError, ValueError) as exc:
            report.add_error(f"calibration from f01/alpha_q failed: {exc}")

    report.resolved = resolved
    return report


def load_device(path) -> LoadedDevice:
    """Load and validate a device file; raises ConfigError when invalid."""
    report = validate_config(path)
    if not report.ok:
        raise ConfigError(
            f"invalid device file {path}:\n" + "\n".join(report.errors))
    r = report.resolved
    transmon = TransmonParams(ej_max=r["ej_max_ghz"], ec=r["ec_ghz"],
                              asym=r["asym"], ng=r["ng"], n_cut=r["n_cut"])
    cavity = CavityParams(omega_bare=r["omega_c_ghz"], kappa=r["kappa_mhz"],
                          n_cav_cut=r["n_c"])
    coupling = CouplingParams(g=r["g_mhz"])
    dissipation = DissipationParams(t1_q=r["t1_us"], kappa=r["kappa_mhz"],
                                    gamma_phi=r["gamma_phi_mhz"])
    device = DeviceModel(transmon=transmon, cavity=cavity,
                         coupling=coupling, dissipation=dissipation)
    return LoadedDevice(device=device, n_q=r["n_q"], n_c=r["n_c"],
                        report=report)


def table1_device_path() -> Path:
    """Path of the shipped reference device file (Table 1 of the source
    experiment: f01 = 7.203 GHz, alpha_q = -225 MHz, omega_c0 = 6.002 GHz,
    kappa = 1.38 MHz, g = 87 MHz, T1 = 2.11 us, asym inferred from the
    4 GHz minimum qubit frequency)."""
    with resources.as_file(
            resources.files("cqedsim.data").joinpath("table1.device")) as p:
        return Path(p)


def table1_device() -> LoadedDevice:
    """Load the shipped Table-1 reference device."""
    return load_device(table1_device_path())
