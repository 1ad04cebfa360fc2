"""Static device description: transmon, SQUID, cavity, coupling, dissipation.

All frequencies are linear (already divided by 2*pi): transmon and cavity
energies in GHz, linewidths and coupling in MHz, relaxation times in
microseconds.  Instances are frozen dataclasses; every operation in the
package is a pure function of them, so they are safe to share across
threads and sweep workers.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

from .errors import ConfigError


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class TransmonParams:
    """SQUID transmon in the charge basis.

    ej_max : maximum Josephson energy E_J0/h in GHz (both junctions).
    ec     : charging energy E_C/h in GHz.
    asym   : junction asymmetry d in [0, 1]; E_J(0.5) = d * ej_max.
    ng     : offset charge in Cooper pairs.
    n_cut  : charge-basis cutoff; basis dimension is 2*n_cut + 1.
    """

    ej_max: float
    ec: float
    asym: float = 0.0
    ng: float = 0.0
    n_cut: int = 30

    def __post_init__(self) -> None:
        _require(self.ej_max > 0, f"ej_max must be > 0, got {self.ej_max}")
        _require(self.ec > 0, f"ec must be > 0, got {self.ec}")
        _require(0.0 <= self.asym <= 1.0,
                 f"asym must be in [0, 1], got {self.asym}")
        _require(math.isfinite(self.ng), "ng must be finite")
        _require(self.n_cut >= 10, f"n_cut must be >= 10, got {self.n_cut}")

    @property
    def dim(self) -> int:
        return 2 * self.n_cut + 1


@dataclass(frozen=True)
class FluxBias:
    """Reduced flux Phi/Phi_0 threading the SQUID loop.

    All spectral outputs are periodic in phi_ratio with period 1 and even
    under phi_ratio -> -phi_ratio.
    """

    phi_ratio: float = 0.0

    def __post_init__(self) -> None:
        _require(math.isfinite(self.phi_ratio), "phi_ratio must be finite")

    def folded(self) -> float:
        """Map into the fundamental domain [0, 0.5] using periodicity."""
        f = abs(self.phi_ratio) % 1.0
        return min(f, 1.0 - f)


@dataclass(frozen=True)
class CavityParams:
    """Bare 3D cavity mode.

    omega_bare : bare frequency omega_c0/2pi in GHz.
    kappa      : total linewidth kappa/2pi in MHz.
    n_cav_cut  : Fock-space truncation for spectral work.
    """

    omega_bare: float
    kappa: float
    n_cav_cut: int = 6

    def __post_init__(self) -> None:
        _require(self.omega_bare > 0, "omega_bare must be > 0")
        _require(self.kappa > 0, "kappa must be > 0")
        _require(self.n_cav_cut >= 2, "n_cav_cut must be >= 2")


@dataclass(frozen=True)
class CouplingParams:
    """Transmon-cavity coupling g/2pi in MHz.

    g is the Jaynes-Cummings coupling of the 0<->1 transition; g = 0 is
    allowed so the decoupled limit stays testable.
    """

    g: float

    def __post_init__(self) -> None:
        _require(self.g >= 0, f"g must be >= 0, got {self.g}")


@dataclass(frozen=True)
class DissipationParams:
    """Open-system rates.

    t1_q      : qubit relaxation time T1 in microseconds.
    kappa     : cavity linewidth kappa/2pi in MHz (mirrors CavityParams).
    gamma_phi : pure dephasing rate gamma_phi/2pi in MHz (default 0; the
                source device has no quoted T2).
    """

    t1_q: float
    kappa: float
    gamma_phi: float = 0.0

    def __post_init__(self) -> None:
        _require(self.t1_q > 0, "t1_q must be > 0")
        _require(self.kappa > 0, "kappa must be > 0")
        _require(self.gamma_phi >= 0, "gamma_phi must be >= 0")


@dataclass(frozen=True)
class DeviceModel:
    """Full static description of the coupled device."""

    transmon: TransmonParams
    cavity: CavityParams
    coupling: CouplingParams
    dissipation: DissipationParams

    def __post_init__(self) -> None:
        if abs(self.dissipation.kappa - self.cavity.kappa) > 1e-12:
            raise ConfigError(
                "dissipation.kappa must mirror cavity.kappa "
                f"({self.dissipation.kappa} != {self.cavity.kappa})")
        if self.coupling.g * 1e-3 > 0.1 * self.cavity.omega_bare:
            warnings.warn(
                f"g/omega_c = {self.coupling.g * 1e-3 / self.cavity.omega_bare:.3f} "
                "> 0.1: outside the weak-coupling regime this model assumes",
                UserWarning, stacklevel=2)

    def content_hash(self) -> str:
        """Stable hash of all parameters, used in run metadata."""
        text = repr(self).encode()
        return hashlib.sha256(text).hexdigest()[:16]
