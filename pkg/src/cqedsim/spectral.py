"""Static spectral engine for the flux-tunable transmon-cavity system.

Charge-basis diagonalization of the transmon, the dressed spectrum of the
coupled multilevel Jaynes-Cummings model, dispersive/Kerr coefficients,
and the linear-response cavity transmission.  Everything here is a pure
function of immutable inputs; flux and frequency sweeps are
embarrassingly parallel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal
from scipy.optimize import brentq, linear_sum_assignment

from .device import DeviceModel, FluxBias, TransmonParams
from .errors import (
    ConvergenceError,
    CutoffError,
    DispersiveRegimeWarning,
    LabelingAmbiguityError,
    UnreachableDetuningError,
)

# Cutoff check: requested levels must be stable at this tolerance (GHz)
# when the charge basis is enlarged by 5 states.
_CUTOFF_TOL_GHZ = 1e-6

# A dressed state is considered unambiguously labeled when its squared
# overlap with the best bare product state is at least this large.
_LABEL_OVERLAP_MIN = 0.6

# Default truncations for coupled-spectrum work; converged for
# Table-1-scale devices (see the truncation-convergence tests).
DEFAULT_N_Q = 5
DEFAULT_N_C = 6


def ej_of_flux(p: TransmonParams, f: FluxBias) -> float:
    """Effective Josephson energy E_J(Phi)/h in GHz of the asymmetric SQUID.

    E_J(Phi) = E_J0 * sqrt(cos^2(pi*phi) + d^2 sin^2(pi*phi)); periodic in
    phi with period 1, maximum E_J0 at phi = 0 and minimum d*E_J0 at
    phi = 0.5.
    """
    x = np.pi * f.phi_ratio
    return float(p.ej_max * np.hypot(np.cos(x), p.asym * np.sin(x)))


def _charge_diagonals(p: TransmonParams, ej: float):
    """Tridiagonal representation of H = 4 E_C (n - ng)^2 - E_J cos(phi)."""
    n = np.arange(-p.n_cut, p.n_cut + 1)
    diag = 4.0 * p.ec * (n - p.ng) ** 2
    off = np.full(2 * p.n_cut, -ej / 2.0)
    return diag, off


def _eigvals(p: TransmonParams, ej: float, n_cut: int) -> np.ndarray:
    n = np.arange(-n_cut, n_cut + 1)
    diag = 4.0 * p.ec * (n - p.ng) ** 2
    off = np.full(2 * n_cut, -ej / 2.0)
    return eigvalsh_tridiagonal(diag, off)


def _check_cutoff(p: TransmonParams, ej: float, n_levels: int) -> np.ndarray:
    """Eigenvalues at the configured cutoff, verified stable against +5."""
    w = _eigvals(p, ej, p.n_cut)
    w_big = _eigvals(p, ej, p.n_cut + 5)
    shift = np.max(np.abs(w[:n_levels] - w_big[:n_levels]))
    if shift > _CUTOFF_TOL_GHZ:
        raise CutoffError(
            f"level {n_levels - 1} shifts by {shift * 1e6:.3g} kHz when "
            f"n_cut grows from {p.n_cut} to {p.n_cut + 5}; increase n_cut")
    return w


def transmon_spectrum(p: TransmonParams, f: FluxBias, n_levels: int = 6,
                      raw: bool = False) -> np.ndarray:
    """Lowest transmon eigenenergies in GHz, sorted ascending.

    By default energies are referenced to the ground state (E0 = 0), so
    f01 = E1 and the anharmonicity is E2 - 2*E1.  With ``raw=True`` the
    absolute eigenvalues of 4E_C(n - ng)^2 - E_J cos(phi) are returned
    (potential minimum at -E_J), as needed for well-depth counting.

    Raises CutoffError when the requested levels are not converged in the
    charge-basis cutoff.
    """
    if n_levels > p.dim:
        raise ValueError(f"n_levels={n_levels} exceeds basis dimension {p.dim}")
    ej = ej_of_flux(p, f)
    w = _check_cutoff(p, ej, n_levels)
    w = w[:n_levels]
    return w if raw else w - w[0]


def transmon_levels_and_charge(p: TransmonParams, f: FluxBias,
                               n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Ground-referenced levels and the charge operator in the eigenbasis.

    The eigenvector gauge is fixed so nearest-neighbor charge matrix
    elements n[j, j+1] are positive, which keeps the elements continuous
    along flux sweeps.
    """
    ej = ej_of_flux(p, f)
    _check_cutoff(p, ej, n_levels)
    diag, off = _charge_diagonals(p, ej)
    w, v = eigh_tridiagonal(diag, off)
    n_charge = np.arange(-p.n_cut, p.n_cut + 1)
    vv = v[:, :n_levels]
    signs = np.ones(n_levels)
    nmat = vv.T @ (n_charge[:, None] * vv)
    for j in range(n_levels - 1):
        if signs[j] * nmat[j, j + 1] * signs[j + 1] < 0:
            signs[j + 1] *= -1.0
    nmat = nmat * np.outer(signs, signs)
    return w[:n_levels] - w[0], nmat


def calibrate_from_observables(f01: float, alpha_q: float,
                               n_cut: int = 30,
                               max_iter: int = 80) -> tuple[float, float]:
    """Invert the transmon spectrum: (f01 GHz, alpha_q MHz) -> (E_J, E_C).

    E_C is fixed by the transmon identification E_C = -alpha_q and E_J is
    root-found so the exact charge-basis diagonalization reproduces f01
    to machine precision.  The seed E_J = (f01 - alpha)^2 / (-8 alpha) is
    the asymptotic inversion; the refinement moves it by a fraction of a
    percent.  Note the exact anharmonicity of the returned parameters
    exceeds alpha_q in magnitude by the usual beyond-leading-order
    transmon correction (about 8% at E_J/E_C ~ 140).

    Raises ConvergenceError when the f01 residual stays above 0.1%.
    """
    if f01 <= 0:
        raise ValueError("f01 must be positive")
    if alpha_q >= 0:
        raise ValueError("alpha_q must be negative for a transmon")
    alpha_ghz = alpha_q * 1e-3
    if abs(alpha_ghz) >= f01:
        raise ValueError("|alpha_q| must be below f01")

    ec = -alpha_ghz
    ej_seed = (f01 - alpha_ghz) ** 2 / (-8.0 * alpha_ghz)

    def f01_residual(ej: float) -> float:
        p = TransmonParams(ej_max=ej, ec=ec, n_cut=n_cut)
        return transmon_spectrum(p, FluxBias(0.0), n_levels=2)[1] - f01

    lo, hi = 0.5 * ej_seed, 2.0 * ej_seed
    try:
        ej = brentq(f01_residual, lo, hi, xtol=1e-12, maxiter=max_iter)
    except ValueError as exc:
        raise ConvergenceError(
            f"could not bracket E_J in [{lo:.3g}, {hi:.3g}] GHz",
            residual=f01_residual(ej_seed)) from exc

    resid = abs(f01_residual(ej)) / f01
    if resid > 1e-3:
        raise ConvergenceError(
            f"f01 residual {resid:.3e} above 0.1% after refinement",
            residual=resid, best=(ej, ec))
    return float(ej), float(ec)


def confined_state_count(p: TransmonParams, f: FluxBias) -> int:
    """Number of transmon levels inside the cosine well.

    Counts eigenlevels of 4E_C(n - ng)^2 - E_J cos(phi) whose energy lies
    below the potential maximum +E_J (the minimum is -E_J).
    """
    ej = ej_of_flux(p, f)
    w = _eigvals(p, ej, p.n_cut)
    count = int(np.sum(w < ej))
    # states near the well top must themselves be cutoff-converged
    _check_cutoff(p, ej, max(count, 1))
    return count


def charge_dispersion(p: TransmonParams, f: FluxBias, level: int) -> float:
    """Charge dispersion |E_level(ng=0.5) - E_level(ng=0)| in MHz.

    Uses absolute eigenenergies (not ground-referenced), so the ground
    level itself carries its exponentially small dispersion.
    """
    ej = ej_of_flux(p, f)
    w0 = _eigvals(TransmonParams(p.ej_max, p.ec, p.asym, 0.0, p.n_cut), ej,
                  p.n_cut)
    w5 = _eigvals(TransmonParams(p.ej_max, p.ec, p.asym, 0.5, p.n_cut), ej,
                  p.n_cut)
    _check_cutoff(p, ej, level + 1)
    return float(abs(w5[level] - w0[level]) * 1e3)


def coupled_hamiltonian_matrix(levels: np.ndarray, nmat: np.ndarray,
                               omega_c: float, g_mhz: float, n_c: int,
                               rotating: bool = False) -> np.ndarray:
    """Multilevel Jaynes-Cummings Hamiltonian in GHz.

    H = diag(E_j) (x) 1 + 1 (x) omega_c a'a
        + g * [ (n_lower / n01) (x) a' + h.c. ]

    where n_lower is the transmon-lowering part of the charge operator in
    the transmon eigenbasis, rescaled so its 0<->1 element equals the
    configured g at this flux.  Co-rotating terms only: the bare-cavity
    rotating frame (``rotating=True``) subtracts omega_c times the total
    excitation number, which commutes with this coupling.
    """
    n_q = len(levels)
    a = np.diag(np.sqrt(np.arange(1.0, n_c)), 1)  # cavity annihilation
    num_c = np.diag(np.arange(float(n_c)))
    iq = np.eye(n_q)
    ic = np.eye(n_c)

    h = np.kron(np.diag(levels), ic) + omega_c * np.kron(iq, num_c)
    g_ghz = g_mhz * 1e-3
    if g_ghz != 0.0:
        n_lower = np.triu(nmat, 1) / nmat[0, 1]  # maps level k -> j < k
        h = h + g_ghz * (np.kron(n_lower, a.T) + np.kron(n_lower.T, a))
    if rotating:
        n_tot = np.kron(np.diag(np.arange(float(n_q))), ic) + np.kron(iq, num_c)
        h = h - omega_c * n_tot
    return h


@dataclass(frozen=True)
class DressedLadder:
    """Dressed eigenenergies labeled by their bare product states.

    energies are ground-referenced GHz, sorted ascending. ``assignment``
    maps a bare label (transmon level, photon number) to the dressed
    eigenindex; ``overlaps`` holds the squared overlap supporting each
    assignment.
    """

    energies: np.ndarray
    assignment: dict
    overlaps: dict
    n_q: int
    n_c: int

    def energy(self, j: int, n: int) -> float:
        """Dressed energy of the state adiabatically connected to |j, n>."""
        key = (j, n)
        if key not in self.assignment:
            raise LabelingAmbiguityError(
                f"bare state |{j},{n}> has no dressed partner with overlap "
                f">= {_LABEL_OVERLAP_MIN} (best: {self.overlaps.get(key, 0.0):.3f}); "
                "refine the flux grid away from the crossing")
        return float(self.energies[self.assignment[key]])

    def transition(self, lo: tuple[int, int], hi: tuple[int, int]) -> float:
        return self.energy(*hi) - self.energy(*lo)


def coupled_spectrum(dev: DeviceModel, f: FluxBias,
                     n_q: int = DEFAULT_N_Q,
                     n_c: int = DEFAULT_N_C) -> DressedLadder:
    """Diagonalize the coupled model and label dressed states by overlap.

    Labels follow maximum squared overlap with the bare product basis
    (transmon eigenbasis at this flux tensor Fock states).  Bare states
    whose best partner has overlap below 0.6 are left unassigned; reading
    them raises LabelingAmbiguityError.
    """
    if n_q < 3 or n_c < 3:
        raise ValueError("truncations must satisfy n_q >= 3, n_c >= 3")
    levels, nmat = transmon_levels_and_charge(dev.transmon, f, n_q)
    h = coupled_hamiltonian_matrix(levels, nmat, dev.cavity.omega_bare,
                                   dev.coupling.g, n_c)
    w, v = np.linalg.eigh(h)
    w = w - w[0]

    # pops[b, d]: weight of bare product state b in dressed eigvec d
    pops = np.abs(v) ** 2
    bare_idx, dressed_idx = linear_sum_assignment(-pops)
    assignment: dict = {}
    overlaps: dict = {}
    for b, d in zip(bare_idx, dressed_idx):
        j, n = divmod(int(b), n_c)
        overlaps[(j, n)] = float(pops[b, d])
        if pops[b, d] >= _LABEL_OVERLAP_MIN:
            assignment[(j, n)] = int(d)
    return DressedLadder(energies=w, assignment=assignment,
                         overlaps=overlaps, n_q=n_q, n_c=n_c)


@dataclass(frozen=True)
class DerivedSpectrum:
    """Dressed frequencies and nonlinear coefficients of the coupled model.

    omega_q         : dressed qubit frequency in GHz.
    omega_c_dressed : ground-state dressed cavity frequency in GHz.
    alpha_q         : transmon anharmonicity in MHz (negative).
    alpha_c         : cavity self-Kerr in kHz, stored as the coefficient
                      of the photon-shift law
                          omega_c(nbar) = omega_c(0) - 2*alpha_c*nbar,
                      so alpha_c > 0 means the resonance shifts down with
                      photon number.
    chi             : dispersive shift in MHz,
                      [E(e,1)-E(e,0)] - [E(g,1)-E(g,0)].
    detuning        : omega_q - omega_c_dressed in GHz.
    """

    omega_q: float
    omega_c_dressed: float
    alpha_q: float
    alpha_c: float
    chi: float
    detuning: float

    def metadata(self) -> dict:
        """Sign bookkeeping for reports (the source experiment quotes the
        self-Kerr with the opposite sign to the shift-law coefficient)."""
        return {
            "alpha_c_convention": "omega_c(nbar) = omega_c(0) - 2*alpha_c*nbar",
            "alpha_c_khz": self.alpha_c,
            "alpha_c_magnitude_khz": abs(self.alpha_c),
            "alpha_c_shift_direction": "down" if self.alpha_c > 0 else "up",
            "alpha_c_hamiltonian_sign": -1.0 if self.alpha_c > 0 else 1.0,
        }


def kerr_coefficients(dev: DeviceModel, f: FluxBias,
                      n_q: int = DEFAULT_N_Q,
                      n_c: int = DEFAULT_N_C) -> DerivedSpectrum:
    """Dispersive and Kerr coefficients from the dressed ladder.

    chi is the per-excitation cavity pull.  The self-Kerr field is half
    the (negated) ladder curvature -[E(g,2) - 2E(g,1) + E(g,0)]/2 so that
    it is exactly the coefficient of the stated photon-shift law (the
    per-photon slope of the dressed resonance is the curvature itself).
    Warns outside the dispersive regime |Delta| > 3g and propagates
    labeling errors near the crossing.
    """
    f01 = transmon_spectrum(dev.transmon, f, n_levels=2)[1]
    if abs(f01 - dev.cavity.omega_bare) < 3.0 * dev.coupling.g * 1e-3:
        warnings.warn(
            f"|Delta| = {abs(f01 - dev.cavity.omega_bare):.4f} GHz < 3g: "
            "outside the dispersive regime, Kerr coefficients are unreliable",
            DispersiveRegimeWarning, stacklevel=2)
    ladder = coupled_spectrum(dev, f, n_q, n_c)
    e_g0 = ladder.energy(0, 0)
    e_g1 = ladder.energy(0, 1)
    e_g2 = ladder.energy(0, 2)
    e_e0 = ladder.energy(1, 0)
    e_e1 = ladder.energy(1, 1)

    omega_c_dressed = e_g1 - e_g0
    omega_q = e_e0 - e_g0
    chi_ghz = (e_e1 - e_e0) - (e_g1 - e_g0)
    curvature = e_g2 - 2.0 * e_g1 + e_g0
    alpha_c_khz = -0.5 * curvature * 1e6

    levels = transmon_spectrum(dev.transmon, f, n_levels=3)
    alpha_q_mhz = (levels[2] - 2.0 * levels[1]) * 1e3

    detuning = omega_q - omega_c_dressed
    return DerivedSpectrum(
        omega_q=float(omega_q),
        omega_c_dressed=float(omega_c_dressed),
        alpha_q=float(alpha_q_mhz),
        alpha_c=float(alpha_c_khz),
        chi=float(chi_ghz * 1e3),
        detuning=float(detuning),
    )


def dressed_shift_vs_photons(spec: DerivedSpectrum,
                             nbar_grid) -> np.ndarray:
    """Dressed cavity frequency vs mean photon number (GHz).

    Linear law omega_c(nbar) = omega_c(0) - 2*alpha_c*nbar, the low-power
    slope of the measured power sweep.
    """
    nbar = np.asarray(nbar_grid, dtype=float)
    if np.any(nbar < 0):
        raise ValueError("nbar must be >= 0")
    return spec.omega_c_dressed - 2.0 * spec.alpha_c * 1e-6 * nbar


def transmission_sweep(dev: DeviceModel, flux_grid, freq_grid,
                       n_q: int = DEFAULT_N_Q,
                       n_c: int = DEFAULT_N_C) -> np.ndarray:
    """|S21| transmission matrix, row-major [flux][freq].

    Each row is a sum of Lorentzians of FWHM kappa centered on the
    transitions from the dressed ground state, weighted by their photonic
    matrix element |<k| a' |0>|^2, normalized to unit peak.  In the
    dispersive regime a row is a single unit-peak Lorentzian at the
    ground-state dressed cavity frequency; near the crossing both
    branches appear with the avoided-crossing splitting 2g.
    """
    flux = np.asarray(flux_grid, dtype=float)
    freq = np.asarray(freq_grid, dtype=float)
    if flux.size == 0 or freq.size == 0:
        raise ValueError("grids must be non-empty")
    if flux.size > 1 and not (np.all(np.diff(flux) > 0) or np.all(np.diff(flux) < 0)):
        raise ValueError("flux grid must be monotone")
    if freq.size > 1 and not np.all(np.diff(freq) > 0):
        raise ValueError("freq grid must be increasing")

    kappa_ghz = dev.cavity.kappa * 1e-3
    a_dag = np.diag(np.sqrt(np.arange(1.0, n_c)), 1).T
    out = np.zeros((flux.size, freq.size))
    for i, phi in enumerate(flux):
        levels, nmat = transmon_levels_and_charge(dev.transmon,
                                                  FluxBias(phi), n_q)
        h = coupled_hamiltonian_matrix(levels, nmat, dev.cavity.omega_bare,
                                       dev.coupling.g, n_c)
        w, v = np.linalg.eigh(h)
        ground = v[:, 0]
        a_dag_full = np.kron(np.eye(n_q), a_dag)
        amps = v.T @ (a_dag_full @ ground)
        weights = np.abs(amps) ** 2
        centers = w - w[0]
        row = np.zeros(freq.size)
        for wk, ck in zip(weights, centers):
            if wk < 1e-12:
                continue
            row += wk / (1.0 + (2.0 * (freq - ck) / kappa_ghz) ** 2)
        peak = row.max()
        out[i] = row / peak if peak > 0 else row
    return out


def write_transmission_csv(path, flux_grid, freq_grid, s21: np.ndarray) -> None:
    """CSV export: header phi_ratio,freq_ghz,s21_abs, one row per point."""
    flux = np.asarray(flux_grid, dtype=float)
    freq = np.asarray(freq_grid, dtype=float)
    with open(path, "w") as fh:
        fh.write("phi_ratio,freq_ghz,s21_abs\n")
        for i, phi in enumerate(flux):
            for j, nu in enumerate(freq):
                fh.write(f"{phi:.10g},{nu:.10g},{s21[i, j]:.10g}\n")


def qubit_frequency_range(p: TransmonParams) -> tuple[float, float]:
    """(min, max) f01 over flux, attained at phi = 0.5 and phi = 0."""
    f_max = transmon_spectrum(p, FluxBias(0.0), n_levels=2)[1]
    f_min = transmon_spectrum(p, FluxBias(0.5), n_levels=2)[1]
    return float(f_min), float(f_max)


def flux_for_qubit_frequency(p: TransmonParams, f01_target: float) -> FluxBias:
    """Invert f01(Phi) on the principal branch phi in [0, 0.5].

    Raises UnreachableDetuningError when the target lies outside the
    tunable range set by ej_max and the junction asymmetry.
    """
    f_min, f_max = qubit_frequency_range(p)
    if not (f_min <= f01_target <= f_max):
        raise UnreachableDetuningError(
            f"target f01 = {f01_target:.4f} GHz outside tunable range "
            f"[{f_min:.4f}, {f_max:.4f}] GHz")

    def resid(phi: float) -> float:
        return transmon_spectrum(p, FluxBias(phi), n_levels=2)[1] - f01_target

    phi = brentq(resid, 0.0, 0.5, xtol=1e-13)
    return FluxBias(float(phi))


def flux_for_detuning(dev: DeviceModel, detuning_ghz: float) -> FluxBias:
    """Flux where f01(Phi) = omega_c_bare + detuning."""
    return flux_for_qubit_frequency(
        dev.transmon, dev.cavity.omega_bare + detuning_ghz)
