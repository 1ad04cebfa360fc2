"""Time-dependent open-system evolution of the coupled transmon-cavity model.

The simulation frame rotates at the bare cavity frequency for both modes,
removing the ~6 GHz carrier so nanosecond steps resolve the dynamics;
populations and swap rates are frame-invariant.  Flux pulses enter through
a precomputed transmon-spectrum lookup (cubic interpolation over 2001 flux
points); the master equation is integrated with an adaptive embedded
Runge-Kutta (DOP853) on the vectorized density matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .device import DeviceModel, FluxBias, TransmonParams
from .errors import ConvergenceError, PositivityError, StepFailureError
from .pulses import (
    FLUX_DT_NS,
    GaussEdgeRect,
    LineFilter,
    PulseSequence,
    apply_line_filter,
    build_swap_sequence,
    precompensate,
    sample_flux_waveform,
)
from .spectral import coupled_hamiltonian_matrix, coupled_spectrum

MAX_DIM = 256

# integrator step caps (ns): caps prevent the adaptive solver from
# stepping over short features; accuracy itself is owned by the error
# control.  0.2 ns is a fifth of the shortest flux-edge sigma (measured
# indistinguishable from a 0.05 ns cap at tol 1e-7, 2-4x faster).
EDGE_MAX_STEP = 0.2
CONTROL_MAX_STEP = 0.1
COAST_MAX_STEP = 10.0

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated product space: n_q transmon levels x n_c Fock states."""

    n_q: int
    n_c: int

    def __post_init__(self) -> None:
        if self.n_q < 2 or self.n_c < 2:
            raise ValueError("need n_q >= 2 and n_c >= 2")
        if self.n_q * self.n_c > MAX_DIM:
            raise ValueError(f"dimension {self.n_q * self.n_c} exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        return self.n_q * self.n_c

    def index(self, j: int, n: int) -> int:
        return j * self.n_c + n


@dataclass(frozen=True)
class Operator:
    """Dense operator on a HilbertSpace with a role tag.

    Hamiltonian-tagged operators are checked hermitian at construction.
    """

    matrix: np.ndarray
    role: str = "custom"

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        if self.role == "hamiltonian":
            scale = max(np.max(np.abs(m)), 1.0)
            if np.max(np.abs(m - m.conj().T)) > 1e-12 * scale:
                raise ValueError("hamiltonian operator is not hermitian")

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, role=self.role)

    def expectation(self, rho: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ rho)))


def cavity_annihilation(space: HilbertSpace) -> Operator:
    a = np.diag(np.sqrt(np.arange(1.0, space.n_c)), 1)
    return Operator(np.kron(np.eye(space.n_q), a).astype(complex), role="a")


def transmon_lowering(space: HilbertSpace) -> Operator:
    b = np.diag(np.sqrt(np.arange(1.0, space.n_q)), 1)
    return Operator(np.kron(b, np.eye(space.n_c)).astype(complex), role="b")


def transmon_number(space: HilbertSpace) -> Operator:
    num = np.diag(np.arange(float(space.n_q)))
    return Operator(np.kron(num, np.eye(space.n_c)).astype(complex),
                    role="number")


def cavity_number(space: HilbertSpace) -> Operator:
    num = np.diag(np.arange(float(space.n_c)))
    return Operator(np.kron(np.eye(space.n_q), num).astype(complex),
                    role="number")


def level_projector(space: HilbertSpace, j: int) -> Operator:
    """Projector onto transmon level j (any photon number)."""
    p = np.zeros((space.n_q, space.n_q))
    p[j, j] = 1.0
    return Operator(np.kron(p, np.eye(space.n_c)).astype(complex),
                    role="number")


def dressed_excited_projector(dev: DeviceModel, space: HilbertSpace,
                              flux: FluxBias,
                              lookup: "FluxLookup | None" = None) -> Operator:
    """Projector onto the dressed eigenstate connected to bare |e, 0>.

    Frame-safe: the state lives in one excitation sector, so the
    cavity-frame rotation only contributes a global phase.
    """
    h = build_hamiltonian(dev, space, flux, frame="lab", lookup=lookup)
    _, v = np.linalg.eigh(h.matrix)
    idx = space.index(1, 0)
    k = int(np.argmax(np.abs(v[idx, :]) ** 2))
    vec = v[:, k]
    return Operator(np.outer(vec, vec.conj()), role="custom")


@dataclass
class DensityMatrix:
    """Dense density matrix with a time stamp (ns)."""

    matrix: np.ndarray
    time_ns: float = 0.0

    def check(self, trace_tol: float = 1e-8, herm_tol: float = 1e-10,
              pos_tol: float = 1e-8) -> None:
        m = self.matrix
        if abs(np.trace(m).real - 1.0) > trace_tol:
            raise ValueError(f"trace deviates: {np.trace(m).real - 1.0:.3e}")
        if np.max(np.abs(m - m.conj().T)) > herm_tol:
            raise ValueError("density matrix not hermitian")
        w = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        if w[0] < -pos_tol:
            raise ValueError(f"negative eigenvalue {w[0]:.3e}")


def basis_density(space: HilbertSpace, j: int, n: int) -> DensityMatrix:
    """|j, n><j, n| in the bare product basis."""
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    idx = space.index(j, n)
    rho[idx, idx] = 1.0
    return DensityMatrix(matrix=rho, time_ns=0.0)


class FluxLookup:
    """Cubic-interpolated transmon levels and charge matrix vs flux.

    Built once per (transmon, n_q) on 2001 points over the fundamental
    flux domain [0, 0.5]; evaluation folds the query flux by periodicity.
    Interpolation error is below 10 kHz (see audit()).
    """

    def __init__(self, transmon: TransmonParams, n_q: int,
                 n_points: int = 2001):
        from .spectral import transmon_levels_and_charge

        self.transmon = transmon
        self.n_q = n_q
        self._grid = np.linspace(0.0, 0.5, n_points)
        self._h = self._grid[1] - self._grid[0]
        cols = np.empty((n_points, n_q + n_q * n_q))
        # cutoff adequacy is checked once at the deepest well
        transmon_levels_and_charge(transmon, FluxBias(0.0), n_q)
        for i, phi in enumerate(self._grid):
            lv, nm = _levels_and_charge_unchecked(transmon, phi, n_q)
            cols[i, :n_q] = lv
            cols[i, n_q:] = nm.ravel()
        self._spline = CubicSpline(self._grid, cols, axis=0)
        # (4, n_intervals, n_cols) coefficient table for fast scalar eval
        self._coef = self._spline.c

    @staticmethod
    def _fold(phi: float) -> float:
        f = abs(phi) % 1.0
        return min(f, 1.0 - f)

    def _row(self, phi: float) -> np.ndarray:
        x = self._fold(phi)
        idx = min(int(x / self._h), len(self._grid) - 2)
        t = x - self._grid[idx]
        c = self._coef[:, idx, :]
        return ((c[0] * t + c[1]) * t + c[2]) * t + c[3]

    def levels_and_nmat(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        row = self._row(phi)
        n_q = self.n_q
        return row[:n_q], row[n_q:].reshape(n_q, n_q)

    def f01(self, phi: float) -> float:
        return float(self._row(phi)[1])

    def audit(self, n_samples: int = 50) -> float:
        """Worst level interpolation error (GHz) on a random-free grid."""
        # offset by half a grid step so probes fall between knots
        half = 0.5 * (self._grid[1] - self._grid[0])
        probes = np.linspace(0.003, 0.497 - 2 * half, n_samples) + half
        worst = 0.0
        for phi in probes:
            lv_true, _ = _levels_and_charge_unchecked(self.transmon, phi,
                                                      self.n_q)
            lv_int, _ = self.levels_and_nmat(phi)
            worst = max(worst, float(np.max(np.abs(lv_true - lv_int))))
        return worst


def _levels_and_charge_unchecked(p: TransmonParams, phi: float, n_q: int):
    """Single diagonalization without the +5 cutoff audit (lookup builds)."""
    from scipy.linalg import eigh_tridiagonal

    from .spectral import ej_of_flux

    ej = ej_of_flux(p, FluxBias(phi))
    n = np.arange(-p.n_cut, p.n_cut + 1)
    diag = 4.0 * p.ec * (n - p.ng) ** 2
    off = np.full(2 * p.n_cut, -ej / 2.0)
    w, v = eigh_tridiagonal(diag, off)
    vv = v[:, :n_q]
    nmat = vv.T @ (n[:, None] * vv)
    signs = np.ones(n_q)
    for j in range(n_q - 1):
        if signs[j] * nmat[j, j + 1] * signs[j + 1] < 0:
            signs[j + 1] *= -1.0
    nmat = nmat * np.outer(signs, signs)
    return w[:n_q] - w[0], nmat


def build_hamiltonian(dev: DeviceModel, space: HilbertSpace,
                      flux_now: FluxBias, frame: str = "lab",
                      lookup: FluxLookup | None = None) -> Operator:
    """Coupled Hamiltonian H/h in GHz at a fixed flux.

    frame='lab' gives transmon diagonal + omega_c a'a + Jaynes-Cummings
    coupling (ground state referenced to 0); frame='rotating' subtracts
    the bare cavity frequency times the total excitation number, the
    frame used by evolve().
    """
    if frame not in ("lab", "rotating"):
        raise ValueError("frame must be 'lab' or 'rotating'")
    if lookup is not None:
        levels, nmat = lookup.levels_and_nmat(flux_now.phi_ratio)
    else:
        from .spectral import transmon_levels_and_charge

        levels, nmat = transmon_levels_and_charge(dev.transmon, flux_now,
                                                  space.n_q)
    h = coupled_hamiltonian_matrix(levels, nmat, dev.cavity.omega_bare,
                                   dev.coupling.g, space.n_c,
                                   rotating=(frame == "rotating"))
    return Operator(h.astype(complex), role="hamiltonian")


def collapse_operators(dev: DeviceModel, space: HilbertSpace) -> list[np.ndarray]:
    """Rate-scaled Lindblad operators (units 1/sqrt(ns)).

    kappa and gamma_phi are /2pi values in MHz, so the decay rates carry
    a 2*pi; T1 is a plain exponential time constant.
    """
    ops = []
    kappa_rate = _TWO_PI * dev.dissipation.kappa * 1e-3
    ops.append(np.sqrt(kappa_rate) * cavity_annihilation(space).matrix)
    t1_ns = dev.dissipation.t1_q * 1e3
    ops.append(np.sqrt(1.0 / t1_ns) * transmon_lowering(space).matrix)
    if dev.dissipation.gamma_phi > 0:
        gphi_rate = _TWO_PI * dev.dissipation.gamma_phi * 1e-3
        bdag_b = transmon_number(space).matrix
        ops.append(np.sqrt(2.0 * gphi_rate) * bdag_b)
    return ops


@dataclass
class Trajectory:
    """Observable expectation values on a reported time grid."""

    times: np.ndarray
    expectations: dict
    diagnostics: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)

    def final(self, name: str) -> float:
        return float(self.expectations[name][-1])


class _FluxChannel:
    """phi(t) for a sequence: analytic envelopes or a filtered spline."""

    def __init__(self, seq: PulseSequence | None, baseline: FluxBias):
        self.baseline = baseline.phi_ratio
        self.segments = list(seq.by_role("flux")) if seq is not None else []
        self.spline = None
        self.t_hi = np.inf
        self.end_value = self.baseline

    def __call__(self, t: float) -> float:
        if self.spline is not None:
            if t >= self.t_hi:
                return float(self.end_value)
            return float(self.spline(t))
        phi = self.baseline
        for seg in self.segments:
            local = t - seg.start_ns
            if 0.0 <= local <= seg.pulse.total_length:
                phi += (seg.pulse.envelope(local)
                        - seg.pulse.baseline.phi_ratio)
        return phi



def _drive_terms(seq: PulseSequence | None, dev: DeviceModel):
    """(envelope_fn, relative carrier GHz, phase, start, end) per control."""
    if seq is None:
        return []
    terms = []
    for seg in seq.by_role("control"):
        pulse = seg.pulse
        delta = pulse.carrier_freq - dev.cavity.omega_bare
        terms.append((pulse, delta, pulse.phase, seg.start_ns,
                      seg.start_ns + pulse.length_total))
    return terms


def evolve(rho0: DensityMatrix, sequence: PulseSequence | None,
           dev: DeviceModel, space: HilbertSpace, observables: dict,
           tol: float = 1e-8, t_grid=None,
           line_filter: LineFilter | None = None,
           lookup: FluxLookup | None = None,
           baseline_flux: FluxBias = FluxBias(0.0),
           t_span: tuple[float, float] | None = None,
           lossless: bool = False,
           store_checkpoints: bool = False,
           precompensated: bool = False,
           flux_dt_ns: float = FLUX_DT_NS) -> Trajectory:
    """Integrate the Lindblad master equation over a pulse sequence.

    drho/dt = -i[H(t), rho] + sum_k D[L_k] rho with collapse channels
    {sqrt(kappa) a, sqrt(1/T1) b, sqrt(2 gamma_phi) b'b}.  H(t) follows the
    sequence's flux waveform (filtered through ``line_filter`` when given;
    pre-distorted first when ``precompensated``) and control drives
    eps(t) (b + b') at their carriers.  Local error is controlled at
    ``tol``; trace/hermiticity/minimum-eigenvalue diagnostics are recorded
    on the reported grid and a positivity violation beyond 1e-6 aborts.
    """
    if not 1e-10 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-10, 1e-4]")
    dim = space.dim
    if rho0.matrix.shape != (dim, dim):
        raise ValueError("rho0 dimension mismatch")

    if t_span is None:
        t_end = sequence.end_time() if sequence is not None else 100.0
        t_span = (0.0, t_end)
    t0, t1 = t_span
    if t_grid is None:
        t_grid = np.linspace(t0, t1, 201)
    t_grid = np.asarray(t_grid, dtype=float)

    if lookup is None:
        lookup = FluxLookup(dev.transmon, space.n_q)

    flux = _build_flux_channel(sequence, baseline_flux, line_filter, t1,
                               precompensated, flux_dt_ns)
    drives = _drive_terms(sequence, dev)

    # precomputed operator basis: H(t) is a coefficient vector against
    # these fixed matrices, so the hot path avoids np.kron entirely
    n_q, n_c = space.n_q, space.n_c
    a = np.diag(np.sqrt(np.arange(1.0, n_c)), 1)
    ic = np.eye(n_c)
    omega_c = dev.cavity.omega_bare
    g_ghz = dev.coupling.g * 1e-3
    pairs = [(j, k) for j in range(n_q) for k in range(j + 1, n_q)]
    basis = np.empty((n_q + len(pairs), dim, dim))
    for j in range(n_q):
        pj = np.zeros((n_q, n_q))
        pj[j, j] = 1.0
        basis[j] = np.kron(pj, ic)
    hop_raise = []  # transmon j->k (k>j) with photon annihilation
    for p, (j, k) in enumerate(pairs):
        ejk = np.zeros((n_q, n_q))
        ejk[j, k] = 1.0
        basis[n_q + p] = np.kron(ejk, a.T) + np.kron(ejk.T, a)
        hop_raise.append(np.kron(ejk.T, ic))
    omega_offsets = omega_c * np.arange(n_q)
    coeffs = np.zeros(n_q + len(pairs))

    c_ops = [] if lossless else collapse_operators(dev, space)
    c_pairs = [(L, L.conj().T @ L) for L in c_ops]

    def static_part_at(t: float) -> np.ndarray:
        """Flux-dependent H without drive terms (shares ``coeffs``)."""
        row = lookup._row(flux(t))
        lv = row[:n_q]
        nm = row[n_q:]
        coeffs[:n_q] = lv - omega_offsets
        if g_ghz != 0.0:
            scale = g_ghz / nm[1]
            for p, (j, k) in enumerate(pairs):
                coeffs[n_q + p] = scale * nm[j * n_q + k]
        return np.tensordot(coeffs, basis, axes=1)

    def drive_matrix_at(t: float) -> np.ndarray:
        """Charge-normalized raising operator at the current flux."""
        row = lookup._row(flux(t))
        nm = row[n_q:]
        d = np.zeros((dim, dim))
        inv_n01 = 1.0 / nm[1]
        for p, (j, k) in enumerate(pairs):
            d += (nm[j * n_q + k] * inv_n01) * hop_raise[p]
        return d

    def make_rhs(h_const, h_static, drive_mats):
        """RHS closure: constant H, or flat flux + drives, or fully general."""
        def apply_drives(t: float, h: np.ndarray,
                         mats) -> np.ndarray:
            for pulse, delta, phase, ts, te, d in mats:
                if ts <= t <= te:
                    eps = pulse.envelope(t - ts)
                    if eps != 0.0:
                        hd = (eps * np.exp(-1j * (_TWO_PI * delta * t + phase))) * d
                        h = h + hd + hd.conj().T
            return h

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            rho = y.reshape(dim, dim)
            if h_const is not None:
                h = h_const
            elif h_static is not None:
                h = apply_drives(t, h_static, drive_mats)
            else:
                h = static_part_at(t)
                if drive_mats:
                    h = apply_drives(t, h, [(p, dl, ph, ts, te, drive_matrix_at(t))
                                            for p, dl, ph, ts, te, _ in drive_mats])
            drho = (-1j * _TWO_PI) * (h @ rho - rho @ h)
            for L, LdL in c_pairs:
                drho += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
            return drho.ravel()
        return rhs

    breakpoints = _integration_windows(sequence, drives, t0, t1, line_filter)
    times_out: list[float] = []
    expect_out: dict = {name: [] for name in observables}
    diag = {"trace_dev": [], "herm_dev": [], "min_eig": []}
    checkpoints = []

    obs_mats = {name: (op.matrix if isinstance(op, Operator) else np.asarray(op))
                for name, op in observables.items()}

    def record(t: float, rho_raw: np.ndarray) -> None:
        """Diagnostics are taken on the raw integrator state."""
        times_out.append(t)
        herm = (rho_raw + rho_raw.conj().T) / 2.0
        for name, mat in obs_mats.items():
            expect_out[name].append(float(np.real(np.trace(mat @ herm))))
        tr_dev = abs(np.trace(rho_raw).real - 1.0)
        herm_dev = float(np.max(np.abs(rho_raw - rho_raw.conj().T)))
        w_min = float(np.linalg.eigvalsh(herm)[0])
        diag["trace_dev"].append(tr_dev)
        diag["herm_dev"].append(herm_dev)
        diag["min_eig"].append(w_min)
        if w_min < -1e-6:
            raise PositivityError(
                f"rho eigenvalue {w_min:.3e} at t = {t:.3f} ns "
                f"(trace dev {tr_dev:.3e}); reduce tol or enlarge the space")
        if store_checkpoints:
            checkpoints.append((t, herm))

    y = rho0.matrix.astype(complex).ravel().copy()
    grid_sorted = np.sort(t_grid)
    if grid_sorted[0] <= t0 + 1e-12:
        record(t0, y.reshape(dim, dim))
        pending = grid_sorted[grid_sorted > t0 + 1e-12]
    else:
        pending = grid_sorted

    for (seg_t0, seg_t1, max_step) in breakpoints:
        inside = pending[(pending > seg_t0 + 1e-12) & (pending <= seg_t1 + 1e-12)]
        t_eval = list(inside)
        if not t_eval or t_eval[-1] < seg_t1 - 1e-12:
            t_eval.append(seg_t1)
        # specialize the RHS: freeze H where the flux is flat, and
        # precompute the drive operator when only the envelope varies
        mid = 0.5 * (seg_t0 + seg_t1)
        active = [d for d in drives if d[4] > seg_t0 and d[3] < seg_t1]
        h_const = h_static = None
        drive_mats = []
        if flux.spline is None:
            vals = (flux(seg_t0), flux(mid), flux(seg_t1))
            if max(vals) - min(vals) < 1e-15:
                if active:
                    h_static = static_part_at(mid)
                    d_mat = drive_matrix_at(mid)
                    drive_mats = [(p, dl, ph, ts, te, d_mat)
                                  for p, dl, ph, ts, te in active]
                else:
                    h_const = static_part_at(mid)
        if h_const is None and h_static is None:
            drive_mats = [(p, dl, ph, ts, te, None)
                          for p, dl, ph, ts, te in active]
        sol = solve_ivp(make_rhs(h_const, h_static, drive_mats),
                        (seg_t0, seg_t1), y, method="DOP853",
                        rtol=tol, atol=tol * 1e-2,
                        max_step=max_step, t_eval=np.asarray(t_eval))
        if not sol.success:
            raise StepFailureError(
                f"integrator failed on [{seg_t0:.3f}, {seg_t1:.3f}] ns: "
                f"{sol.message}")
        ys = sol.y.T
        for tr, yr in zip(sol.t, ys):
            if any(abs(tr - p) < 1e-9 for p in inside):
                record(tr, yr.reshape(dim, dim))
        # re-hermitize between intervals: removes 1e-15-scale drift
        rho_now = ys[-1].reshape(dim, dim)
        y = ((rho_now + rho_now.conj().T) / 2.0).ravel()
        pending = pending[pending > seg_t1 + 1e-12]

    if pending.size or (times_out and times_out[-1] < t1 - 1e-9) or not times_out:
        record(t1, y.reshape(dim, dim))

    return Trajectory(times=np.array(times_out),
                      expectations={k: np.array(v) for k, v in expect_out.items()},
                      diagnostics={k: np.array(v) for k, v in diag.items()},
                      checkpoints=checkpoints)


def _build_flux_channel(sequence, baseline_flux, line_filter, t_end,
                        precompensated, flux_dt_ns=FLUX_DT_NS):
    channel = _FluxChannel(sequence, baseline_flux)
    if line_filter is None or not channel.segments:
        return channel
    t, phi = sample_flux_waveform(sequence, flux_dt_ns, t_end=t_end,
                                  baseline=baseline_flux)
    if precompensated:
        clamp = max(1.0, 3.0 * np.max(np.abs(phi)))
        phi = precompensate(phi, line_filter, flux_dt_ns, clamp).waveform
    filtered = apply_line_filter(phi, line_filter, flux_dt_ns)
    channel.spline = CubicSpline(t, filtered)
    channel.end_value = filtered[-1]
    channel.t_hi = t[-1]
    return channel


def _integration_windows(sequence, drives, t0, t1, line_filter):
    """Split [t0, t1] into intervals with per-interval max-step caps."""
    edges = {t0, t1}
    fine: list[tuple[float, float, float]] = []
    if sequence is not None:
        for seg in sequence.by_role("flux"):
            p = seg.pulse
            rise0 = seg.start_ns
            rise1 = rise0 + p.edge_length
            fall0 = rise1 + p.plateau_length
            fall1 = fall0 + p.edge_length
            stretch = 5.0 * line_filter.tau_ns() if line_filter else 0.0
            fine.append((rise0, rise1 + stretch, EDGE_MAX_STEP))
            fine.append((fall0, fall1 + stretch, EDGE_MAX_STEP))
    for _, _, _, ts, te in drives:
        fine.append((ts, te, CONTROL_MAX_STEP))
    for a, b, _ in fine:
        edges.add(min(max(a, t0), t1))
        edges.add(min(max(b, t0), t1))
    cut = sorted(edges)
    windows = []
    for a, b in zip(cut[:-1], cut[1:]):
        if b - a < 1e-12:
            continue
        step = COAST_MAX_STEP
        mid = 0.5 * (a + b)
        for fa, fb, fs in fine:
            if fa - 1e-12 <= mid <= fb + 1e-12:
                step = min(step, fs)
        windows.append((a, b, step))
    return windows


def calibrate_pi_pulse(dev: DeviceModel, space: HilbertSpace,
                       shape: GaussEdgeRect,
                       lookup: FluxLookup | None = None,
                       target: float = 0.995, tol: float = 1e-8,
                       baseline_flux: FluxBias = FluxBias(0.0)) -> float:
    """Drive amplitude (GHz) bringing |g,0> to P_e >= target, lossless run.

    The carrier is the dressed qubit frequency at the baseline flux; the
    two-level area theorem seeds the amplitude and a bracketing bisection
    on the population maximum refines it.  Raises ConvergenceError with
    the best achievable population when level-2 leakage prevents the
    target.
    """
    if lookup is None:
        lookup = FluxLookup(dev.transmon, space.n_q)
    ladder = coupled_spectrum(dev, baseline_flux,
                              n_q=max(3, space.n_q), n_c=max(3, space.n_c))
    carrier = ladder.energy(1, 0) - ladder.energy(0, 0)

    tgrid = np.arange(0.0, shape.length_total + 0.05, 0.2)
    unit = GaussEdgeRect(shape.length_total, shape.edge_length,
                         shape.edge_sigma, amplitude=1.0)
    area_unit = float(np.trapezoid(unit.envelope(tgrid), tgrid))
    seed = 0.25 / area_unit  # two-level area theorem: integral eps dt = 1/4

    rho0 = basis_density(space, 0, 0)
    # the pulse targets the dressed excited state (what dispersive readout
    # distinguishes); the bare level-1 projector saturates at 1 - (g/Delta)^2
    p_e = dressed_excited_projector(dev, space, baseline_flux, lookup)

    def population(amp: float) -> float:
        pulse = GaussEdgeRect(shape.length_total, shape.edge_length,
                              shape.edge_sigma, amplitude=amp,
                              carrier_freq=carrier, phase=shape.phase)
        seq = _control_only_sequence(pulse)
        traj = evolve(rho0, seq, dev, space, {"p_e": p_e}, tol=tol,
                      t_grid=[shape.length_total], lookup=lookup,
                      baseline_flux=baseline_flux, lossless=True)
        return traj.final("p_e")

    # scan around the area-theorem seed and refine the population maximum
    # with the parabola through the best three points (P(A) is smooth and
    # concave near the first Rabi maximum)
    scan = seed * np.array([0.90, 0.95, 1.00, 1.05, 1.10])
    pops = np.array([population(a) for a in scan])
    k = int(np.argmax(pops))
    k = min(max(k, 1), len(scan) - 2)
    coeffs = np.polyfit(scan[k - 1:k + 2], pops[k - 1:k + 2], 2)
    best_amp = float(np.clip(-coeffs[1] / (2.0 * coeffs[0]),
                             scan[0], scan[-1]))
    achieved = population(best_amp)
    if achieved < pops[k]:
        best_amp, achieved = float(scan[k]), float(pops[k])
    if achieved < target:
        raise ConvergenceError(
            f"pi-pulse calibration reached P_e = {achieved:.5f} < {target} "
            "(level-2 leakage); best amplitude attached",
            residual=target - achieved, best=best_amp)
    return float(best_amp)


def _control_only_sequence(pulse: GaussEdgeRect) -> PulseSequence:
    from .pulses import Segment

    return PulseSequence(segments=(Segment("control", 0.0, pulse),),
                         tau_d=0.0, tau_int=0.0)


@dataclass(frozen=True)
class ChevronResult:
    """Excited-state population over the (detuning, interaction-time) grid."""

    detunings_ghz: np.ndarray
    tau_int_ns: np.ndarray
    p_excited: np.ndarray  # shape (n_detuning, n_tau)
    params: dict


def simulate_chevron(dev: DeviceModel, detuning_grid, tau_int_grid,
                     line_filter: LineFilter | None = None,
                     tau_d: float = 0.0,
                     space: HilbertSpace | None = None,
                     tol: float = 1e-7,
                     init: str = "direct",
                     lookup: FluxLookup | None = None,
                     precompensated: bool = False) -> ChevronResult:
    """Swap chevron: qubit excited population vs (detuning, tau_int).

    For each grid point a swap sequence is built and evolved; the
    population is recorded at the measurement window start.  init='direct'
    starts from |e,0> at the flux-pulse start (isolating the swap
    physics); init='pulse' simulates the calibrated pi-pulse too.  Grid
    points are independent (safe to parallelize externally).
    """
    detunings = np.asarray(detuning_grid, dtype=float)
    taus = np.asarray(tau_int_grid, dtype=float)
    if detunings.size > 1 and not np.all(np.diff(detunings) != 0):
        raise ValueError("detuning grid must not repeat points")
    if taus.size > 1 and not np.all(np.diff(taus) > 0):
        raise ValueError("tau_int grid must be increasing")
    if space is None:
        space = HilbertSpace(3, 5)
    if lookup is None:
        lookup = FluxLookup(dev.transmon, space.n_q)

    p_e_op = level_projector(space, 1)
    amp = carrier = None
    if init == "pulse":
        from .pulses import DEFAULT_CONTROL

        amp = calibrate_pi_pulse(dev, space, DEFAULT_CONTROL, lookup=lookup,
                                 tol=max(tol, 1e-8))
        carrier = _dressed_qubit_freq(dev, lookup, space)

    out = np.zeros((detunings.size, taus.size))
    for i, delta in enumerate(detunings):
        for k, tau in enumerate(taus):
            seq = build_swap_sequence(dev, delta, tau, tau_d=tau_d,
                                      with_pump=False)
            flux_seg = seq.by_role("flux")[0]
            measure_t = seq.by_role("measure")[0].start_ns
            if init == "direct":
                rho0 = basis_density(space, 1, 0)
                span = (flux_seg.start_ns, measure_t)
            else:
                from .pulses import Segment

                ctrl = seq.by_role("control")[0]
                cal_pulse = GaussEdgeRect(
                    ctrl.pulse.length_total, ctrl.pulse.edge_length,
                    ctrl.pulse.edge_sigma, amplitude=amp,
                    carrier_freq=carrier)
                segs = tuple(Segment(s.role, s.start_ns,
                                     cal_pulse if s.role == "control" else s.pulse)
                             for s in seq.segments)
                seq = PulseSequence(segs, seq.tau_d, seq.tau_int)
                rho0 = basis_density(space, 0, 0)
                span = (0.0, measure_t)
            traj = evolve(rho0, seq, dev, space, {"p_e": p_e_op}, tol=tol,
                          t_grid=[span[1]], line_filter=line_filter,
                          lookup=lookup, t_span=span,
                          precompensated=precompensated)
            out[i, k] = traj.final("p_e")
    params = {
        "space": (space.n_q, space.n_c),
        "tol": tol,
        "init": init,
        "tau_d_ns": tau_d,
        "filter_f3db_mhz": line_filter.f3db if line_filter else None,
        "filter_order": line_filter.order if line_filter else None,
        "precompensated": precompensated,
        "device_hash": dev.content_hash(),
    }
    return ChevronResult(detunings_ghz=detunings, tau_int_ns=taus,
                         p_excited=out, params=params)


def _dressed_qubit_freq(dev: DeviceModel, lookup: FluxLookup,
                        space: HilbertSpace) -> float:
    ladder = coupled_spectrum(dev, FluxBias(0.0), n_q=max(3, space.n_q),
                              n_c=max(3, space.n_c))
    return ladder.energy(1, 0) - ladder.energy(0, 0)


def save_state_txt(path, matrix: np.ndarray) -> None:
    """Complex matrix export: row-major lines of re,im pairs."""
    with open(path, "w") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(f"{z.real:.17g},{z.imag:.17g}" for z in row))
            fh.write("\n")


def load_state_txt(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            vals = [float(x) for x in line.strip().split(",") if x]
            rows.append([complex(vals[i], vals[i + 1])
                         for i in range(0, len(vals), 2)])
    return np.array(rows, dtype=complex)


def write_chevron_csv(path, result: ChevronResult) -> None:
    """CSV export: detuning_ghz,tau_int_ns,p_excited."""
    with open(path, "w") as fh:
        fh.write("detuning_ghz,tau_int_ns,p_excited\n")
        for i, d in enumerate(result.detunings_ghz):
            for k, tau in enumerate(result.tau_int_ns):
                fh.write(f"{d:.10g},{tau:.10g},{result.p_excited[i, k]:.10g}\n")
