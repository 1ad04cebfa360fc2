"""cqedsim: pulse-level simulation and calibration of a flux-tunable
transmon dispersively coupled to a 3D microwave cavity."""

__version__ = "0.1.0"

from .config import load_device, table1_device, table1_device_path, validate_config
from .device import (
    CavityParams,
    CouplingParams,
    DeviceModel,
    DissipationParams,
    FluxBias,
    TransmonParams,
)
from .dynamics import (
    ChevronResult,
    DensityMatrix,
    FluxLookup,
    HilbertSpace,
    Operator,
    Trajectory,
    basis_density,
    build_hamiltonian,
    calibrate_pi_pulse,
    evolve,
    simulate_chevron,
)
from .pulses import (
    FluxPulse,
    GaussEdgeRect,
    LineFilter,
    PulseSequence,
    apply_line_filter,
    build_swap_sequence,
    precompensate,
    sample_envelope,
)
from .spectral import (
    DerivedSpectrum,
    DressedLadder,
    calibrate_from_observables,
    charge_dispersion,
    confined_state_count,
    coupled_spectrum,
    dressed_shift_vs_photons,
    ej_of_flux,
    flux_for_detuning,
    flux_for_qubit_frequency,
    kerr_coefficients,
    transmission_sweep,
    transmon_spectrum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
