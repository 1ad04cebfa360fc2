"""Exception and warning types shared across the package."""


class CqedsimError(Exception):
    """Base class for all package errors."""


class ConfigError(CqedsimError):
    """Invalid device or scenario configuration (exit code 1)."""


class NumericError(CqedsimError):
    """Base class for numerical/model failures (exit code 2)."""


class CutoffError(NumericError):
    """Charge-basis cutoff too small for the requested levels."""


class LabelingAmbiguityError(NumericError):
    """Dressed state cannot be assigned to a bare product state.

    Raised when the best overlap of a requested dressed state with any
    bare state is below the labeling threshold (near-degenerate
    crossing); the caller must refine the flux grid or avoid the
    crossing region.
    """


class ConvergenceError(NumericError):
    """Iterative calibration or fit did not converge within budget."""

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class UnreachableDetuningError(NumericError):
    """Requested qubit detuning is outside the flux-tunable range."""


class SamplingError(NumericError):
    """Waveform sample step too coarse for the requested filter."""


class StepFailureError(NumericError):
    """ODE error control could not meet tolerance at the minimum step."""


class PositivityError(NumericError):
    """Density matrix developed a negative eigenvalue beyond tolerance."""


class DegenerateNormalizationError(NumericError):
    """Readout normalization integral is below the noise floor."""


class InconsistentSignError(NumericError):
    """Measured shift direction contradicts the sign of chi."""


class ClampBindingWarning(UserWarning):
    """Pre-compensation clamp truncated the ideal inverse waveform."""


class NonlinearityWarning(UserWarning):
    """Linear fit residual exceeds the noise estimate (data past the
    linear regime)."""


class IllPosedFitWarning(UserWarning):
    """Fit data does not constrain all parameters."""


class DispersiveRegimeWarning(UserWarning):
    """Operating point is outside the dispersive regime |Delta| > 3g."""
