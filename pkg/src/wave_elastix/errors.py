"""Exception hierarchy shared by all modules.

Every error carries a CLI exit code so the command-line layer can map
failures to documented, machine-parsable codes.
"""


class WaveElastixError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 5


class ValidationError(WaveElastixError):
    """Invalid parameters or violated preconditions."""

    exit_code = 3


class InvalidMaterialError(ValidationError):
    pass


class ConstitutiveSingularityError(InvalidMaterialError):
    """Poisson ratio at or beyond 0.5: plane-strain constitutive matrix singular."""


class InvalidGeometryError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    """Wavenumber or axis value outside its admissible interval."""


class ConfigurationError(ValidationError):
    pass


class ContractError(ValidationError):
    """An inter-module contract was violated (shape mismatch, missing normalization)."""


class ShapeError(ContractError):
    pass


class ComputationError(WaveElastixError):
    exit_code = 5


class EigensolverError(ComputationError):
    pass


class InstabilityError(ComputationError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ResamplingError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class InsufficientTextureError(ComputationError):
    pass


class InsufficientSamplesError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class ContainerFormatError(WaveElastixError):
    """Malformed .dfz/.dgz container or frame directory."""

    exit_code = 4


class EmptyRasterWarning(UserWarning):
    """Dispersion curves fall entirely outside the raster axes."""


class AliasingWarning(UserWarning):
    """Frame-to-frame phase step at the wrap boundary; motion may be aliased."""


class DegenerateLandscapeWarning(UserWarning):
    """All landscape cells scored equal; the estimate is not informative."""
