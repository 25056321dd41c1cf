"""Exception hierarchy.

Callers that need an exit-code split can rely on the two branches:
:class:`InputDataError` covers file-format and corrupt-data failures,
everything else under :class:`PetQuantError` is a validation problem.
"""


class PetQuantError(Exception):
    """Base class for all errors raised by this package."""


class InputDataError(PetQuantError):
    """File or payload level problem (format, corruption, I/O)."""


class VolumeFormatError(InputDataError):
    """Malformed volume file header or unsupported layout."""


class VolumeDataError(InputDataError):
    """Voxel payload is unusable (non-finite values, size mismatch)."""


class GeometryMismatchError(PetQuantError):
    """Two grids that must share dims/spacing do not."""


class IntensityUnitError(PetQuantError):
    """Operation applied to a volume in the wrong intensity unit."""


class ParameterError(PetQuantError):
    """Argument outside its documented domain."""


class DegenerateInputError(PetQuantError):
    """Input is valid but statistically degenerate (constant, zero variance)."""


class EmptyRegionError(PetQuantError):
    """A non-empty mask/region was required."""


class ManifestError(PetQuantError):
    """Cohort manifest is missing entries or malformed."""


class LesionSpecError(ParameterError):
    """Phantom lesion specification cannot be realized on the grid."""
