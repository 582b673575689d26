"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: input/configuration problems -> 3,
store corruption -> 4, validation failures -> 2.
"""


class PrevkitError(Exception):
    """Base class for all package errors."""


class ConfigError(PrevkitError):
    """Invalid or inconsistent grid configuration."""


class GridError(ConfigError):
    """A value (location, cohort, age, binary level) is off the configured grid."""


class UnknownDiseaseError(GridError):
    """Disease identifier not present in the panel."""


class UnknownLocationError(GridError):
    """Location or region identifier not present in the grid."""


class EmptySubgroupError(PrevkitError):
    """Conditioning selects no cell with positive weight."""


class StratificationError(PrevkitError):
    """Stratification request exceeds the five-curve display cap."""


class StoreFormatError(PrevkitError):
    """Particle-store container is corrupt, truncated or incompatible."""


class ValidationFailure(PrevkitError):
    """Coverage or oracle check outside its accepted range."""
