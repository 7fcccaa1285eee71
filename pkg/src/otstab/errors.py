"""Exception types shared across the package."""


class OtStabError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(OtStabError):
    """Degenerate rectangle or grid too coarse."""


class DuplicatePointError(OtStabError):
    """Two source locations coincide (within matching tolerance)."""


class OriginDegeneracyError(OtStabError):
    """A point sits at the coordinate origin, so the growth vector r*s vanishes."""


class MarginError(OtStabError):
    """A source atom lies too close to the domain boundary."""


class IllPosednessError(OtStabError):
    """Reaction coefficient q drops below the positivity floor."""


class ImbalanceError(OtStabError):
    """Mass vectors of the two measures do not balance."""


class OracleSizeError(OtStabError):
    """Brute-force enumeration requested for a support that is too large."""


class AliasingError(OtStabError):
    """Too few time samples for the requested band limit."""


class InfeasibleSpecError(OtStabError):
    """Rejection sampling exhausted its budget without an admissible draw."""


class AmbiguousMatchingError(OtStabError):
    """Location matching tolerance exceeds half the separation distance."""


class AdmissibilityError(OtStabError):
    """A measure violates one of the admissibility hypotheses."""


class RhoTooSmallError(OtStabError):
    """Fixed-point iteration for the oscillatory correction failed to contract."""


class IllConditionedError(OtStabError):
    """Interpolation matrix is numerically singular at the requested growth rate."""


class OutOfBandError(OtStabError):
    """Fourier mode index exceeds the band limit."""


class ConfigError(OtStabError):
    """Experiment configuration is missing fields or inconsistent."""


class WeakControllabilityWarning(UserWarning):
    """Control solver stopped before reaching the terminal tolerance."""
