"""Exception types shared across the package."""


class HarnessError(Exception):
    """Base class for all package-specific errors."""


class AsymmetricKernel(HarnessError):
    """A kernel weight differs between an offset and its negation."""


class NonStochastic(HarnessError):
    """Kernel weights are not positive or do not sum to one."""


class SelfLoop(HarnessError):
    """A kernel carries weight on the zero offset."""


class RangeViolation(HarnessError):
    """A kernel offset reaches at or beyond the declared range."""


class DomainMismatch(HarnessError):
    """A height lookup fell outside the field's domain."""


class NoConvergence(HarnessError):
    """An iterative solver hit its sweep limit before meeting tolerance."""


class SizeLimit(HarnessError):
    """A dense computation was requested on a box above the size cap."""


class SiteOutsideBox(HarnessError):
    """A site expected inside a box lies outside it."""


class WalkCapExceeded(HarnessError):
    """A sampled walk exceeded the hard step cap without terminating."""


class AbsorptionOccurred(HarnessError):
    """Backward mass reached the box complement where none was allowed."""


class BoundViolated(HarnessError):
    """A computed weight exceeded its proven decay bound."""


class FactorizationFailure(HarnessError):
    """A covariance factorization failed; the input was not positive definite."""


class ConfigInvalid(HarnessError):
    """A run configuration failed validation."""


class CheckFailed(HarnessError):
    """A verification check did not pass."""
