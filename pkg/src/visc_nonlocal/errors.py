"""Exception hierarchy shared by every module of the package."""


class ViscNonlocalError(Exception):
    """Base class for all package errors."""


class DivergentMoment(ViscNonlocalError):
    """A kernel moment failed the Cauchy criterion (kernel inadmissible)."""


class UnsupportedDimension(ViscNonlocalError):
    """Deterministic quadrature is only available for N <= 3."""


class NotSmooth(ViscNonlocalError):
    """A jet was requested from a function that does not carry one."""


class InvalidParameters(ViscNonlocalError, ValueError):
    pass


class OutOfDomain(ViscNonlocalError, ValueError):
    pass


class NoValidScale(ViscNonlocalError):
    """No dyadic scale passed the test-function scale search."""


class ExtensionFailure(ViscNonlocalError):
    """An exterior extension dipped below the candidate it must dominate."""


class JetRejected(ViscNonlocalError):
    """A jet certificate does not satisfy the sub/super jet inequality."""


class MaxViolated(ViscNonlocalError):
    """u - phi is not maximised (minimised) at the base point on samples."""


class PhiCertificateFailed(ViscNonlocalError):
    """(eps, delta) do not certify the test-function Taylor inequality."""


class ScenarioInvalid(ViscNonlocalError):
    pass
