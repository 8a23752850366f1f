class Error(Exception):
    """The base error for all gmix errors"""


class ConfigError(Error):
    """When an issue is found in a user-supplied experiment config"""


class DomainError(Error):
    """When an argument falls outside the documented domain of an operation"""


class SupportMismatchError(DomainError):
    """When two distributions are not defined on the same support"""


class CapacityError(Error):
    """When an exact enumeration or block coupling exceeds its capacity

    The ``origin`` attribute names the module that refused the work so the
    CLI can report where the limit was hit.
    """

    def __init__(self, message, origin=None):
        super().__init__(message)
        self.origin = origin


class PipelineError(Error):
    """When the renewal bound pipeline cannot provide a coupling guarantee"""


class PreconditionError(Error):
    """When the schedule exponent violates the conditions of the coupling bound"""


class SeminormError(Error):
    """When the potential seminorm of an observable is undefined"""


class DegenerateError(Error):
    """When a normalising scale estimate collapses to zero"""
