"""Exception hierarchy shared across the package."""


class LibcatError(Exception):
    """Base class for all errors raised by this package."""


class IntegrityError(LibcatError):
    """A snapshot constraint was violated (dangling reference, duplicate id)."""


class IsbnError(LibcatError):
    """Base class for ISBN handling failures."""


class IsbnFormatError(IsbnError):
    """Input is not 10 or 13 characters of ISBN material."""


class IsbnChecksumError(IsbnError):
    """The stated check digit does not match the computed one."""


class IsbnConversionError(IsbnError):
    """A 13-digit form outside the 978 range cannot be shortened to 10."""


class WorkKeyError(LibcatError):
    """A record cannot produce a work key (empty or degenerate title)."""


class ParseError(LibcatError):
    """An input document could not be parsed at all."""


class DatasetError(LibcatError):
    """A persisted dataset file is malformed; message names the line."""


class QuotaExceededError(LibcatError):
    """The daily consultation budget is spent; no request was issued."""


class QuotaStateError(LibcatError):
    """The persisted quota state file is unreadable or corrupt."""


class TransportError(LibcatError):
    """The remote catalog could not be reached or answered abnormally."""


class UnknownTargetError(LibcatError):
    """A record, cluster member, or unit id does not resolve in the snapshot."""


class NoClassError(LibcatError):
    """The record carries no classification heading."""


class UndefinedRateError(LibcatError):
    """A ratio indicator has a zero or empty denominator."""


class AuthorNotFoundError(LibcatError):
    """No record contributor matches the requested heading."""


class StatsError(LibcatError):
    """Base class for correlation failures."""


class SampleSizeError(StatsError):
    """Fewer than two paired observations."""


class ConstantInputError(StatsError):
    """A coordinate has no variation, so rank correlation is undefined."""
