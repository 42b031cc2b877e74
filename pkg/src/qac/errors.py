"""Exception hierarchy shared across the package."""


class QacError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QacError):
    """An argument violates an operation's contract."""


class CorruptFileError(QacError):
    """A serialized artifact failed magic/structure validation."""


class NotFoundError(QacError):
    """A referenced document or resource is not indexed."""


class UnavailableContextError(QacError):
    """A context mode needs external data (embeddings) that is missing."""


class ResponseParseError(QacError):
    """A remote endpoint answered with an unparseable payload."""
