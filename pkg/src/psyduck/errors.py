"""Exception taxonomy shared across the toolkit."""


class PsyduckError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(PsyduckError, ValueError):
    """A precondition on an operation argument was violated."""


class CapacityError(PsyduckError):
    """Payload does not fit the configured cell grid."""

    def __init__(self, message: str, max_payload_bytes: int):
        super().__init__(message)
        self.max_payload_bytes = max_payload_bytes


class FramingError(PsyduckError):
    """Decoded digit stream has an implausible header.

    Signals a wrong key, a corrupted container, or a configuration whose
    trajectories carry no recoverable signal.
    """


class ShapeMismatchError(PsyduckError):
    """Sample or container shape disagrees with the configured geometry."""


class ScheduleMismatchError(PsyduckError):
    """Protocol parameters are inconsistent with the variance schedule."""


class ContainerFormatError(PsyduckError):
    """Byte stream is not a well-formed stego container."""


class ConfigError(PsyduckError):
    """Configuration text could not be parsed or validated."""


class BridgeError(PsyduckError):
    """The external backend returned an error response."""

    def __init__(self, message: str, code: str = "error"):
        super().__init__(message)
        self.code = code


class BridgeTimeoutError(BridgeError):
    """The external backend did not answer within the request timeout."""

    def __init__(self, message: str):
        super().__init__(message, code="timeout")
