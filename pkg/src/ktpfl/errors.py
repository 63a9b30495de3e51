"""Exception hierarchy shared by every module."""


class KtpflError(Exception):
    """Base class for all simulator errors."""


class DimensionError(KtpflError, ValueError):
    pass


class ParameterError(KtpflError, ValueError):
    pass


class DataError(KtpflError, ValueError):
    pass


class FormatError(DataError):
    pass


class LengthError(DataError):
    pass


class ConsistencyError(DataError):
    pass


class NumericError(KtpflError, ArithmeticError):
    pass


class ConfigError(KtpflError, ValueError):
    """Invalid experiment configuration; carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"[{key}"
            if line is not None:
                where += f", line {line}"
            where += "] "
        super().__init__(where + message)


class ProtocolError(KtpflError, RuntimeError):
    """A round-level protocol violation (missing prediction, misaligned teacher, client failure)."""

    def __init__(self, message, client=None):
        self.client = client
        prefix = f"client {client}: " if client is not None else ""
        super().__init__(prefix + message)
