"""Exception hierarchy shared by every module."""


class AttrSeqError(Exception):
    """Base class for all errors raised by attrseq."""


class DimensionError(AttrSeqError, ValueError):
    pass


class NumericalError(AttrSeqError, ArithmeticError):
    pass


class ConfigError(AttrSeqError, ValueError):
    pass


class VocabError(AttrSeqError, KeyError):
    pass


class LengthError(AttrSeqError, ValueError):
    pass


class ParseError(AttrSeqError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(AttrSeqError, ValueError):
    pass


class EmptySequenceError(AttrSeqError, ValueError):
    pass


class UndefinedMetricError(AttrSeqError, ValueError):
    pass
