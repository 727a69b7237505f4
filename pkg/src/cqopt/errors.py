"""Exception hierarchy shared by all modules."""


class CqoptError(Exception):
    """Base class for every error raised by the package."""


class SchemaError(CqoptError):
    pass


class ArgumentError(CqoptError, ValueError):
    pass


class PlanError(CqoptError):
    pass


class QuerySyntaxError(CqoptError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class SemanticError(CqoptError):
    pass


class ModeError(CqoptError):
    pass


class DataError(CqoptError):
    pass


class SizeError(CqoptError):
    pass


class UnboundedError(CqoptError):
    pass


class CertificateError(CqoptError):
    pass


class InvariantError(CqoptError):
    pass


class GuardExceeded(CqoptError):
    pass
