"""Exception hierarchy shared by all rmpmab modules."""


class RmpmabError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(RmpmabError, ValueError):
    pass


class InvalidDiscretizationError(RmpmabError, ValueError):
    pass


class DomainError(RmpmabError, ValueError):
    pass


class DelayOverflowError(DomainError):
    pass


class DegenerateDiscountError(RmpmabError, ValueError):
    pass


class UnknownPolicyError(RmpmabError, KeyError):
    pass


class OracleFailure(RmpmabError, RuntimeError):
    pass


class InestimableParameterError(RmpmabError, ValueError):
    def __init__(self, state, message=None):
        self.state = state
        super().__init__(message or f"no transitions observed out of state {state}")


class ConfigError(RmpmabError, ValueError):
    def __init__(self, message, key=None, line=None, source=None):
        self.message = message
        self.key = key
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SchemaError(RmpmabError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class BoundaryEstimateWarning(UserWarning):
    """A fitted parameter sits on its clamping bound because the trace cannot identify it."""
