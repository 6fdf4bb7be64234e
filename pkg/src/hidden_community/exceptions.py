class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a formula or algorithm."""


class GraphFormatError(ValueError):
    """Malformed graph or labels file."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
