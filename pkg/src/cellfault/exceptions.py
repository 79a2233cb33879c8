"""Exception hierarchy shared by every module of the toolkit."""


class CellFaultError(Exception):
    """Base class. ``stage`` is filled in by the pipeline when it re-raises."""

    stage: str | None = None


class ValidationError(CellFaultError, ValueError):
    pass


class DerivationError(CellFaultError, ValueError):
    """A KPI could not be derived because a denominator counter is zero."""

    def __init__(self, counter: str):
        super().__init__(f"cannot derive KPI: counter {counter} is zero")
        self.counter = counter


class MappingError(CellFaultError, ValueError):
    pass


class ParseError(CellFaultError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.column = column


class RuleError(CellFaultError, KeyError):
    def __init__(self, rule_id: str, attribute: str):
        super().__init__(f"rule {rule_id} references missing attribute {attribute!r}")
        self.rule_id = rule_id
        self.attribute = attribute

    def __str__(self):
        return self.args[0]


class PredictError(CellFaultError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "prediction failed"


class AssignError(PredictError):
    pass
