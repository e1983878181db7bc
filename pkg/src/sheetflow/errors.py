class SheetflowError(Exception):
    """Base class for library errors."""


class DomainError(SheetflowError, ValueError):
    """Evaluation outside the region where a quantity is defined."""


class ConstraintError(SheetflowError, ValueError):
    """An input violates a linear constraint such as the zero-mean condition."""


class TopologyError(SheetflowError, ValueError):
    pass


class ConditioningError(SheetflowError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SelfIntersectionError(SheetflowError, ValueError):
    """Raised for curves that cross themselves or each other.

    ``location`` is the crossing point and ``curve`` the last valid curve, when known.
    """

    def __init__(self, message, location=None, curve=None):
        super().__init__(message)
        self.location = location
        self.curve = curve


class ConvergenceError(SheetflowError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SchemaError(SheetflowError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
