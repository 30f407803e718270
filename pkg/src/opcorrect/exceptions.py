class ContractViolation(ValueError):
    """Inputs violate a documented precondition (shapes, ranges)."""


class SingularOperator(ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class ZeroGradient(ArithmeticError):
    """The linear minimization oracle received an all-zero gradient."""


class GeometryDegenerate(ValueError):
    """Panel geometry yields coincident collocation points or a singular kernel."""
