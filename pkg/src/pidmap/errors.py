"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An input lies outside the domain an operation is defined on."""


class DegenerateCubicError(PreconditionError):
    """Leading coefficient is zero, so the polynomial is not a cubic."""


class NotHurwitzError(PreconditionError):
    """A matrix expected to be Hurwitz has an eigenvalue with Re >= 0."""


class SimulationDiverged(RuntimeError):
    """Integration left the finite / bounded region."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t
