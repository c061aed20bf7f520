"""Single-parameter PID tuning through a (kp, kd, T) gain mapping."""
from .errors import (
    DegenerateCubicError,
    NotHurwitzError,
    PreconditionError,
    SimulationDiverged,
)
from .gainmap import (
    AuxParams,
    CubicSolution,
    GainJacobian,
    InverseResult,
    PidGains,
    forward_map,
    inverse_map,
    jacobian,
    solve_cubic,
)

__all__ = [
    "AuxParams",
    "CubicSolution",
    "DegenerateCubicError",
    "GainJacobian",
    "InverseResult",
    "NotHurwitzError",
    "PidGains",
    "PreconditionError",
    "SimulationDiverged",
    "forward_map",
    "inverse_map",
    "jacobian",
    "solve_cubic",
]
