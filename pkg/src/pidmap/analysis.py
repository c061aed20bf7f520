"""Stability and ultimate-bound analysis of the PID closed loop.

With qI, e1 = q~, e2 = q~' as state, the closed loop is x' = A x + B u with

        [      0          1          0     ]
    A = [      0          0          1     ] ,   B = (0, 0, 1)^T
        [ -(1+b)KI   a1-(1+b)KP  a2-(1+b)KD ]

and characteristic polynomial s^3 + c2 s^2 + c1 s + c0.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotHurwitzError, PreconditionError
from .gainmap import AuxParams, PidGains, forward_map, solve_cubic
from .plant import PlantParams

DEFAULT_THETA = 0.5
DEFAULT_T_RANGE = (1e-4, 1e3)


@dataclass(frozen=True)
class ClosedLoopMatrix:
    A: np.ndarray
    B: np.ndarray

    @property
    def char_poly(self) -> tuple[float, float, float]:
        """(c2, c1, c0) of s^3 + c2 s^2 + c1 s + c0."""
        row = self.A[2]
        return (-float(row[2]), -float(row[1]), -float(row[0]))


def closed_loop_matrix(gains: PidGains, truth: PlantParams) -> ClosedLoopMatrix:
    g = 1.0 + truth.b
    A = np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-g * gains.KI, truth.a1 - g * gains.KP, truth.a2 - g * gains.KD],
        ]
    )
    return ClosedLoopMatrix(A, np.array([0.0, 0.0, 1.0]))


def routh_condition(gains: PidGains, truth: PlantParams) -> bool:
    """Necessary and sufficient stability inequalities on the raw gains."""
    g = 1.0 + truth.b
    kp_min = truth.a1 / g
    return (
        gains.KP > kp_min
        and gains.KD > truth.a2 / g
        and 0.0 < gains.KI < (gains.KP - kp_min) * (g * gains.KD - truth.a2)
    )


def routh_cubic(c2: float, c1: float, c0: float) -> bool:
    return c2 > 0 and c0 > 0 and c1 * c2 > c0


def _char_poly(A: np.ndarray) -> tuple[float, ...]:
    n = A.shape[0]
    if n == 2:
        return (1.0, -float(np.trace(A)), float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]))
    if n == 3:
        minors = (
            A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
            + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
            + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
        )
        return (1.0, -float(np.trace(A)), float(minors), -float(np.linalg.det(A)))
    raise PreconditionError(f"only 2x2 and 3x3 matrices are supported, got {A.shape}")


def eigenvalues(A) -> tuple[complex, ...]:
    """Eigenvalues of a 2x2 or 3x3 matrix from its characteristic polynomial."""
    if isinstance(A, ClosedLoopMatrix):
        A = A.A
    A = np.asarray(A, dtype=float)
    coeffs = _char_poly(A)
    if len(coeffs) == 4:
        return solve_cubic(*coeffs).roots
    _, b, c = coeffs
    s = cmath.sqrt(b * b - 4 * c)
    # avoid cancellation: q = -(b + sign(b) s)/2
    qq = -0.5 * (b + (s if b >= 0 else -s))
    if qq == 0:
        return (0j, 0j)
    return (qq, c / qq)


def _max_real(eigs) -> float:
    return max(complex(z).real for z in eigs)


def is_hurwitz(matrix) -> bool:
    """All eigenvalues strictly in the open left half plane.

    Real parts within 1e-12 (relative to the spectral radius) of the
    imaginary axis count as marginal, i.e. not Hurwitz.
    """
    eigs = eigenvalues(matrix)
    scale = max(1.0, max(abs(z) for z in eigs))
    return _max_real(eigs) < -1e-12 * scale


def solve_lyapunov(A) -> np.ndarray:
    """Symmetric P with P A + A^T P = -I for Hurwitz A (n = 2 or 3).

    Solves the n(n+1)/2 linear equations in the upper-triangular entries.
    """
    if isinstance(A, ClosedLoopMatrix):
        A = A.A
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or n not in (2, 3):
        raise PreconditionError(f"A must be 2x2 or 3x3, got {A.shape}")
    if not is_hurwitz(A):
        raise NotHurwitzError("A is not Hurwitz; no positive-definite Lyapunov solution")

    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    index = {}
    for k, (i, j) in enumerate(pairs):
        index[(i, j)] = index[(j, i)] = k
    m = len(pairs)
    M = np.zeros((m, m))
    rhs = np.zeros(m)
    # (PA + A^T P)_ij = sum_k P_ik A_kj + A_ki P_kj
    for row, (i, j) in enumerate(pairs):
        for k in range(n):
            M[row, index[(i, k)]] += A[k, j]
            M[row, index[(k, j)]] += A[k, i]
        rhs[row] = -1.0 if i == j else 0.0
    sol = np.linalg.solve(M, rhs)
    P = np.empty((n, n))
    for (i, j), k in index.items():
        P[i, j] = sol[k]
    return P


def lyapunov_residual(P: np.ndarray, A: np.ndarray) -> float:
    return float(np.max(np.abs(P @ A + A.T @ P + np.eye(A.shape[0]))))


def symmetric_eigenvalues(P: np.ndarray) -> tuple[float, ...]:
    """Real eigenvalues of a symmetric 2x2/3x3 matrix, ascending.

    Uses the trigonometric cubic root formula on the shifted matrix
    P - (tr P / n) I, which stays accurate for clustered eigenvalues where
    going through the characteristic polynomial coefficients would not.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    m = float(np.trace(P)) / n
    S = P - m * np.eye(n)
    if n == 2:
        r = math.hypot(S[0, 0], S[0, 1])
        return (m - r, m + r)
    half_norm = math.sqrt(float(np.sum(S * S)) / 6.0)
    if half_norm == 0.0:
        return (m, m, m)
    r = float(np.linalg.det(S / half_norm)) / 2.0
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    top = m + 2.0 * half_norm * math.cos(phi)
    bottom = m + 2.0 * half_norm * math.cos(phi + 2.0 * math.pi / 3.0)
    return (bottom, 3.0 * m - top - bottom, top)


@dataclass(frozen=True)
class UltimateBoundReport:
    P: np.ndarray
    lam_max: float
    lam_min: float
    theta: float
    u_inf: float
    bound: float
    residual: float


def ultimate_bound(matrix, u_inf: float, theta: float = DEFAULT_THETA,
                   B=None) -> UltimateBoundReport:
    """Asymptotic bound on ||x||_2 for x' = A x + B u with |u| <= u_inf.

    bound = 2 ||B||_2 u_inf / theta * sqrt(lam_max(P)^3 / lam_min(P))
    """
    if isinstance(matrix, ClosedLoopMatrix):
        A, B = matrix.A, matrix.B if B is None else B
    else:
        A = np.asarray(matrix, dtype=float)
    if B is None:
        B = np.zeros(A.shape[0])
        B[-1] = 1.0
    if not 0.0 < theta < 1.0:
        raise PreconditionError(f"theta must lie in (0, 1), got {theta}")
    if u_inf < 0:
        raise PreconditionError("u_inf must be non-negative")
    P = solve_lyapunov(A)
    lams = symmetric_eigenvalues(P)
    lam_min, lam_max = lams[0], lams[-1]
    if lam_min <= 0:
        raise NotHurwitzError("Lyapunov solution is not positive definite")
    b_norm = float(np.linalg.norm(np.asarray(B, dtype=float), 2))
    bound = 2.0 * b_norm * u_inf / theta * math.sqrt(lam_max**3 / lam_min)
    return UltimateBoundReport(P, lam_max, lam_min, theta, u_inf, bound,
                               lyapunov_residual(P, A))


def hurwitz_at(kp: float, kd: float, T: float, truth: PlantParams) -> bool:
    return is_hurwitz(closed_loop_matrix(forward_map(AuxParams(kp, kd, T)), truth))


def find_T_bar(kp: float, kd: float, truth: PlantParams,
               search_range: tuple[float, float] = DEFAULT_T_RANGE,
               grid_points: int = 400, rel_width: float = 1e-4) -> float:
    """Largest T such that every tested T' <= T gives a Hurwitz closed loop.

    Scans a log grid upward from the range minimum, then bisects the first
    stable/unstable bracket until its relative width is below ``rel_width``.
    Returns ``math.inf`` when the whole range is stable.
    """
    AuxParams(kp, kd, 1.0)  # validates kp, kd
    lo, hi = search_range
    if not 0 < lo < hi:
        raise PreconditionError(f"bad search range {search_range}")
    grid = np.geomspace(lo, hi, grid_points)
    if not hurwitz_at(kp, kd, grid[0], truth):
        raise PreconditionError(
            f"closed loop unstable already at T={lo:g}; no stable T in range"
        )
    stable = float(grid[0])
    for T in grid[1:]:
        if hurwitz_at(kp, kd, float(T), truth):
            stable = float(T)
            continue
        unstable = float(T)
        while (unstable - stable) > rel_width * stable:
            mid = math.sqrt(stable * unstable)
            if hurwitz_at(kp, kd, mid, truth):
                stable = mid
            else:
                unstable = mid
        return stable
    return math.inf
