"""PID gain mapping (kp, kd, T) -> (KP, KI, KD), its Jacobian and its inverse.

The forward map is

    KP = kp + kd / T
    KD = kd + 1 / T
    KI = kp / T

and inverting it reduces to finding the positive real roots of

    p(T) = KI T^3 - KP T^2 + KD T - 1

which is done in closed form by ``solve_cubic``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCubicError, PreconditionError

CASE_ONE_REAL = "D>0"
CASE_THREE_REAL = "D<0"
CASE_REPEATED = "D=0"

# scaled residual above which the closed form is re-derived by deflation
_FALLBACK_RESIDUAL = 1e-12


@dataclass(frozen=True)
class PidGains:
    KP: float
    KI: float
    KD: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.KP, self.KI, self.KD)):
            raise PreconditionError(f"PID gains must be finite, got {self}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.KP, self.KI, self.KD)


@dataclass(frozen=True)
class AuxParams:
    """Auxiliary triple: nominal PD gains (kp, kd) and UDE time constant T."""

    kp: float
    kd: float
    T: float

    def __post_init__(self):
        for name in ("kp", "kd", "T"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise PreconditionError(f"{name} must be finite and > 0, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.kp, self.kd, self.T)


def forward_map(aux: AuxParams) -> PidGains:
    kp, kd, T = aux.kp, aux.kd, aux.T
    return PidGains(KP=kp + kd / T, KI=kp / T, KD=kd + 1.0 / T)


GAIN_NAMES = ("KP", "KD", "KI")
PARAM_NAMES = ("kp", "kd", "T")


@dataclass(frozen=True)
class GainJacobian:
    """d(KP, KD, KI) / d(kp, kd, T); rows are gains, columns parameters."""

    matrix: np.ndarray

    def partial(self, gain: str, param: str) -> float:
        return float(self.matrix[GAIN_NAMES.index(gain), PARAM_NAMES.index(param)])


def jacobian(aux: AuxParams) -> GainJacobian:
    kp, kd, T = aux.kp, aux.kd, aux.T
    inv_T = 1.0 / T
    inv_T2 = inv_T * inv_T
    J = np.array(
        [
            [1.0, inv_T, -kd * inv_T2],
            [0.0, 1.0, -inv_T2],
            [inv_T, 0.0, -kp * inv_T2],
        ]
    )
    return GainJacobian(J)


# ---------------------------------------------------------------------------
# cubic roots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubicSolution:
    coefficients: tuple[float, float, float, float]
    p: float
    q: float
    discriminant: float
    case: str
    real_roots: tuple[float, ...]
    complex_roots: tuple[complex, ...] = ()

    @property
    def roots(self) -> tuple[complex, ...]:
        return tuple(complex(r) for r in self.real_roots) + self.complex_roots

    @property
    def distinct_real_roots(self) -> tuple[float, ...]:
        out: list[float] = []
        for r in self.real_roots:
            if not out or r != out[-1]:
                out.append(r)
        return tuple(out)

    def scaled_residual(self, x: complex) -> float:
        """|f(x)| relative to max|coeff| * max(1, |x|)^3."""
        a, b, c, d = self.coefficients
        scale = max(abs(a), abs(b), abs(c), abs(d))
        if abs(x) <= 1.0:
            return abs(((a * x + b) * x + c) * x + d) / scale
        # f(x) / x^3 as a polynomial in 1/x, free of overflow
        y = 1.0 / x
        return abs(((d * y + c) * y + b) * y + a) / scale


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _newton(coeffs, x, steps=2):
    a, b, c, d = coeffs
    f = lambda z: ((a * z + b) * z + c) * z + d  # noqa: E731
    fx = f(x)
    for _ in range(steps):
        dfx = (3 * a * x + 2 * b) * x + c
        if dfx == 0:
            break
        x_new = x - fx / dfx
        f_new = f(x_new)
        if not abs(f_new) <= abs(fx):  # also rejects overflow to nan
            break
        x, fx = x_new, f_new
    return x


def _newton_on_derivative(coeffs, x, steps=2):
    # a double root of f is a simple root of f'
    a, b, c, _ = coeffs
    for _ in range(steps):
        g = (3 * a * x + 2 * b) * x + c
        dg = 6 * a * x + 2 * b
        if dg == 0 or g == 0:
            break
        x_new = x - g / dg
        if not abs((3 * a * x_new + 2 * b) * x_new + c) <= abs(g):
            break
        x = x_new
    return x


def _root_scale(ba: float, ca: float, da: float) -> float:
    """Power of two close to the root magnitude of a monic cubic."""
    s = max(abs(ba), math.sqrt(abs(ca)), abs(da) ** (1.0 / 3.0))
    if s == 0.0 or not math.isfinite(s):
        return 1.0
    return math.ldexp(1.0, math.frexp(s)[1])


def _quadratic_roots(a: float, b: float, c: float):
    """Roots of a x^2 + b x + c without cancellation; (reals, complex pair)."""
    disc = b * b - 4.0 * a * c
    if abs(disc) <= 1e-14 * b * b:
        r = -b / (2.0 * a)
        return (r, r), ()
    if disc > 0:
        qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
        r1 = qq / a
        r2 = c / qq if qq != 0 else -r1
        return tuple(sorted((r1, r2))), ()
    z = complex(-b / (2.0 * a), math.sqrt(-disc) / (2.0 * abs(a)))
    return (), (z, z.conjugate())


def _deflated(coeffs, real_guesses):
    """Fallback: polish the best real root, then solve the quotient quadratic.

    Forward deflation (from the leading coefficient) is stable for a small
    root and backward deflation (from the constant term) for a large one;
    both are tried and the quotient with the smaller residual is kept.
    """
    a, b, c, d = coeffs
    res = lambda z: abs(((a * z + b) * z + c) * z + d) / max(1.0, abs(z)) ** 3  # noqa: E731
    x1 = _newton(coeffs, min(real_guesses, key=res), steps=6)
    quotients = []
    b1 = b + a * x1
    quotients.append((a, b1, c + b1 * x1))
    if x1 != 0.0:
        c0 = -d / x1
        quotients.append((a, (c0 - c) / x1, c0))
    best = None
    for qa, qb, qc in quotients:
        reals, pair = _quadratic_roots(qa, qb, qc)
        reals = tuple(_newton(coeffs, r) for r in reals)
        if pair:
            z = _newton(coeffs, pair[0])
            pair = (complex(z.real, abs(z.imag)), complex(z.real, -abs(z.imag)))
        worst = max((res(z) for z in reals + pair), default=0.0)
        if best is None or worst < best[0]:
            best = (worst, reals, pair)
    _, reals, pair = best
    if pair:
        return (x1,), pair
    return tuple(sorted((x1,) + reals)), ()


def _case_of(real_roots) -> str:
    if len(real_roots) == 1:
        return CASE_ONE_REAL
    distinct = len(set(real_roots))
    return CASE_THREE_REAL if distinct == 3 else CASE_REPEATED


def solve_cubic(a: float, b: float, c: float, d: float) -> CubicSolution:
    """Roots of a x^3 + b x^2 + c x + d = 0 by Cardano / trigonometric formulas.

    The substitution x = y - b/(3a) gives the depressed cubic y^3 + p y + q
    whose discriminant D = (p/3)^3 + (q/2)^2 selects the branch:
    D > 0 one real root and a conjugate pair (radicals), D < 0 three real
    roots (trigonometric), D = 0 a repeated root. All roots get two Newton
    steps on the original polynomial.

    The branch is chosen on a copy rescaled by a power of two so that its
    roots are of order one, which makes the D = 0 tolerance scale free.
    If the closed form still leaves a large residual (roots spread over
    many decades make D itself ill-conditioned), the best real root is
    polished and the remaining two come from the deflated quadratic.
    """
    if a == 0:
        raise DegenerateCubicError("leading coefficient is zero; not a cubic")
    coeffs = (float(a), float(b), float(c), float(d))
    a, b, c, d = coeffs
    s = _root_scale(b / a, c / a, d / a)
    # sequential division keeps s**3 from under/overflowing
    ba, ca, da = b / a / s, c / a / s / s, d / a / s / s / s
    p = -(ba * ba) / 3.0 + ca
    q = 2.0 / 27.0 * ba**3 - ba * ca / 3.0 + da
    D = (p / 3.0) ** 3 + (q / 2.0) ** 2
    shift = -ba / 3.0
    tol = 1e-12 * max(1.0, abs(p / 3.0) ** 3, (q / 2.0) ** 2)
    complex_roots: tuple[complex, ...] = ()

    if abs(D) <= tol:
        case = CASE_REPEATED
        u = _cbrt(-q / 2.0)
        # p carries rounding of order eps * (b/a)^2 at a triple root
        if u == 0.0 or abs(p) <= 1e-12 * max(ba * ba / 3.0, abs(ca)):
            real = (-b / (3.0 * a),) * 3
        else:
            single = _newton(coeffs, (2.0 * u + shift) * s)
            double = _newton_on_derivative(coeffs, (-u + shift) * s)
            real = tuple(sorted((single, double, double)))
    elif D > 0:
        case = CASE_ONE_REAL
        sD = math.sqrt(D)
        w = -q / 2.0 + math.copysign(sD, -q / 2.0)
        u = _cbrt(w)
        v = -p / (3.0 * u)
        y1 = u + v
        real = (_newton(coeffs, (y1 + shift) * s),)
        z = complex(-y1 / 2.0 + shift, math.sqrt(3.0) / 2.0 * abs(u - v)) * s
        z = _newton(coeffs, z)
        complex_roots = (complex(z.real, abs(z.imag)), complex(z.real, -abs(z.imag)))
    else:
        # D < 0 implies p < 0
        case = CASE_THREE_REAL
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p)
        phi = math.acos(min(1.0, max(-1.0, arg))) / 3.0
        real = tuple(sorted(
            _newton(coeffs, (r * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift) * s)
            for k in range(3)
        ))

    sol = CubicSolution(coeffs, p * s * s, q * s * s * s, D * (s * s * s) * (s * s * s), case, real, complex_roots)
    if max(sol.scaled_residual(x) for x in sol.roots) > _FALLBACK_RESIDUAL:
        real, complex_roots = _deflated(coeffs, real)
        sol = CubicSolution(coeffs, sol.p, sol.q, sol.discriminant, _case_of(real),
                            real, complex_roots)
    return sol


def cubic_roots(coeffs) -> tuple[complex, ...]:
    """Convenience: all three roots of a cubic given as (a, b, c, d)."""
    return solve_cubic(*coeffs).roots


# ---------------------------------------------------------------------------
# inverse map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InverseCandidate:
    kp: float
    kd: float
    T: float
    kp_positive: bool
    kd_positive: bool

    @property
    def admissible(self) -> bool:
        return self.kp_positive and self.kd_positive

    def to_aux(self) -> AuxParams:
        return AuxParams(self.kp, self.kd, self.T)


@dataclass(frozen=True)
class InverseResult:
    gains: PidGains
    cubic: CubicSolution
    candidates: tuple[InverseCandidate, ...]

    @property
    def admissible(self) -> tuple[InverseCandidate, ...]:
        return tuple(c for c in self.candidates if c.admissible)


def inverse_map(gains: PidGains) -> InverseResult:
    """All (kp, kd, T) with T > 0 that map onto ``gains``, ascending in T.

    Requires KI > 0, which guarantees at least one positive root of p(T).
    Candidates with kd <= 0 are kept and flagged rather than dropped.
    """
    if not gains.KI > 0:
        raise PreconditionError(
            f"inverse mapping needs KI > 0 (got KI={gains.KI}); "
            "without it a positive T solving p(T)=0 is not guaranteed"
        )
    sol = solve_cubic(gains.KI, -gains.KP, gains.KD, -1.0)
    candidates = []
    for T in sol.distinct_real_roots:
        if T <= 0:
            continue
        kp = gains.KI * T
        kd = gains.KD - 1.0 / T
        candidates.append(InverseCandidate(kp, kd, T, kp > 0, kd > 0))
    return InverseResult(gains, sol, tuple(candidates))
