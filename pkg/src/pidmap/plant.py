"""Uncertain second-order plant, lumped uncertainty/disturbance, and signals.

Plant:   q'' = u + d(q, q', u, t)
LUD:     d   = a1 q + a2 q' + b u + w(t)

Angles are in degrees and time in seconds. Signals evaluate on scalars or
numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import PreconditionError


def _sinusoid_sum(t, offset, amplitudes, frequencies, phases, order):
    """order-th time derivative of offset + sum A sin(w t + phi)."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, offset if order == 0 else 0.0)
    for A, w, phi in zip(amplitudes, frequencies, phases):
        # d^n/dt^n sin(x) = sin(x + n pi/2)
        out = out + A * w**order * np.sin(w * t + phi + order * math.pi / 2)
    return out


@dataclass(frozen=True)
class DisturbanceSignal:
    """Exogenous disturbance w(t).

    kind is one of "constant", "sinusoid", "sum-of-sinusoids", "tabulated".
    Sinusoidal terms are A sin(w t + phi); a cosine uses phi = pi/2.
    Tabulated data is interpolated by a cubic spline so w' exists.
    """

    kind: str = "constant"
    offset: float = 0.0
    amplitudes: tuple[float, ...] = ()
    frequencies: tuple[float, ...] = ()
    phases: tuple[float, ...] = ()
    times: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        kinds = ("constant", "sinusoid", "sum-of-sinusoids", "tabulated")
        if self.kind not in kinds:
            raise PreconditionError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.times) < 2 or len(self.times) != len(self.values):
                raise PreconditionError("tabulated disturbance needs >= 2 (t, w) pairs")
            object.__setattr__(self, "_spline", CubicSpline(self.times, self.values))
        else:
            n = len(self.amplitudes)
            if len(self.frequencies) != n:
                raise PreconditionError("amplitudes and frequencies differ in length")
            if not self.phases:
                object.__setattr__(self, "phases", (0.0,) * n)
            elif len(self.phases) != n:
                raise PreconditionError("phases and amplitudes differ in length")
            if self.kind == "sinusoid" and n != 1:
                raise PreconditionError("kind 'sinusoid' takes exactly one term")

    @classmethod
    def constant(cls, value: float) -> DisturbanceSignal:
        return cls("constant", offset=value)

    @classmethod
    def cosine(cls, amplitude: float, frequency: float = 1.0) -> DisturbanceSignal:
        return cls("sinusoid", amplitudes=(amplitude,), frequencies=(frequency,),
                   phases=(math.pi / 2,))

    def _eval(self, t, order):
        if self.kind == "tabulated":
            # hold the end values outside the table
            tt = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
            return self._spline(tt, order) * 1.0
        return _sinusoid_sum(t, self.offset, self.amplitudes, self.frequencies,
                             self.phases, order)

    def value(self, t):
        return self._eval(t, 0)

    def rate(self, t):
        return self._eval(t, 1)

    def amplitude_bound(self) -> float:
        if self.kind == "tabulated":
            return float(np.max(np.abs(self.values)))
        return abs(self.offset) + sum(abs(A) for A in self.amplitudes)

    def rate_bound(self) -> float:
        if self.kind == "tabulated":
            grid = np.linspace(self.times[0], self.times[-1], 10 * len(self.times))
            return float(np.max(np.abs(self.rate(grid))))
        return sum(abs(A * w) for A, w in zip(self.amplitudes, self.frequencies))


@dataclass(frozen=True)
class PlantParams:
    """Ground-truth plant coefficients. Never handed to the controller."""

    a1: float = 0.0
    a2: float = 0.0
    b: float = 0.0
    w: DisturbanceSignal = field(default_factory=DisturbanceSignal)

    def __post_init__(self):
        if not -1.0 < self.b < 1.0:
            raise PreconditionError(
                f"b must lie in (-1, 1) so that the input gain 1+b is positive; got b={self.b}"
            )


@dataclass(frozen=True)
class PlantState:
    q: float
    qdot: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.qdot)):
            raise PreconditionError("plant state must be finite")


def lud(params: PlantParams, q, qdot, u, t):
    return params.a1 * q + params.a2 * qdot + params.b * u + params.w.value(t)


def lud_initial(params: PlantParams, state0: PlantState, u0: float) -> float:
    return float(lud(params, state0.q, state0.qdot, u0, 0.0))


def plant_rhs(params: PlantParams, state: PlantState, u, t):
    """Acceleration q''."""
    return u + lud(params, state.q, state.qdot, u, t)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """q_d(t) = offset + sum A sin(w t + phi), with analytic derivatives."""

    offset: float = 0.0
    amplitudes: tuple[float, ...] = ()
    frequencies: tuple[float, ...] = ()
    phases: tuple[float, ...] = ()

    def __post_init__(self):
        n = len(self.amplitudes)
        if len(self.frequencies) != n:
            raise PreconditionError("amplitudes and frequencies differ in length")
        if not self.phases:
            object.__setattr__(self, "phases", (0.0,) * n)

    @classmethod
    def constant(cls, value: float) -> ReferenceTrajectory:
        return cls(offset=value)

    def derivative(self, t, order: int):
        return _sinusoid_sum(t, self.offset, self.amplitudes, self.frequencies,
                             self.phases, order)


def eval_reference(traj: ReferenceTrajectory, t):
    """(q_d, q_d', q_d'', q_d''') at t."""
    return tuple(traj.derivative(t, k) for k in range(4))


# presets for the helicopter elevation / pitch channels (degrees)
HELI_ELEVATION = ReferenceTrajectory(
    offset=5.73 * -0.33, amplitudes=(5.73, 5.73), frequencies=(0.25, 0.5)
)
HELI_PITCH = ReferenceTrajectory(amplitudes=(15.0,), frequencies=(0.63,))

ELEVATION_DISTURBANCE = 0.345
PITCH_DISTURBANCE = 0.015

# initial platform state (elevation, elevation rate, pitch, pitch rate)
HELI_INITIAL_ELEVATION = PlantState(-25.7, 0.0)
HELI_INITIAL_PITCH = PlantState(0.0, 0.0)


def disturbance_preset(name: str, scale: float | None = None) -> DisturbanceSignal:
    """Named disturbances: d1 is constant, d2 is A cos(t)."""
    kind, _, channel = name.partition("-")
    defaults = {"elevation": ELEVATION_DISTURBANCE, "pitch": PITCH_DISTURBANCE}
    if channel not in defaults or kind not in ("d1", "d2"):
        if name == "none":
            return DisturbanceSignal.constant(0.0)
        raise PreconditionError(f"unknown disturbance preset {name!r}")
    amp = defaults[channel] if scale is None else scale
    if kind == "d1":
        return DisturbanceSignal.constant(amp)
    return DisturbanceSignal.cosine(amp, 1.0)


def trajectory_preset(name: str) -> ReferenceTrajectory:
    presets = {"heli-elevation": HELI_ELEVATION, "heli-pitch": HELI_PITCH}
    if name == "zero":
        return ReferenceTrajectory.constant(0.0)
    try:
        return presets[name]
    except KeyError:
        raise PreconditionError(f"unknown trajectory preset {name!r}") from None
