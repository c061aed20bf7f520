"""PID law with acceleration feedforward and its PD + UDE decomposition.

Errors follow the tracking convention e1 = q_d - q, e2 = q_d' - q', and
qI is the running integral of e1 starting from zero. Every function here is
plain arithmetic and works elementwise on numpy arrays as well as floats.
"""
from __future__ import annotations

from typing import Any, NamedTuple

from .gainmap import AuxParams, PidGains


class ErrorState(NamedTuple):
    qI: Any
    e1: Any
    e2: Any


class ControlDecomposition(NamedTuple):
    u0: Any
    dHat: Any
    u: Any


def pid_raw(gains: PidGains, err: ErrorState, qdd_d):
    return gains.KP * err.e1 + gains.KD * err.e2 + gains.KI * err.qI + qdd_d


def nominal_pd(aux: AuxParams, err: ErrorState, qdd_d):
    return qdd_d + aux.kp * err.e1 + aux.kd * err.e2


def ude_estimate(aux: AuxParams, err: ErrorState):
    """Disturbance estimate carried implicitly by the PID terms."""
    T = aux.T
    return -(aux.kd / T) * err.e1 - (1.0 / T) * err.e2 - (aux.kp / T) * err.qI


def pid_decomposed(aux: AuxParams, err: ErrorState, qdd_d) -> ControlDecomposition:
    u0 = nominal_pd(aux, err, qdd_d)
    dHat = ude_estimate(aux, err)
    return ControlDecomposition(u0=u0, dHat=dHat, u=u0 - dHat)


def initial_estimate(aux: AuxParams, e1_0, e2_0):
    """Estimator output at t = 0; scales like 1/T, hence control peaking."""
    return -(aux.kd * e1_0 + e2_0) / aux.T


def raw_law(gains: PidGains):
    """Scalar closure u(qI, e1, e2, qdd_d) equal to ``pid_raw`` bit for bit."""
    KP, KI, KD = gains.KP, gains.KI, gains.KD

    def law(qI, e1, e2, qdd_d):
        return KP * e1 + KD * e2 + KI * qI + qdd_d

    return law


def decomposed_law(aux: AuxParams):
    """Scalar closure u = u0 - dHat equal to ``pid_decomposed(...).u`` bit for bit.

    The simulator calls the law four times per step, so the record types
    of the full functions are skipped here.
    """
    kp, kd, T = aux.kp, aux.kd, aux.T
    kd_T, inv_T, kp_T = kd / T, 1.0 / T, kp / T

    def law(qI, e1, e2, qdd_d):
        u0 = qdd_d + kp * e1 + kd * e2
        dHat = -kd_T * e1 - inv_T * e2 - kp_T * qI
        return u0 - dHat

    return law
