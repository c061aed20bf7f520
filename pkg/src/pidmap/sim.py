"""Fixed-step RK4 simulation of the PID closed loop and its two-time-scale form.

Three views of the same loop are integrated:

* the plant driven by the PID law (raw gains or PD + UDE split),
* the singular-perturbation form in (e1, e2, d~), d~ = d^ - d,
* the reduced slow model e*' = A1 e* and the boundary layer y(tau).
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from .control import ErrorState, decomposed_law, initial_estimate, pid_decomposed, raw_law
from .errors import PreconditionError, SimulationDiverged
from .gainmap import AuxParams, PidGains, forward_map
from .plant import (
    PlantParams,
    PlantState,
    ReferenceTrajectory,
    eval_reference,
    lud,
    lud_initial,
)

ESCAPE_LIMIT = 1e9
DEFAULT_T_END = 60.0
DEFAULT_TAIL_FRACTION = 1.0 / 3.0
SETTLE_RTOL = 0.05
SETTLE_ATOL = 1e-6


def default_dt(T: float | None) -> float:
    return 1e-3 if T is None else min(1e-3, T / 20.0)


@dataclass(frozen=True)
class SimConfig:
    truth: PlantParams
    controller: AuxParams | PidGains
    trajectory: ReferenceTrajectory
    initial_state: PlantState
    t_end: float = DEFAULT_T_END
    dt: float | None = None
    tail_fraction: float = DEFAULT_TAIL_FRACTION
    path: str = "decomposed"

    def __post_init__(self):
        if not self.t_end > 0:
            raise PreconditionError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise PreconditionError("dt must be positive")
        if self.path not in ("raw", "decomposed"):
            raise PreconditionError(f"unknown controller path {self.path!r}")
        if isinstance(self.controller, PidGains) and self.path == "decomposed":
            object.__setattr__(self, "path", "raw")
        if isinstance(self.controller, AuxParams):
            T = self.controller.T
            if self.dt is not None and self.dt > T / 20.0 * (1 + 1e-12):
                raise PreconditionError(
                    f"dt={self.dt} too coarse for T={T}; need dt <= T/20"
                )
        if not 0 < self.tail_fraction < 0.5:
            raise PreconditionError("tail_fraction must lie in (0, 0.5)")

    @property
    def aux(self) -> AuxParams | None:
        return self.controller if isinstance(self.controller, AuxParams) else None

    @property
    def gains(self) -> PidGains:
        if isinstance(self.controller, PidGains):
            return self.controller
        return forward_map(self.controller)

    @property
    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        return default_dt(self.aux.T if self.aux else None)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.step + 1e-9))

    def with_T(self, T: float) -> SimConfig:
        aux = self.aux
        if aux is None:
            raise PreconditionError("config controller is not given as (kp, kd, T)")
        return replace(self, controller=AuxParams(aux.kp, aux.kd, T), dt=None)


def integrate(rhs, state0, t0: float, t_end: float, dt: float):
    """Classical RK4 with a fixed step.

    ``rhs(t, x)`` returns a sequence of derivatives. Returns the time grid
    (floor((t_end - t0)/dt) + 1 points) and the states as an (N+1, n) array.
    Raises SimulationDiverged when a state turns non-finite or exceeds 1e9.
    """
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    n = int(math.floor((t_end - t0) / dt + 1e-9))
    x = [float(v) for v in state0]
    # flat float buffer: cheap to extend and invisible to the cyclic GC
    buf = array("d", x)
    extend = buf.extend
    h2 = 0.5 * dt
    h6 = dt / 6.0
    limit = ESCAPE_LIMIT
    for k in range(n):
        t = t0 + k * dt
        k1 = rhs(t, x)
        k2 = rhs(t + h2, [a + h2 * b for a, b in zip(x, k1)])
        k3 = rhs(t + h2, [a + h2 * b for a, b in zip(x, k2)])
        k4 = rhs(t + dt, [a + dt * b for a, b in zip(x, k3)])
        x = [a + h6 * (b1 + 2.0 * (b2 + b3) + b4)
             for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
        if not max(map(abs, x)) <= limit:  # also catches nan
            raise SimulationDiverged(
                f"state escaped |x| <= {limit:g} at t={t + dt:.6g}: {x}", t + dt
            )
        extend(x)
    out = np.frombuffer(buf, dtype=float).reshape(n + 1, len(x)).copy()
    t_grid = t0 + dt * np.arange(n + 1)
    return t_grid, out


class _StageTable:
    """Signals sampled on the RK4 half-step grid, looked up by time."""

    def __init__(self, config: SimConfig):
        h = config.step
        self.inv_half = 2.0 / h
        n = config.n_steps
        th = 0.5 * h * np.arange(2 * n + 1)
        qd, qd1, qd2, qd3 = eval_reference(config.trajectory, th)
        w = config.truth.w
        self.t = th
        self.qd, self.qd1, self.qd2, self.qd3 = qd, qd1, qd2, qd3
        self.w = w.value(th) * np.ones_like(th)
        self.wdot = w.rate(th) * np.ones_like(th)
        self.lists = [a.tolist() for a in (self.qd, self.qd1, self.qd2, self.qd3,
                                           self.w, self.wdot)]

    def index(self, t: float) -> int:
        return round(t * self.inv_half)

    def grid(self, arr):
        return arr[::2]


@dataclass(frozen=True)
class UBMeasurement:
    epsilon: float
    t_epsilon: float
    settled: bool
    previous_window: float
    message: str = ""


@dataclass
class SimResult:
    config: SimConfig
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    qI: np.ndarray
    u: np.ndarray
    u0: np.ndarray
    dhat: np.ndarray
    d: np.ndarray
    dtilde: np.ndarray
    ub: UBMeasurement | None = None

    CSV_COLUMNS = ("t", "q", "qdot", "e1", "e2", "qI", "u", "u0", "dhat", "d", "dtilde")

    def columns(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.CSV_COLUMNS]


def _control(config: SimConfig):
    """Scalar/array control law u(qI, e1, e2, qdd_d) for the chosen path."""
    if config.path == "raw":
        return raw_law(config.gains)
    return decomposed_law(config.aux)


def run_closed_loop(config: SimConfig) -> SimResult:
    """Integrate the plant + PID loop with augmented state (qI, q, q')."""
    table = _StageTable(config)
    QD, QD1, QD2, _, W, _ = table.lists
    truth = config.truth
    a1, a2, b = truth.a1, truth.a2, truth.b
    control = _control(config)

    inv_half = table.inv_half

    def rhs(t, x):
        k = round(t * inv_half)
        qI, q, qdot = x
        e1 = QD[k] - q
        e2 = QD1[k] - qdot
        u = control(qI, e1, e2, QD2[k])
        # q'' = u + d with d = a1 q + a2 q' + b u + w
        return (e1, qdot, u + (a1 * q + a2 * qdot + b * u + W[k]))

    s0 = config.initial_state
    t, X = integrate(rhs, (0.0, s0.q, s0.qdot), 0.0, config.t_end, config.step)
    qI, q, qdot = X[:, 0], X[:, 1], X[:, 2]
    qd, qd1, qd2 = table.grid(table.qd), table.grid(table.qd1), table.grid(table.qd2)
    e1 = qd - q
    e2 = qd1 - qdot
    u = control(qI, e1, e2, qd2)
    d = lud(truth, q, qdot, u, t)
    if config.aux is not None:
        dec = pid_decomposed(config.aux, ErrorState(qI, e1, e2), qd2)
        u0, dhat = dec.u0, dec.dHat
        dtilde = dhat - d
    else:
        u0 = dhat = dtilde = np.full_like(t, np.nan)
    res = SimResult(config, t, q, qdot, e1, e2, qI, u, u0, dhat, d, dtilde)
    res.ub = measure_ub(res, config.tail_fraction)
    return res


# ---------------------------------------------------------------------------
# singular-perturbation form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpForm:
    """e' = A1 e + B1 d~ ;  T d~' = A2 d~ + T B2 e - T u_d."""

    A1: np.ndarray
    B1: np.ndarray
    A2: float
    B2: np.ndarray
    T: float


def sp_form(aux: AuxParams, truth: PlantParams) -> SpForm:
    kp, kd, T = aux.kp, aux.kd, aux.T
    a1, a2, b = truth.a1, truth.a2, truth.b
    A1 = np.array([[0.0, 1.0], [-kp, -kd]])
    B1 = np.array([0.0, 1.0])
    A2 = a2 * T - 1.0 - b - b * T * kd
    B2 = np.array([b * kd * kp - a2 * kp, a1 + b * kd * kd - a2 * kd - b * kp])
    return SpForm(A1, B1, A2, B2, T)


def sp_forcing(config: SimConfig, table: _StageTable) -> np.ndarray:
    """u_d = a1 qd' + a2 qd'' + b qd''' + w' on the half-step grid."""
    tr = config.truth
    return tr.a1 * table.qd1 + tr.a2 * table.qd2 + tr.b * table.qd3 + table.wdot


def initial_errors(config: SimConfig) -> tuple[float, float]:
    qd0, qd1_0, _, _ = (float(v) for v in eval_reference(config.trajectory, 0.0))
    s0 = config.initial_state
    return qd0 - s0.q, qd1_0 - s0.qdot


def initial_lud_error(config: SimConfig) -> float:
    """d~(0) = d^(0) - d0 with d0 evaluated at the initial control u(0)."""
    aux = config.aux
    e1_0, e2_0 = initial_errors(config)
    qdd0 = float(eval_reference(config.trajectory, 0.0)[2])
    u_init = pid_decomposed(aux, ErrorState(0.0, e1_0, e2_0), qdd0).u
    d0 = lud_initial(config.truth, config.initial_state, u_init)
    return initial_estimate(aux, e1_0, e2_0) - d0


@dataclass
class SpResult:
    t: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    dtilde: np.ndarray


def run_sp_form(config: SimConfig) -> SpResult:
    aux = config.aux
    if aux is None:
        raise PreconditionError("singular-perturbation form needs (kp, kd, T)")
    form = sp_form(aux, config.truth)
    table = _StageTable(config)
    ud = sp_forcing(config, table).tolist()
    kp, kd = aux.kp, aux.kd
    fast = form.A2 / form.T
    b21, b22 = float(form.B2[0]), float(form.B2[1])

    def rhs(t, x):
        e1, e2, dt_ = x
        return (e2, -kp * e1 - kd * e2 + dt_, fast * dt_ + b21 * e1 + b22 * e2 - ud[table.index(t)])

    e1_0, e2_0 = initial_errors(config)
    t, X = integrate(rhs, (e1_0, e2_0, initial_lud_error(config)), 0.0,
                     config.t_end, config.step)
    return SpResult(t, X[:, 0], X[:, 1], X[:, 2])


def run_reduced(config: SimConfig) -> np.ndarray:
    """Slow model e*' = A1 e*, e*(0) = e0, on the simulation grid (N+1, 2)."""
    aux = config.aux
    if aux is None:
        raise PreconditionError("reduced model needs (kp, kd, T)")
    return reduced_solution(aux.kp, aux.kd, initial_errors(config), config.step,
                            config.n_steps)


def reduced_solution(kp: float, kd: float, e0, dt: float, n_steps: int) -> np.ndarray:
    A1 = np.array([[0.0, 1.0], [-kp, -kd]])
    Phi = expm(A1 * dt)
    out = np.empty((n_steps + 1, 2))
    x = np.asarray(e0, dtype=float)
    out[0] = x
    for k in range(n_steps):
        x = Phi @ x
        out[k + 1] = x
    return out


def boundary_layer(b: float, dtilde0: float, tau):
    if not 1.0 + b > 0:
        raise PreconditionError("boundary layer needs 1 + b > 0")
    return dtilde0 * np.exp(-(1.0 + b) * np.asarray(tau, dtype=float))


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------


def _tail_start(t: np.ndarray, fraction: float) -> int:
    return int(np.searchsorted(t, t[-1] * (1.0 - fraction) - 1e-12))


def measure_ub(result, tail_fraction: float = DEFAULT_TAIL_FRACTION,
               signal: np.ndarray | None = None) -> UBMeasurement:
    """Ultimate bound of |q~| over the final ``tail_fraction`` of the run.

    The run counts as settled when the last two equally long windows agree
    within 5 %, or when the error is still shrinking and already below 1e-6
    (exponential convergence to zero). t_epsilon is the first time after
    which |q~| stays within 1.05 epsilon.
    """
    t = result.t
    x = np.abs(result.e1 if signal is None else signal)
    i0 = _tail_start(t, tail_fraction)
    i_prev = _tail_start(t, 2 * tail_fraction)
    eps = float(np.max(x[i0:]))
    prev = float(np.max(x[i_prev:i0 + 1]))
    agree = abs(eps - prev) <= SETTLE_RTOL * max(eps, prev)
    vanishing = eps <= prev and eps <= SETTLE_ATOL
    settled = agree or vanishing
    above = np.nonzero(x > 1.05 * eps)[0]
    t_eps = float(t[0]) if above.size == 0 else float(t[min(above[-1] + 1, len(t) - 1)])
    msg = "" if settled else (
        f"tail windows disagree ({prev:.4g} vs {eps:.4g}); increase t_end"
    )
    return UBMeasurement(eps, t_eps, settled, prev, msg)


def peak_estimate(result: SimResult, layers: float = 5.0) -> float:
    """max |d^| over the initial layer t <= layers * T."""
    T = result.config.aux.T
    mask = result.t <= layers * T + 1e-12
    return float(np.max(np.abs(result.dhat[mask])))


# ---------------------------------------------------------------------------
# O(T) study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyRow:
    T: float
    gapE: float
    gapD: float
    ubE: float
    ubD: float
    ubQ: float
    ratio_prev: float | None


@dataclass(frozen=True)
class StudyResult:
    rows: tuple[StudyRow, ...]
    slope: float
    r_squared: float


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least-squares slope of y = k x and its R^2.

    Without an intercept the coefficient of determination is taken against
    the uncentred total sum of squares, sum(y^2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - k * x) ** 2))
    return k, 1.0 - ss_res / float(y @ y)


def o_of_T_study(template: SimConfig, T_list) -> StudyResult:
    """Distance of the full loop from its slow and fast approximations per T.

    gapE = sup_t ||e - e*||, gapD = sup_{t >= 5T} |d~ - y(t/T)|; ubE / ubD
    are tail maxima of ||e|| and |d~|, ubQ the ultimate bound of |q~|.
    """
    rows = []
    prev_gap = None
    for T in T_list:
        cfg = template.with_T(float(T))
        res = run_closed_loop(cfg)
        e = np.column_stack([res.e1, res.e2])
        e_star = run_reduced(cfg)
        gapE = float(np.max(np.linalg.norm(e - e_star, axis=1)))
        y = boundary_layer(cfg.truth.b, float(res.dtilde[0]), res.t / T)
        late = res.t >= 5.0 * T
        gapD = float(np.max(np.abs(res.dtilde[late] - y[late])))
        i0 = _tail_start(res.t, cfg.tail_fraction)
        ubE = float(np.max(np.linalg.norm(e[i0:], axis=1)))
        ubD = float(np.max(np.abs(res.dtilde[i0:])))
        ratio = None if prev_gap is None else gapE / prev_gap
        rows.append(StudyRow(float(T), gapE, gapD, ubE, ubD, res.ub.epsilon, ratio))
        prev_gap = gapE
    if len(rows) >= 2:
        slope, r2 = fit_through_origin([r.T for r in rows], [r.gapE for r in rows])
    else:
        slope, r2 = (rows[0].gapE / rows[0].T if rows else math.nan), math.nan
    return StudyResult(tuple(rows), slope, r2)
