"""Experiment presets, config files, and CSV/JSON emission.

A config is a JSON object such as::

    {
      "controller": {"kp": 1, "kd": 2, "T": 0.1},      # or {"KP":..,"KI":..,"KD":..}
      "truth": {"a1": 0, "a2": 0, "b": 0},
      "disturbance": "d2-elevation",                    # name or signal object
      "trajectory": "heli-elevation",                   # name or sinusoid-sum object
      "initial_state": [-25.7, 0.0],                    # or "initial_error": [e1, e2]
      "t_end": 60, "dt": null, "tail_fraction": 0.333, "path": "decomposed"
    }
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .gainmap import AuxParams, PidGains, forward_map
from .plant import (
    DisturbanceSignal,
    PlantParams,
    PlantState,
    ReferenceTrajectory,
    disturbance_preset,
    eval_reference,
    trajectory_preset,
)
from .sim import SimConfig, SimResult, run_closed_loop

TABLE1_AUX = {
    "P1": (1.0, 2.0, 0.1),
    "P2": (6.0, 4.0, 0.4),
    "P3": (1.0, 2.0, 0.4),
}
TABLE1_GAINS = {"P1": (21.0, 10.0, 12.0), "P2": (16.0, 15.0, 6.5), "P3": (6.0, 2.5, 4.5)}
# reference ultimate bounds under the cosine disturbance, degrees
TABLE1_UB_D2 = {"P1": 0.95, "P2": 1.11, "P3": 3.55}
TABLE2_AUX = {"P4": (2.0, 1.5, 0.5), "P5": (2.0, 1.5, 0.1)}
TABLE2_GAINS = {"P4": (5.0, 4.0, 3.5), "P5": (17.0, 20.0, 11.5)}

SP_STUDY_T = (0.2, 0.1, 0.05, 0.025)


def _heli(label: str, aux, dist: str) -> dict:
    return {
        "controller": dict(zip(("kp", "kd", "T"), aux)),
        "truth": {"a1": 0.0, "a2": 0.0, "b": 0.0},
        "disturbance": dist,
        "trajectory": "heli-elevation",
        "initial_state": [-25.7, 0.0],
    }


def _build_presets() -> dict[str, dict]:
    presets = {}
    for table in (TABLE1_AUX, TABLE2_AUX):
        for label, aux in table.items():
            for d in ("d1", "d2"):
                name = f"table{1 if table is TABLE1_AUX else 2}-{label}-{d}"
                presets[name] = _heli(label, aux, f"{d}-elevation")
    presets["zero"] = {
        "controller": {"kp": 1.0, "kd": 2.0, "T": 0.1},
        "truth": {"a1": 0.0, "a2": 0.0, "b": 0.0},
        "disturbance": "none",
        "trajectory": "zero",
        "initial_state": [0.0, 0.0],
    }
    # initial error on the slow manifold e2 = -kd e1, so d^(0) = 0
    presets["sp-study"] = {
        "controller": {"kp": 1.0, "kd": 2.0, "T": SP_STUDY_T[0]},
        "truth": {"a1": 0.0, "a2": 0.0, "b": 0.0},
        "disturbance": "d2-elevation",
        "trajectory": "heli-elevation",
        "initial_error": [1.0, -2.0],
    }
    return presets


PRESETS = _build_presets()


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise PreconditionError(f"unknown preset {name!r}; known: {known}") from None


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "preset" in data:
        base = preset(data.pop("preset"))
        base.update(data)
        data = base
    return data


def _disturbance(entry, scale=None) -> DisturbanceSignal:
    if isinstance(entry, str):
        return disturbance_preset(entry, scale)
    entry = dict(entry)
    for key in ("amplitudes", "frequencies", "phases", "times", "values"):
        if key in entry:
            entry[key] = tuple(float(v) for v in entry[key])
    return DisturbanceSignal(**entry)


def _trajectory(entry) -> ReferenceTrajectory:
    if isinstance(entry, str):
        return trajectory_preset(entry)
    if "constant" in entry:
        return ReferenceTrajectory.constant(float(entry["constant"]))
    return ReferenceTrajectory(
        offset=float(entry.get("offset", 0.0)),
        amplitudes=tuple(entry.get("amplitudes", ())),
        frequencies=tuple(entry.get("frequencies", ())),
        phases=tuple(entry.get("phases", ())),
    )


def _controller(entry) -> AuxParams | PidGains:
    if {"kp", "kd", "T"} <= entry.keys():
        return AuxParams(float(entry["kp"]), float(entry["kd"]), float(entry["T"]))
    if {"KP", "KI", "KD"} <= entry.keys():
        return PidGains(float(entry["KP"]), float(entry["KI"]), float(entry["KD"]))
    raise PreconditionError("controller needs either kp, kd, T or KP, KI, KD")


def build_config(data: dict) -> SimConfig:
    try:
        truth_entry = data.get("truth", {})
        truth = PlantParams(
            a1=float(truth_entry.get("a1", 0.0)),
            a2=float(truth_entry.get("a2", 0.0)),
            b=float(truth_entry.get("b", 0.0)),
            w=_disturbance(data.get("disturbance", "none"), data.get("disturbance_scale")),
        )
        traj = _trajectory(data.get("trajectory", "zero"))
        if "initial_error" in data:
            e1, e2 = (float(v) for v in data["initial_error"])
            qd0, qd1_0 = (float(v) for v in eval_reference(traj, 0.0)[:2])
            state0 = PlantState(qd0 - e1, qd1_0 - e2)
        else:
            state0 = PlantState(*(float(v) for v in data.get("initial_state", (0.0, 0.0))))
        return SimConfig(
            truth=truth,
            controller=_controller(data["controller"]),
            trajectory=traj,
            initial_state=state0,
            t_end=float(data.get("t_end", 60.0)),
            dt=None if data.get("dt") is None else float(data["dt"]),
            tail_fraction=float(data.get("tail_fraction", 1.0 / 3.0)),
            path=data.get("path", "decomposed"),
        )
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed config: {exc}") from exc


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def format_csv(header, columns) -> str:
    """Comma-separated rows with shortest round-trip float formatting."""
    lists = [np.asarray(c, dtype=float).tolist() for c in columns]
    lines = [",".join(header)]
    lines.extend(",".join(repr(v) for v in row) for row in zip(*lists))
    return "\n".join(lines) + "\n"


def write_csv(path, header, columns) -> None:
    Path(path).write_text(format_csv(header, columns), encoding="utf-8")


def read_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_result_csv(result: SimResult, path) -> None:
    write_csv(path, SimResult.CSV_COLUMNS, result.columns())


def _finite_max(arr) -> float | None:
    arr = np.abs(np.asarray(arr, dtype=float))
    return None if np.all(np.isnan(arr)) else float(np.nanmax(arr))


def summary(result: SimResult) -> dict:
    ub = result.ub
    out = {
        "ultimate_bound": ub.epsilon,
        "settling_time": ub.t_epsilon,
        "max_control": _finite_max(result.u),
        "max_dhat": _finite_max(result.dhat),
        "settled": ub.settled,
    }
    if ub.message:
        out["message"] = ub.message
    return out


# ---------------------------------------------------------------------------
# P1-P3 table reproduction
# ---------------------------------------------------------------------------


@dataclass
class Table1Row:
    label: str
    gains: PidGains
    aux: AuxParams
    ub_d1: float
    ub_d2: float
    settled: bool


@dataclass
class Table1Report:
    rows: list[Table1Row]
    ratios: dict[str, float] = field(default_factory=dict)
    reference_ratios: dict[str, float] = field(default_factory=dict)
    disturbance_scale: float = 0.345

    @property
    def all_settled(self) -> bool:
        return all(r.settled for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "disturbance_scale": self.disturbance_scale,
            "rows": [
                {
                    "label": r.label,
                    "gains": dict(zip(("KP", "KI", "KD"), r.gains.as_tuple())),
                    "aux": dict(zip(("kp", "kd", "T"), r.aux.as_tuple())),
                    "ub_d1": r.ub_d1,
                    "ub_d2": r.ub_d2,
                    "settled": r.settled,
                }
                for r in self.rows
            ],
            "ratios": self.ratios,
            "reference_ratios": self.reference_ratios,
            "all_settled": self.all_settled,
        }


def table1(disturbance_scale: float = 0.345) -> Table1Report:
    """Simulate P1-P3 under the constant and cosine elevation disturbances."""
    rows = []
    for label, aux_t in TABLE1_AUX.items():
        ubs = {}
        settled = True
        for d in ("d1", "d2"):
            data = preset(f"table1-{label}-{d}")
            data["disturbance_scale"] = disturbance_scale
            res = run_closed_loop(build_config(data))
            ubs[d] = res.ub.epsilon
            settled = settled and res.ub.settled
        aux = AuxParams(*aux_t)
        rows.append(Table1Row(label, forward_map(aux), aux, ubs["d1"], ubs["d2"], settled))
    by = {r.label: r for r in rows}
    ratios = {
        "P1/P3": by["P1"].ub_d2 / by["P3"].ub_d2,
        "P2/P3": by["P2"].ub_d2 / by["P3"].ub_d2,
    }
    ref = {
        "P1/P3": TABLE1_UB_D2["P1"] / TABLE1_UB_D2["P3"],
        "P2/P3": TABLE1_UB_D2["P2"] / TABLE1_UB_D2["P3"],
    }
    return Table1Report(rows, ratios, ref, disturbance_scale)


def format_table1(report: Table1Report) -> str:
    lines = [f"{'No.':<4}{'(KP, KI, KD)':<24}{'(kp, kd, T)':<20}{'UB(d1)':>12}{'UB(d2)':>12}"]
    for r in report.rows:
        g = "(%g, %g, %g)" % r.gains.as_tuple()
        a = "(%g, %g, %g)" % r.aux.as_tuple()
        lines.append(f"{r.label:<4}{g:<24}{a:<20}{r.ub_d1:>12.3e}{r.ub_d2:>12.5f}")
    for key, val in report.ratios.items():
        lines.append(f"ratio {key}: {val:.4f}  (reference {report.reference_ratios[key]:.4f})")
    if not report.all_settled:
        lines.append("warning: at least one run did not settle")
    return "\n".join(lines)
