"""Command-line front end.

Exit codes: 0 success, 1 usage / parse error, 2 precondition violation,
3 instability escape during simulation.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import analysis, experiments, sim
from .errors import PreconditionError, SimulationDiverged
from .gainmap import AuxParams, PidGains, forward_map, inverse_map, jacobian
from .plant import PlantParams, disturbance_preset

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _add_aux(p, required=False):
    p.add_argument("--kp", type=float, required=required)
    p.add_argument("--kd", type=float, required=required)
    p.add_argument("--T", type=float, required=required)


def _add_gains(p, required=False):
    p.add_argument("--KP", type=float, required=required)
    p.add_argument("--KI", type=float, required=required)
    p.add_argument("--KD", type=float, required=required)


def _add_truth(p):
    p.add_argument("--a1", type=float, default=0.0)
    p.add_argument("--a2", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.0)


def _truth(args, w=None) -> PlantParams:
    kw = {} if w is None else {"w": w}
    return PlantParams(args.a1, args.a2, args.b, **kw)


def _gains_or_aux(args):
    """Resolve (gains, aux-or-None) from either flag family."""
    if None not in (args.kp, args.kd, args.T):
        aux = AuxParams(args.kp, args.kd, args.T)
        return forward_map(aux), aux
    if None not in (args.KP, args.KI, args.KD):
        return PidGains(args.KP, args.KI, args.KD), None
    raise PreconditionError("give either --kp --kd --T or --KP --KI --KD")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_map(args) -> int:
    g = forward_map(AuxParams(args.kp, args.kd, args.T))
    print(f"KP={_fmt(g.KP)} KI={_fmt(g.KI)} KD={_fmt(g.KD)}")
    return EXIT_OK


def cmd_invert(args) -> int:
    res = inverse_map(PidGains(args.KP, args.KI, args.KD))
    print(f"cubic p(T) case {res.cubic.case}, discriminant {res.cubic.discriminant:.6g}")
    for i, c in enumerate(res.candidates, 1):
        flag = "admissible" if c.admissible else "inadmissible (kd <= 0)"
        print(f"candidate {i}: kp={_fmt(c.kp)} kd={_fmt(c.kd)} T={_fmt(c.T)} {flag}")
    if not res.admissible:
        print("no admissible decomposition with kp > 0, kd > 0")
    return EXIT_OK


def cmd_jacobian(args) -> int:
    J = jacobian(AuxParams(args.kp, args.kd, args.T)).matrix
    print("rows KP, KD, KI; columns kp, kd, T")
    for name, row in zip(("KP", "KD", "KI"), J):
        print(f"{name}: " + " ".join(f"{v: .10g}" for v in row))
    return EXIT_OK


def _threshold_text(T_bar: float) -> str:
    return "all tested T" if math.isinf(T_bar) else f"{T_bar:.6g}"


def cmd_stability(args) -> int:
    truth = _truth(args)
    gains, aux = _gains_or_aux(args)
    verdict = analysis.routh_condition(gains, truth)
    M = analysis.closed_loop_matrix(gains, truth)
    eigs = analysis.eigenvalues(M)
    print(f"gains KP={gains.KP:g} KI={gains.KI:g} KD={gains.KD:g}")
    print(f"routh: {'stable' if verdict else 'unstable'}")
    print(f"hurwitz (eigenvalues): {analysis.is_hurwitz(M)}")
    print("eigenvalues: " + ", ".join(f"{complex(z):.6g}" for z in eigs))
    pairs = [(aux.kp, aux.kd)] if aux else [(c.kp, c.kd) for c in inverse_map(gains).admissible]
    rng = (args.T_min, args.T_max)
    for kp, kd in pairs:
        try:
            T_bar = analysis.find_T_bar(kp, kd, truth, rng)
            text = _threshold_text(T_bar)
        except PreconditionError as exc:
            text = f"none ({exc})"
        print(f"T_bar (kp={kp:g}, kd={kd:g}): {text}")
    return EXIT_OK


def cmd_lyapunov_bound(args) -> int:
    truth = _truth(args)
    gains, _ = _gains_or_aux(args)
    rep = analysis.ultimate_bound(analysis.closed_loop_matrix(gains, truth),
                                  args.u_inf, args.theta)
    np.set_printoptions(precision=10)
    print("P =")
    print(rep.P)
    print(f"lambda_min={rep.lam_min:.10g} lambda_max={rep.lam_max:.10g}")
    print(f"residual={rep.residual:.3g} theta={rep.theta} u_inf={rep.u_inf}")
    print(f"ultimate_bound={rep.bound:.10g}")
    return EXIT_OK


def _config_from_args(args):
    if args.config:
        data = experiments.load_config_file(args.config)
    elif args.preset:
        data = experiments.preset(args.preset)
    else:
        data = {}
    if None not in (args.kp, args.kd, args.T):
        data["controller"] = {"kp": args.kp, "kd": args.kd, "T": args.T}
    elif None not in (args.KP, args.KI, args.KD):
        data["controller"] = {"KP": args.KP, "KI": args.KI, "KD": args.KD}
    truth = dict(data.get("truth", {}))
    for key in ("a1", "a2", "b"):
        if getattr(args, key) is not None:
            truth[key] = getattr(args, key)
    data["truth"] = truth
    for flag, key in (("disturbance", "disturbance"), ("disturbance_scale", "disturbance_scale"),
                      ("trajectory", "trajectory"), ("t_end", "t_end"), ("dt", "dt"),
                      ("path", "path"), ("tail_fraction", "tail_fraction")):
        val = getattr(args, flag)
        if val is not None:
            data[key] = val
    if "controller" not in data:
        raise PreconditionError("no controller given; use --preset, --config or gain flags")
    return experiments.build_config(data)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    res = sim.run_closed_loop(cfg)
    if args.out:
        experiments.write_result_csv(res, args.out)
    summ = experiments.summary(res)
    text = json.dumps(summ, indent=2)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_table1(args) -> int:
    rep = experiments.table1(args.disturbance_scale)
    print(experiments.format_table1(rep))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rep.to_dict(), fh, indent=2)
            fh.write("\n")
    return EXIT_OK


STUDY_COLUMNS = ("T", "gapE", "gapD", "ubE", "ubD", "ratio_prev")


def format_study_csv(study: sim.StudyResult) -> str:
    lines = [",".join(STUDY_COLUMNS)]
    for r in study.rows:
        vals = [r.T, r.gapE, r.gapD, r.ubE, r.ubD]
        ratio = "" if r.ratio_prev is None else _fmt(r.ratio_prev)
        lines.append(",".join(_fmt(v) for v in vals) + "," + ratio)
    return "\n".join(lines) + "\n"


def cmd_sp_study(args) -> int:
    T_list = list(args.T_list)
    if any(b >= a for a, b in zip(T_list, T_list[1:])):
        raise PreconditionError("T list must be strictly decreasing")
    data = experiments.preset("sp-study")
    data["controller"].update(kp=args.kp, kd=args.kd)
    data["initial_error"] = [args.e1, -args.kd * args.e1] if args.e2 is None else [args.e1, args.e2]
    if args.disturbance:
        data["disturbance"] = args.disturbance
    template = experiments.build_config(data)
    for T in T_list:
        if not analysis.hurwitz_at(args.kp, args.kd, T, template.truth):
            raise PreconditionError(f"closed loop is not stable at T={T}")
    study = sim.o_of_T_study(template, T_list)
    text = format_study_csv(study)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    print(f"# slope={study.slope:.6g} r_squared={study.r_squared:.6g}")
    return EXIT_OK


def cmd_sweep_T(args) -> int:
    truth = _truth(args, disturbance_preset(args.disturbance, args.disturbance_scale))
    T_list = args.T_list or np.geomspace(args.T_max, args.T_min, args.num).tolist()
    data = experiments.preset("table1-P1-d2")
    data["truth"] = {"a1": args.a1, "a2": args.a2, "b": args.b}
    data["disturbance"] = args.disturbance
    data["disturbance_scale"] = args.disturbance_scale
    header = ("T", "KP", "KI", "KD", "hurwitz", "ultimate_bound", "settled")
    lines = [",".join(header)]
    for T in T_list:
        aux = AuxParams(args.kp, args.kd, float(T))
        g = forward_map(aux)
        ok = analysis.hurwitz_at(aux.kp, aux.kd, aux.T, truth)
        ub, settled = math.nan, False
        if ok:
            data["controller"] = {"kp": aux.kp, "kd": aux.kd, "T": aux.T}
            data["t_end"] = args.t_end
            res = sim.run_closed_loop(experiments.build_config(data))
            ub, settled = res.ub.epsilon, res.ub.settled
        lines.append(",".join([_fmt(T), _fmt(g.KP), _fmt(g.KI), _fmt(g.KD),
                               str(int(ok)), _fmt(ub), str(int(settled))]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pidmap", description="PID gain mapping, analysis and simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("map", help="(kp, kd, T) -> (KP, KI, KD)")
    _add_aux(p, required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("invert", help="(KP, KI, KD) -> all (kp, kd, T)")
    _add_gains(p, required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("jacobian", help="partial derivatives of the gain map")
    _add_aux(p, required=True)
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("stability", help="Routh verdict, eigenvalues, stable-T threshold")
    _add_aux(p)
    _add_gains(p)
    _add_truth(p)
    p.add_argument("--T-min", type=float, default=analysis.DEFAULT_T_RANGE[0])
    p.add_argument("--T-max", type=float, default=analysis.DEFAULT_T_RANGE[1])
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("lyapunov-bound", help="Lyapunov-based ultimate bound")
    _add_aux(p)
    _add_gains(p)
    _add_truth(p)
    p.add_argument("--u-inf", type=float, required=True, help="sup-norm of the disturbance input")
    p.add_argument("--theta", type=float, default=analysis.DEFAULT_THETA)
    p.set_defaults(func=cmd_lyapunov_bound)

    p = sub.add_parser("simulate", help="closed-loop simulation to CSV + JSON summary")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(experiments.PRESETS))
    src.add_argument("--config", help="JSON config file")
    _add_aux(p)
    _add_gains(p)
    p.add_argument("--a1", type=float)
    p.add_argument("--a2", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--disturbance")
    p.add_argument("--disturbance-scale", type=float)
    p.add_argument("--trajectory")
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--tail-fraction", type=float)
    p.add_argument("--path", choices=("raw", "decomposed"))
    p.add_argument("--out", help="CSV time series")
    p.add_argument("--summary", help="JSON summary file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table1", help="reproduce the P1-P3 simulation table")
    p.add_argument("--disturbance-scale", type=float, default=0.345)
    p.add_argument("--json", help="write the report as JSON")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("sp-study", help="O(T) convergence to the slow/fast approximations")
    p.add_argument("--T-list", type=float, nargs="+", default=list(experiments.SP_STUDY_T))
    p.add_argument("--kp", type=float, default=1.0)
    p.add_argument("--kd", type=float, default=2.0)
    p.add_argument("--e1", type=float, default=1.0, help="initial position error")
    p.add_argument("--e2", type=float, help="initial velocity error (default -kd*e1)")
    p.add_argument("--disturbance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sp_study)

    p = sub.add_parser("sweep-T", help="ultimate bound over a range of T")
    p.add_argument("--kp", type=float, default=1.0)
    p.add_argument("--kd", type=float, default=2.0)
    _add_truth(p)
    p.add_argument("--T-list", type=float, nargs="+")
    p.add_argument("--T-min", type=float, default=0.025)
    p.add_argument("--T-max", type=float, default=0.4)
    p.add_argument("--num", type=int, default=5)
    p.add_argument("--disturbance", default="d2-elevation")
    p.add_argument("--disturbance-scale", type=float)
    p.add_argument("--t-end", type=float, default=60.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep_T)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SimulationDiverged as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
