"""Command-line front end, presets, config files and file output."""
import json
import math

import numpy as np
import pytest

from pidmap import experiments
from pidmap.cli import STUDY_COLUMNS, main
from pidmap.errors import PreconditionError
from pidmap.gainmap import AuxParams, forward_map
from pidmap.sim import SimResult, run_closed_loop


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestMappingCommands:
    def test_map(self, capsys):
        code, out, _ = run(capsys, "map", "--kp", "2", "--kd", "1.5", "--T", "0.1")
        assert code == 0
        assert "KP=17" in out and "KI=20" in out and "KD=11.5" in out

    def test_invert_two_candidates(self, capsys):
        code, out, _ = run(capsys, "invert", "--KP", "21", "--KI", "10", "--KD", "12")
        assert code == 0
        assert out.count("candidate ") == 2
        assert "T=0.1 " in out and "T=1.0 " in out

    def test_invert_requires_positive_KI(self, capsys):
        code, _, err = run(capsys, "invert", "--KP", "21", "--KI", "0", "--KD", "12")
        assert code == 2 and "KI > 0" in err

    def test_jacobian(self, capsys):
        code, out, _ = run(capsys, "jacobian", "--kp", "1", "--kd", "2", "--T", "0.1")
        assert code == 0
        rows = {line.split(":")[0]: [float(v) for v in line.split(":")[1].split()]
                for line in out.splitlines()[1:]}
        assert rows["KP"] == pytest.approx([1, 10, -200])
        assert rows["KD"] == pytest.approx([0, 1, -100])
        assert rows["KI"] == pytest.approx([10, 0, -100])

    def test_missing_argument_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["map", "--kp", "1"])
        assert info.value.code == 1

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 1

    def test_domain_violation(self, capsys):
        code, _, err = run(capsys, "map", "--kp", "1", "--kd", "2", "--T", "0")
        assert code == 2 and "T must be" in err


class TestStabilityCommands:
    def test_zero_truth(self, capsys):
        code, out, _ = run(capsys, "stability", "--KP", "21", "--KI", "10", "--KD", "12")
        assert code == 0
        assert "routh: stable" in out
        assert "all tested T" in out

    def test_threshold(self, capsys):
        code, out, _ = run(capsys, "stability", "--kp", "1", "--kd", "1", "--T", "0.1", "--a2", "5")
        assert code == 0
        value = float(out.strip().splitlines()[-1].split(":")[-1])
        assert value == pytest.approx(1 / (2 + 2 * math.sqrt(2)), rel=2e-4)

    def test_input_gain_rejected(self, capsys):
        code, _, err = run(capsys, "stability", "--KP", "21", "--KI", "10", "--KD", "12", "--b", "1.5")
        assert code == 2 and "1+b" in err

    def test_lyapunov_bound(self, capsys):
        code, out, _ = run(capsys, "lyapunov-bound", "--KP", "21", "--KI", "10", "--KD", "12",
                           "--u-inf", "0")
        assert code == 0 and "ultimate_bound=0" in out

    def test_lyapunov_bound_unstable(self, capsys):
        code, _, err = run(capsys, "lyapunov-bound", "--KP", "1", "--KI", "10", "--KD", "1",
                           "--u-inf", "1")
        assert code == 2 and "Hurwitz" in err


class TestSimulate:
    def test_csv_and_summary(self, capsys, tmp_path):
        csv, js = tmp_path / "r.csv", tmp_path / "s.json"
        code, out, _ = run(capsys, "simulate", "--preset", "table1-P1-d1", "--out", str(csv),
                           "--summary", str(js))
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "t,q,qdot,e1,e2,qI,u,u0,dhat,d,dtilde"
        assert len(lines) == 60001 + 1
        summ = json.loads(js.read_text())
        assert set(summ) >= {"ultimate_bound", "settling_time", "max_control", "max_dhat", "settled"}
        assert summ["ultimate_bound"] <= 1e-3 and summ["settled"] is True
        assert json.loads(out) == summ

    def test_zero_preset(self, capsys, tmp_path):
        csv = tmp_path / "z.csv"
        code, _, _ = run(capsys, "simulate", "--preset", "zero", "--t-end", "2", "--out", str(csv))
        assert code == 0
        data = experiments.read_csv(csv)
        for name, col in data.items():
            if name != "t":
                assert np.all(col == 0.0), name

    def test_overrides_and_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"preset": "table1-P3-d2", "t_end": 5}))
        code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--kp", "1", "--kd", "2",
                           "--T", "0.2", "--b", "0.1")
        assert code == 0
        assert "ultimate_bound" in json.loads(out)

    def test_unsettled_flag(self, capsys):
        code, out, _ = run(capsys, "simulate", "--preset", "table1-P3-d2", "--t-end", "3")
        assert code == 0
        summ = json.loads(out)
        assert summ["settled"] is False and "t_end" in summ["message"]

    def test_diverging_run(self, capsys):
        code, _, err = run(capsys, "simulate", "--preset", "zero", "--KP", "-5", "--KI", "1",
                           "--KD", "1", "--t-end", "60", "--trajectory", "heli-pitch")
        assert code == 3 and "diverged" in err

    def test_dt_too_coarse(self, capsys):
        code, _, err = run(capsys, "simulate", "--preset", "zero", "--dt", "0.1")
        assert code == 2

    def test_no_controller(self, capsys):
        code, _, err = run(capsys, "simulate", "--t-end", "1")
        assert code == 2 and "controller" in err


class TestStudyCommands:
    def test_single_T(self, capsys, tmp_path):
        out_file = tmp_path / "s.csv"
        code, out, _ = run(capsys, "sp-study", "--T-list", "0.2", "--out", str(out_file))
        assert code == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == ",".join(STUDY_COLUMNS)
        assert lines[1].endswith(",")
        assert len(lines) == 2

    def test_T_list_order(self, capsys):
        code, _, err = run(capsys, "sp-study", "--T-list", "0.1", "0.2")
        assert code == 2 and "decreasing" in err

    def test_sweep(self, capsys):
        code, out, _ = run(capsys, "sweep-T", "--T-list", "0.4", "0.1", "--t-end", "30")
        assert code == 0
        rows = [line.split(",") for line in out.splitlines()]
        assert rows[0][:5] == ["T", "KP", "KI", "KD", "hurwitz"]
        assert float(rows[1][5]) > float(rows[2][5]) > 0


class TestExperiments:
    def test_csv_round_trip_is_exact(self, tmp_path):
        data = experiments.preset("table1-P1-d2")
        data["t_end"] = 2.0
        res = run_closed_loop(experiments.build_config(data))
        path = tmp_path / "out.csv"
        experiments.write_result_csv(res, path)
        back = experiments.read_csv(path)
        assert list(back) == list(SimResult.CSV_COLUMNS)
        for name in SimResult.CSV_COLUMNS:
            assert np.array_equal(back[name], getattr(res, name)), name

    def test_presets_consistent_with_forward_map(self):
        for table_aux, table_gains in ((experiments.TABLE1_AUX, experiments.TABLE1_GAINS),
                                       (experiments.TABLE2_AUX, experiments.TABLE2_GAINS)):
            for label, aux in table_aux.items():
                assert forward_map(AuxParams(*aux)).as_tuple() == pytest.approx(table_gains[label],
                                                                               rel=1e-12)

    def test_unknown_preset(self):
        with pytest.raises(PreconditionError, match="known"):
            experiments.preset("nope")

    def test_preset_copies(self):
        a = experiments.preset("zero")
        a["controller"]["kp"] = 99
        assert experiments.preset("zero")["controller"]["kp"] == 1.0

    def test_initial_error_config(self):
        c = experiments.build_config(experiments.preset("sp-study"))
        from pidmap.sim import initial_errors
        assert initial_errors(c) == pytest.approx((1.0, -2.0))

    def test_explicit_signal_objects(self):
        c = experiments.build_config({
            "controller": {"KP": 21, "KI": 10, "KD": 12},
            "disturbance": {"kind": "sum-of-sinusoids", "amplitudes": [0.1, 0.2],
                            "frequencies": [1, 2]},
            "trajectory": {"constant": 3.0},
        })
        assert c.path == "raw"
        assert c.truth.w.amplitude_bound() == pytest.approx(0.3)
        assert c.trajectory.derivative(5.0, 0) == 3.0

    def test_malformed_config(self):
        with pytest.raises(PreconditionError):
            experiments.build_config({"truth": {}})
        with pytest.raises(PreconditionError):
            experiments.build_config({"controller": {"kp": 1}})

    def test_table1_report(self):
        rep = experiments.table1()
        assert rep.all_settled
        for row in rep.rows:
            assert forward_map(row.aux).as_tuple() == row.gains.as_tuple()
            assert row.ub_d1 <= 1e-3
        d = rep.to_dict()
        assert set(d["ratios"]) == {"P1/P3", "P2/P3"}
        text = experiments.format_table1(rep)
        assert "ratio P1/P3" in text and "(21, 10, 12)" in text
