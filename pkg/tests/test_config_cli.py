import csv
import io
import json

import numpy as np
import pytest

from floquet_metrology import cli, config, runner
from floquet_metrology.errors import CapacityError, ConfigError

BUNDLED = sorted(config.bundled_scenarios())


def rows_without_timing(csv_text):
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    for r in rows:
        r.pop("wall_ms")
    return rows


class TestScenarioFiles:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_round_trip_is_fixed_point(self, name):
        sc = config.load_scenario(name)
        text = config.dump_scenario(sc)
        again = config.parse_scenario(text)
        assert again == sc
        assert config.dump_scenario(again) == text

    def test_overrides(self):
        sc = config.load_scenario("qubit_floquet_desk", ["control.omega=1000", "grid.periods=[0, 10]"])
        assert sc.control.omega == 1000.0
        assert sc.grid.periods == (0, 10)

    @pytest.mark.parametrize("override", [
        "system.bogus=1",
        "grid.t_f=[2, 1]",
        "grid.t_f=[]",
        "system.Delta=.nan",
        "control.kind=magic",
        "initial_state=ghz",
        "sweep.n=[3, 3]",
    ])
    def test_rejects_invalid(self, override):
        with pytest.raises(ConfigError):
            config.load_scenario("qubit_uncontrolled", [override])

    def test_both_afm_rejected(self):
        with pytest.raises(ConfigError):
            config.load_scenario("qubit_floquet_desk", ["control.amplitude=afm", "control.omega=afm"])

    def test_unknown_file(self):
        with pytest.raises(ConfigError):
            config.load_scenario("no_such_scenario")

    def test_hash_tracks_content(self):
        a = config.load_scenario("qubit_uncontrolled")
        b = config.load_scenario("qubit_uncontrolled", ["seed=1"])
        assert a.config_hash() == config.load_scenario("qubit_uncontrolled").config_hash()
        assert a.config_hash() != b.config_hash()


class TestRuns:
    def test_zero_time_gives_zero(self):
        sc = config.load_scenario("qubit_floquet_desk", ["grid.periods=[0]"])
        rec = runner.run_sweep_time(sc).records[0]
        assert rec["qfi"] == 0.0 and rec["qfi_ratio"] == 0.0

    def test_field_only_chain_is_exact(self):
        report = runner.run_sweep_n(config.load_scenario("chain_field_only"))
        t_f = report.summary["t_f"]
        for r in report.records:
            assert r["qfi"] == pytest.approx(r["n"] ** 2 * t_f ** 2 / 4, rel=1e-12)
            assert r["qfi_ratio"] == pytest.approx(1.0, abs=1e-12)
        assert report.summary["fitted_exponent"] == pytest.approx(2.0, abs=1e-9)

    def test_uncontrolled_qubit_does_not_reach_heisenberg(self):
        """Static H = (lam Z + Delta X)/2: the ratio tends to lam^2 / (lam^2 + Delta^2)."""
        report = runner.run_sweep_time(config.load_scenario("qubit_uncontrolled"), want_residual=False)
        ratios = [r["qfi_ratio"] for r in report.records if r["t_f"] > 0]
        assert max(ratios[2:]) < 0.8
        assert ratios[-1] == pytest.approx(0.5, abs=0.01)
        # oscillating and bounded spread: eigenvalue gap times t_f plus a bounded part
        t = np.array([r["t_f"] for r in report.records])
        spread = np.array([r["mu_plus"] - r["mu_minus"] for r in report.records])
        assert np.all(np.abs(spread - t / np.sqrt(2)) <= 1.0 + 1e-9)

    def test_sweep_n_capacity(self):
        sc = config.load_scenario("chain_field_only", ["sweep.n=[3, 13]"])
        with pytest.raises(CapacityError):
            runner.run_sweep_n(sc)

    def test_optimize_zero_iterations(self):
        sc = config.load_scenario("qubit_restricted_optimize", ["control.iterations=0", "grid.dt=0.1"])
        report = runner.run_optimize(sc)
        assert report.summary["final_qfi"] == pytest.approx(report.summary["baseline_qfi"], rel=1e-12)

    def test_optimize_beats_baseline(self):
        sc = config.load_scenario("qubit_restricted_optimize", ["control.iterations=30", "grid.dt=0.1"])
        report = runner.run_optimize(sc)
        assert report.summary["final_qfi"] >= report.summary["baseline_qfi"]
        assert report.summary["gradient_check_deviation"] <= 1e-4

    @pytest.mark.parametrize("name", ["qubit_floquet_desk", "qubit_pang_jordan", "chain_floquet_time",
                                      "qubit_uncontrolled"])
    def test_ratio_never_exceeds_one(self, name):
        report = runner.run_sweep_time(config.load_scenario(name))
        assert all(r["qfi_ratio"] <= 1 + 1e-9 for r in report.records)

    def test_pulses_reported(self):
        sc = config.load_scenario("qubit_pang_jordan")
        rec = runner.run_sweep_time(sc).records[-1]
        assert rec["events"] == []
        assert rec["residual_max"] <= 1e-6


class TestDeterminism:
    @pytest.mark.parametrize("name,kind", [("qubit_floquet_desk", "sweep-time"), ("chain_field_only", "sweep-n"),
                                           ("qubit_pang_jordan", "sweep-time")])
    def test_identical_csv(self, name, kind, tmp_path):
        texts = []
        for k in range(2):
            out = tmp_path / str(k)
            assert cli.main([kind, name, "--out", str(out)]) == 0
            texts.append((out / f"{name}.csv").read_text())
        assert rows_without_timing(texts[0]) == rows_without_timing(texts[1])
        assert list(csv.DictReader(io.StringIO(texts[0])))[0].keys() == {
            "sweep_value", "qfi", "qfi_ratio", "mu_plus", "mu_minus", "residual_max", "steps", "wall_ms"}

    def test_workers_do_not_change_results(self):
        sc = config.load_scenario("chain_field_only")
        serial = runner.run_sweep_n(sc, workers=1)
        pooled = runner.run_sweep_n(sc, workers=2)
        assert rows_without_timing(serial.csv_text()) == rows_without_timing(pooled.csv_text())

    def test_report_files(self, tmp_path):
        assert cli.main(["optimize", "qubit_restricted_optimize", "--set", "control.iterations=2",
                         "--set", "grid.dt=0.1", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "qubit_restricted_optimize.report.json").read_text())
        assert report["provenance"]["config_hash"]
        assert (tmp_path / "plot_qubit_restricted_optimize.py").exists()
        coeffs = (tmp_path / "qubit_restricted_optimize_coefficients.csv").read_text().splitlines()
        assert coeffs[0] == "tau,c_1,c_2"


class TestCli:
    def test_afm(self, capsys):
        assert cli.main(["afm"]) == 0
        assert capsys.readouterr().out.strip() == "omega = 1826.666667"

    def test_afm_single_harmonic(self, capsys):
        assert cli.main(["afm", "--c", "10", "--Delta", "2"]) == 0
        assert capsys.readouterr().out.strip() == "omega = 400.000000"

    def test_afm_no_match(self, capsys):
        assert cli.main(["afm", "--c", "10", "--c-tilde", "0"]) == 1

    def test_bad_arguments_exit_one(self):
        with pytest.raises(SystemExit) as e:
            cli.main(["sweep-time"])
        assert e.value.code == 1

    def test_bad_config_exit_one(self, capsys):
        assert cli.main(["sweep-time", "qubit_uncontrolled", "--set", "grid.t_f=[3, 1]"]) == 1
        assert "ascending" in capsys.readouterr().err

    def test_numerical_failure_exit_two(self, capsys):
        # overflowing controls make the propagator non-finite
        code = cli.main(["optimize", "qubit_restricted_optimize", "--set", "control.init=random",
                         "--set", "control.init_scale=1e300", "--set", "control.iterations=2",
                         "--set", "grid.dt=0.1"])
        assert code == 2
        assert "non-finite" in capsys.readouterr().err

    def test_verify_passes(self, capsys):
        assert cli.main(["verify", "--pairs", "200"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_verify_mutation_fails(self, capsys):
        assert cli.main(["verify", "--pairs", "50", "--mutate", "flip-commutator-sign"]) == 3
        out = capsys.readouterr().out
        assert "FAIL" in out and "matching" in out

    def test_verify_capacity(self):
        assert cli.main(["verify", "--n-max", "14"]) == 1

    def test_list(self, capsys):
        assert cli.main(["scenarios"]) == 0
        assert "qubit_floquet_full_scale [long-running]" in capsys.readouterr().out
