from __future__ import annotations

import json
import math

import pytest

from feedershare import Method, Scheme, Strategy, run_combinations, write_reports
from feedershare.cli import EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from feedershare.ingestion import SyntheticSpec, generate_synthetic
from feedershare.reporting import combination_order


@pytest.fixture(scope="module")
def scenario():
    return generate_synthetic(SyntheticSpec(participants=6, feeders=3, days=1, seed=13))


@pytest.fixture(scope="module")
def reports(scenario):
    profiles, config = scenario
    return run_combinations(profiles, config, combination_order())


class TestReportStructure:
    def test_twelve_combinations_in_order(self, reports):
        assert len(reports) == 12
        keys = [(r.strategy, r.scheme, r.method) for r in reports]
        assert keys == combination_order()
        assert keys[0] == (Strategy.FEEDER_AWARE, Scheme.EQUAL, Method.DYNAMIC)

    def test_participant_rows_sum_to_feeder_rows(self, reports):
        for report in reports:
            for report_field in ("imported_kwh", "shared_kwh", "exported_kwh",
                                 "revenue_increase_eur", "cost_reduction_eur", "total_benefit_eur"):
                total_from_participants = math.fsum(
                    getattr(row, report_field) for row in report.participants.values()
                )
                total_from_feeders = math.fsum(
                    getattr(row, report_field) for row in report.feeders.values()
                )
                community_value = getattr(report.community, report_field)
                assert total_from_participants == pytest.approx(community_value, rel=1e-9, abs=1e-9)
                assert total_from_feeders == pytest.approx(community_value, rel=1e-9, abs=1e-9)

    def test_maximal_rows_identical(self, reports):
        for strategy in Strategy:
            rows = [
                r.community
                for r in reports
                if r.strategy == strategy
                and (r.scheme, r.method)
                in {
                    (Scheme.PROPORTIONAL, Method.DYNAMIC),
                    (Scheme.RANK, Method.DYNAMIC),
                    (Scheme.RANK, Method.STATIC),
                }
            ]
            assert len(rows) == 3
            for row in rows[1:]:
                assert row.imported_kwh == pytest.approx(rows[0].imported_kwh, rel=1e-9)
                assert row.shared_kwh == pytest.approx(rows[0].shared_kwh, rel=1e-9)
                assert row.exported_kwh == pytest.approx(rows[0].exported_kwh, rel=1e-9)


class TestWriteReports:
    def test_files_written_and_deterministic(self, tmp_path, scenario, reports):
        profiles, config = scenario
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        write_reports(reports, out1, config, 1440, 1.0)
        write_reports(reports, out2, config, 1440, 2.0)
        for name in ("community.csv", "feeders.csv", "participants.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

        community = (out1 / "community.csv").read_text().splitlines()
        assert community[0].startswith("strategy,scheme,method,imported_mwh")
        assert len(community) == 13  # header + 12 combos

        run1 = json.loads((out1 / "run.json").read_text())
        run2 = json.loads((out2 / "run.json").read_text())
        # Everything except timings is reproducible.
        for doc in (run1, run2):
            doc.pop("timings")
            for combo in doc["combinations"]:
                combo.pop("timing_seconds")
        assert run1 == run2
        assert run1["intervals"] == 1440
        assert {c["strategy"] for c in run1["combinations"]} == {
            "feeder-aware",
            "feeder-agnostic",
        }
        debug = run1["combinations"][0]["debug"]
        assert debug["community_cost_other_discounted_eur"] <= debug["community_cost_eur"]


class TestCli:
    @pytest.fixture()
    def workdir(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--participants", "5",
                     "--feeders", "2", "--days", "1", "--seed", "3"]) == EXIT_OK
        return tmp_path

    def test_simulate_writes_reports(self, workdir, capsys):
        out = workdir / "reports"
        code = main([
            "simulate", "--config", str(workdir / "config.json"),
            "--data", str(workdir / "data.csv"),
            "--strategy", "both", "--scheme", "all", "--method", "both",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = (out / "community.csv").read_text().splitlines()
        assert len(lines) == 13
        assert "feeder-aware/equal/dynamic" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, workdir):
        args = [
            "simulate", "--config", str(workdir / "config.json"),
            "--data", str(workdir / "data.csv"), "--scheme", "all",
        ]
        assert main(args + ["--out", str(workdir / "o1")]) == EXIT_OK
        assert main(args + ["--out", str(workdir / "o2")]) == EXIT_OK
        for name in ("community.csv", "feeders.csv", "participants.csv"):
            assert (workdir / "o1" / name).read_bytes() == (workdir / "o2" / name).read_bytes()

    def test_selection_defaults_to_config(self, workdir):
        out = workdir / "single"
        code = main([
            "simulate", "--config", str(workdir / "config.json"),
            "--data", str(workdir / "data.csv"), "--out", str(out),
        ])
        assert code == EXIT_OK
        assert len((out / "community.csv").read_text().splitlines()) == 2

    def test_bad_config_is_validation_error(self, workdir, capsys):
        bad = workdir / "bad.json"
        bad.write_text('{"participants": [], "nonsense": 1}')
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", str(bad), "--data", str(workdir / "data.csv"),
                  "--out", str(workdir / "x")])
        assert exc.value.code == EXIT_VALIDATION
        errors = json.loads(capsys.readouterr().err)
        assert "errors" in errors

    def test_bad_data_is_validation_error(self, workdir, capsys):
        bad = workdir / "bad.csv"
        bad.write_text("timestamp,participant_id,generation_kwh,consumption_kwh\n"
                       "2020-01-01T00:00:00,NOPE,0,0.1\n")
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", str(workdir / "config.json"),
                  "--data", str(bad), "--out", str(workdir / "x")])
        assert exc.value.code == EXIT_VALIDATION
        payload = json.loads(capsys.readouterr().err)
        assert any("NOPE" in e for e in payload["errors"])

    def test_usage_error_is_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", "c.json"])  # missing required flags
        assert exc.value.code == EXIT_USAGE

    def test_unknown_scheme_is_usage_error(self, workdir):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--config", str(workdir / "config.json"),
                  "--data", str(workdir / "data.csv"), "--scheme", "fair",
                  "--out", str(workdir / "x")])
        assert exc.value.code == EXIT_USAGE

    def test_verify_passes_on_clean_scenario(self, workdir, capsys):
        code = main(["verify", "--config", str(workdir / "config.json"),
                     "--data", str(workdir / "data.csv")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_verify_consumers_only_scenario(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path), "--participants", "4",
                     "--feeders", "2", "--days", "1", "--seed", "8",
                     "--consumers-only"]) == EXIT_OK
        code = main(["verify", "--config", str(tmp_path / "config.json"),
                     "--data", str(tmp_path / "data.csv")])
        assert code == EXIT_OK
        out = tmp_path / "reports"
        assert main(["simulate", "--config", str(tmp_path / "config.json"),
                     "--data", str(tmp_path / "data.csv"), "--scheme", "all",
                     "--method", "both", "--strategy", "both",
                     "--out", str(out)]) == EXIT_OK
        for line in (out / "community.csv").read_text().splitlines()[1:]:
            shared_mwh = line.split(",")[4]
            assert float(shared_mwh) == 0.0

    def test_verify_detects_injected_fault(self, workdir, capsys):
        patch = workdir / "patch.json"
        patch.write_text(json.dumps({
            "interval": 720, "participant": "H2",
            "field": "allocated_same", "delta_kwh": 0.25,
        }))
        code = main(["verify", "--config", str(workdir / "config.json"),
                     "--data", str(workdir / "data.csv"),
                     "--strategy", "feeder-aware", "--scheme", "equal",
                     "--method", "dynamic", "--corrupt", str(patch)])
        assert code == EXIT_INVARIANT
        assert "FAIL" in capsys.readouterr().out
