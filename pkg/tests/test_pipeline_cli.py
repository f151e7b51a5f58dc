import json
import math

import numpy as np
import pytest

from echelon.cli import main
from echelon.pipeline import RunConfig, run
from echelon.scenario import dumps

from conftest import TANK_LIBRARY, write_battalion_inputs

# library variant for the doctrine-conflict flow: a four-tank company
# model plus a tight vehicle separation rule
SKIP_LIBRARY = {
    "types": TANK_LIBRARY["types"],
    "models": [
        {
            "name": "tank-company-quad",
            "type": "tank-company",
            "slots": [{"type": "tank", "min": 4, "max": 4}],
            "constraints": [{"slots": [0, 0], "d_min": 25, "d_max": 400}],
            "prior": 0.3,
        }
    ],
    "doctrine": {
        "min_separation": [{"a": "vehicle", "b": "vehicle", "meters": 40}],
        "max_heading_delta": [],
    },
}


def simulate_and_infer(paths, argv_extra=()):
    rc = main(
        [
            "simulate",
            str(paths["ground_truth"]),
            str(paths["noise"]),
            "--library",
            str(paths["library"]),
            "--out",
            str(paths["scenario"]),
        ]
    )
    assert rc == 0
    rc = main(["infer", "--config", str(paths["config"]), *argv_extra])
    return rc


def write_skip_scenario(tmp_path, lam=40.0, tau=0.1):
    lib_path = tmp_path / "library.json"
    lib_path.write_text(json.dumps(SKIP_LIBRARY))
    detections = [
        {"id": f"d{i}", "type": "T-72-tank", "x": 100.0 * i, "y": 0.0,
         "heading": 90.0, "lambda": lam, "time": 0.0}
        for i in range(4)
    ]
    detections.append(
        {"id": "d4", "type": "BMP", "x": 0.0, "y": 30.0, "heading": 90.0,
         "lambda": lam, "time": 0.0}
    )
    scenario = {
        "schema_version": 1,
        "scenario_id": "skip-flow",
        "detections": detections,
        "terrain": [
            {"id": "t0", "x": 150.0, "y": 0.0, "radius_m": 5000.0, "lambda": 5.0}
        ],
    }
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(dumps(scenario))
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(
        json.dumps(
            {
                "library": "library.json",
                "scenario": "scenario.json",
                "matcher": {"gather_radius": 1000, "min_fit": 0.2},
                "tau": tau,
                "seed": 0,
            }
        )
    )
    return cfg_path


class TestValidateCommand:
    def test_valid_library(self, tmp_path, capsys):
        p = tmp_path / "lib.json"
        p.write_text(json.dumps(TANK_LIBRARY))
        assert main(["validate", str(p)]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_cyclic_isa_exit_one(self, tmp_path, capsys):
        p = tmp_path / "lib.json"
        p.write_text(
            json.dumps(
                {
                    "types": [
                        {"name": "a", "level": "vehicle", "isa": "b"},
                        {"name": "b", "level": "vehicle", "isa": "a"},
                    ]
                }
            )
        )
        assert main(["validate", str(p)]) == 1
        assert "cyclic" in capsys.readouterr().err

    def test_missing_file_exit_two(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.json")]) == 2


class TestInferCommand:
    def test_end_to_end_battalion(self, tmp_path):
        paths = write_battalion_inputs(tmp_path)
        assert simulate_and_infer(paths) == 0
        report = json.loads(paths["report"].read_text())
        battalions = report["levels"]["battalion"]
        assert len(battalions) == 1
        assert battalions[0]["posterior"] > battalions[0]["prior"]
        assert len(report["levels"]["array"]) == 3
        assert report["conflicts"] == []

    def test_empty_scenario(self, tmp_path):
        paths = write_battalion_inputs(tmp_path)
        paths["scenario"].write_text(
            dumps(
                {
                    "schema_version": 1,
                    "scenario_id": "empty",
                    "detections": [],
                    "terrain": [],
                }
            )
        )
        assert main(["infer", "--config", str(paths["config"])]) == 0
        report = json.loads(paths["report"].read_text())
        assert all(not entries for entries in report["levels"].values())

    def test_byte_identical_reruns(self, tmp_path):
        paths = write_battalion_inputs(tmp_path)
        assert simulate_and_infer(paths) == 0
        first = paths["report"].read_bytes()
        assert main(["infer", "--config", str(paths["config"])]) == 0
        assert paths["report"].read_bytes() == first

    def test_unknown_detection_type_is_domain_error(self, tmp_path, capsys):
        paths = write_battalion_inputs(tmp_path)
        paths["scenario"].write_text(
            dumps(
                {
                    "schema_version": 1,
                    "scenario_id": "bad",
                    "detections": [
                        {"id": "d0", "type": "hovercraft", "x": 0, "y": 0,
                         "heading": 0, "lambda": 3.0, "time": 0.0}
                    ],
                    "terrain": [],
                }
            )
        )
        assert main(["infer", "--config", str(paths["config"])]) == 1
        assert "hovercraft" in capsys.readouterr().err

    def test_missing_config_exit_two(self, tmp_path):
        assert main(["infer", "--config", str(tmp_path / "nope.json")]) == 2

    def test_bad_lambda_is_domain_error(self, tmp_path, capsys):
        paths = write_battalion_inputs(tmp_path)
        paths["scenario"].write_text(
            dumps(
                {
                    "schema_version": 1,
                    "scenario_id": "bad",
                    "detections": [
                        {"id": "d0", "type": "tank", "x": 0, "y": 0,
                         "heading": 0, "lambda": -1.0, "time": 0.0}
                    ],
                    "terrain": [],
                }
            )
        )
        assert main(["infer", "--config", str(paths["config"])]) == 1
        assert "likelihood_ratio" in capsys.readouterr().err

    def test_report_to_stdout_without_out(self, tmp_path, capsys):
        paths = write_battalion_inputs(tmp_path)
        cfg = json.loads(paths["config"].read_text())
        del cfg["out"]
        paths["config"].write_text(json.dumps(cfg))
        paths["scenario"].write_text(
            dumps({"schema_version": 1, "scenario_id": "empty",
                   "detections": [], "terrain": []})
        )
        assert main(["infer", "--config", str(paths["config"])]) == 0
        out = capsys.readouterr().out
        assert '"schema_version"' in out

    def test_overrides(self, tmp_path, capsys):
        paths = write_battalion_inputs(tmp_path)
        out2 = tmp_path / "other.json"
        assert simulate_and_infer(paths, ("--out", str(out2), "--tau", "0.5")) == 0
        report = json.loads(out2.read_text())
        assert report["config"]["tau"] == 0.5


class TestSkipFlow:
    def test_skip_estimates_and_direct_accrual(self, tmp_path):
        cfg_path = write_skip_scenario(tmp_path)
        cfg = RunConfig.from_file(cfg_path)
        report = run(cfg)
        (conf,) = report["conflicts"]
        assert conf["level"] == "vehicle"
        assert conf["decision"] == "skip"
        assert set(conf["members"]) == {"v.d0", "v.d4"}
        assert conf["measure"] < 0.1
        assert list(conf["skip_error_estimates"]) == ["a0"]
        assert conf["skip_error_estimates"]["a0"] > 0.0
        company = report["levels"]["array"][0]
        assert company["direct_accrual"]
        statuses = {e["id"]: e["status"] for e in report["levels"]["vehicle"]}
        assert statuses["v.d0"] == "skipped" and statuses["v.d4"] == "skipped"

    def test_low_tau_resolves_instead(self, tmp_path):
        cfg_path = write_skip_scenario(tmp_path, tau=1e-9)
        report = run(RunConfig.from_file(cfg_path))
        (conf,) = report["conflicts"]
        assert conf["decision"] == "resolve"
        assert conf["consistent_sets"] is not None
        beliefs = {tuple(cs["members"]): cs["belief"] for cs in conf["consistent_sets"]}
        assert math.fsum(beliefs.values()) == pytest.approx(1.0, abs=1e-12)
        company = report["levels"]["array"][0]
        assert not company["direct_accrual"]


class TestCompanyLevelConflict:
    def test_overlapping_companies_resolved(self, tmp_path):
        # five tanks in a line admit three overlapping three-tank
        # companies; their shared vehicles force a company-level
        # conflict that resolves to mutually exclusive singletons
        lib_path = tmp_path / "library.json"
        lib_doc = json.loads(json.dumps(TANK_LIBRARY))
        lib_doc["models"][0]["slots"][0]["max"] = 3  # exactly three tanks
        lib_path.write_text(json.dumps(lib_doc))
        detections = [
            {"id": f"d{i}", "type": "T-72-tank", "x": 100.0 * i, "y": 0.0,
             "heading": 90.0, "lambda": 6.0, "time": 0.0}
            for i in range(5)
        ]
        scen = {"schema_version": 1, "scenario_id": "overlap",
                "detections": detections, "terrain": []}
        (tmp_path / "scenario.json").write_text(dumps(scen))
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "library": "library.json",
                    "scenario": "scenario.json",
                    "matcher": {"gather_radius": 1000, "min_fit": 0.2},
                    "tau": 0.1,
                    "seed": 0,
                }
            )
        )
        report = run(RunConfig.from_file(cfg_path))
        companies = report["levels"]["array"]
        assert len(companies) == 3
        (conf,) = report["conflicts"]
        assert conf["level"] == "array" and conf["decision"] == "resolve"
        assert len(conf["members"]) == 3
        # every factor equals the full company posterior here, so k is
        # the product of the three stored posteriors
        posts = {e["id"]: e["posterior"] for e in companies}
        sets = {tuple(cs["members"]): cs["belief"] for cs in conf["consistent_sets"]}
        assert all(len(m) == 1 for m in sets)  # pairwise conflicting
        assert math.fsum(sets.values()) == pytest.approx(1.0, abs=1e-12)
        assert math.fsum(posts.values()) == pytest.approx(1.0, abs=1e-12)


class TestNoisyEndToEnd:
    def test_noisy_battalion_runs_and_scores(self, tmp_path):
        from echelon.models import load_library
        from echelon.scenario import generate, load_ground_truth, load_noise_spec, score
        from conftest import battalion_ground_truth

        paths = write_battalion_inputs(tmp_path)
        lib = load_library(paths["library"].read_text())
        gt = load_ground_truth(battalion_ground_truth(), lib)
        noise = load_noise_spec(
            {
                "p_detect": 0.9,
                "false_alarm_density": 0.3,
                "location_jitter": 8.0,
                "misclassification": {"T-72-tank": {"T-72-tank": 0.85, "BMP": 0.15}},
                "seed": 5,
            }
        )
        scenario = generate(gt, noise, lib)
        paths["scenario"].write_text(dumps(scenario))
        cfg = RunConfig.from_file(paths["config"])
        cfg.matcher = type(cfg.matcher)(
            gather_radius=1200, min_fit=0.2, max_missing=1, lambda_max=9.0
        )
        # the jittered scene breeds a conflict component too large to
        # resolve exactly; decide falls back to skipping it
        with pytest.warns(UserWarning, match="resolution too large"):
            report = run(cfg)
        with pytest.warns(UserWarning, match="resolution too large"):
            rerun = run(cfg)
        assert dumps(rerun) == dumps(report)  # deterministic despite the mess
        metrics = score(report, scenario, match_radius=100.0)
        vehicle = metrics["levels"]["vehicle"]
        detected = sum(1 for v in scenario["ground_truth"]["vehicles"] if v["detected"])
        assert vehicle["truth_units"] == 9
        assert vehicle["matched"] <= detected
        assert metrics["levels"]["array"]["recall"] > 0.0


class TestReportAudit:
    def test_posteriors_recomputable_from_traces(self, tmp_path):
        paths = write_battalion_inputs(tmp_path)
        assert simulate_and_infer(paths) == 0
        report = json.loads(paths["report"].read_text())
        entries = [
            e
            for level in report["levels"].values()
            for e in level
            if e["accrual_trace"] is not None
        ]
        rng = np.random.default_rng(1)
        picks = rng.choice(len(entries), size=min(3, len(entries)), replace=False)
        for i in picks:
            e = entries[int(i)]
            trace = e["accrual_trace"]
            if e["direct_accrual"]:
                odds = e["prior"] / (1.0 - e["prior"])
                for t in trace:
                    if t["kind"] == "odds_factor":
                        odds *= t["value"]
                assert e["posterior"] == pytest.approx(odds / (1 + odds), rel=1e-12)
            else:
                raw = 1.0
                for t in trace:
                    if t["kind"] == "factor":
                        raw *= t["value"]
                assert min(raw, 1.0) == pytest.approx(e["posterior"], rel=1e-12)


class TestSimulateCommand:
    def test_missing_input_exit_two(self, tmp_path):
        assert (
            main(
                [
                    "simulate",
                    str(tmp_path / "nope.json"),
                    str(tmp_path / "nope2.json"),
                    "--out",
                    str(tmp_path / "out.json"),
                ]
            )
            == 2
        )

    def test_seed_override_changes_output(self, tmp_path):
        paths = write_battalion_inputs(tmp_path)
        paths["noise"].write_text(
            json.dumps({"p_detect": 0.5, "seed": 1, "location_jitter": 5.0})
        )
        out_a = tmp_path / "a.json"
        out_b = tmp_path / "b.json"
        for out, seed in ((out_a, "1"), (out_b, "2")):
            rc = main(
                [
                    "simulate",
                    str(paths["ground_truth"]),
                    str(paths["noise"]),
                    "--library",
                    str(paths["library"]),
                    "--out",
                    str(out),
                    "--seed",
                    seed,
                ]
            )
            assert rc == 0
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_invalid_ground_truth_exit_one(self, tmp_path, capsys):
        paths = write_battalion_inputs(tmp_path)
        doc = json.loads(paths["ground_truth"].read_text())
        # 10 m from its neighbour: below the 50 m slot minimum
        doc["forces"][0]["components"][0]["components"][0]["x"] = 990.0
        bad = tmp_path / "bad_gt.json"
        bad.write_text(json.dumps(doc))
        rc = main(
            [
                "simulate",
                str(bad),
                str(paths["noise"]),
                "--library",
                str(paths["library"]),
                "--out",
                str(tmp_path / "out.json"),
            ]
        )
        assert rc == 1


class TestOracleCommand:
    def test_packaged_fixtures_match(self):
        assert main(["oracle", "all"]) == 0

    def test_record_and_tamper(self, tmp_path, capsys):
        fixtures = tmp_path / "fx"
        assert main(["oracle", "accrual", "--fixtures", str(fixtures), "--record"]) == 0
        assert main(["oracle", "accrual", "--fixtures", str(fixtures)]) == 0
        path = fixtures / "accrual.json"
        doc = json.loads(path.read_text())
        doc["records"][0]["approx"] = (0.123).hex()
        path.write_text(json.dumps(doc))
        assert main(["oracle", "accrual", "--fixtures", str(fixtures)]) == 1
        assert "drift" in capsys.readouterr().err

    def test_missing_fixture_fails(self, tmp_path):
        assert main(["oracle", "skip", "--fixtures", str(tmp_path / "empty")]) == 1

    def test_unknown_suite_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["oracle", "warp-drive"])
        assert exc.value.code == 2
