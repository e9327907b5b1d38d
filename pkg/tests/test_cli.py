import json
from collections import Counter

import numpy as np
import pytest

import caia
from caia.cli import main


@pytest.fixture
def scenario_file(tmp_path, hair_space):
    cfg = caia.ScenarioConfig(
        num_classes=16, attribute=hair_space, mu=1.0, sigma=0.5, sigma_c=0.5,
        base_std=1.0, num_tuples=10, seed=77,
    )
    path = tmp_path / "scenario.json"
    caia.save_scenario_config(path, cfg)
    return path, cfg


def descriptor_file(tmp_path, name, **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields))
    return path


def run(argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_outputs(self, tmp_path, scenario_file):
        scenario_path, cfg = scenario_file
        truth_csv = tmp_path / "truth.csv"
        manifest = tmp_path / "attack.json"
        logits = tmp_path / "logits.jsonl"
        code = run([
            "simulate", "--scenario", scenario_path, "--out-truth", truth_csv,
            "--out-manifest", manifest, "--export-logits", logits,
        ])
        assert code == 0
        truth = caia.read_ground_truth(truth_csv)
        assert Counter(truth.values()) == {v: 4 for v in cfg.attribute.values}
        space, tuples = caia.read_attack_manifest(manifest)
        assert space.values == cfg.attribute.values
        assert len(tuples) == 10
        provider = caia.read_logit_file(logits)
        assert provider.num_classes == 16

    def test_four_hundred_classes_hundred_per_value(self, tmp_path, hair_space):
        cfg = caia.ScenarioConfig(
            num_classes=400, attribute=hair_space, mu=0.5, sigma=0.5, sigma_c=0.5,
            base_std=1.0, num_tuples=1, seed=0,
        )
        scenario_path = tmp_path / "s.json"
        caia.save_scenario_config(scenario_path, cfg)
        truth_csv = tmp_path / "truth.csv"
        assert run(["simulate", "--scenario", scenario_path, "--out-truth", truth_csv]) == 0
        truth = caia.read_ground_truth(truth_csv)
        assert Counter(truth.values()) == {v: 100 for v in hair_space.values}

    def test_indivisible_class_count_exit_2(self, tmp_path, hair_space):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "num_classes": 10,
            "attribute": {"name": "hair_color", "values": list(hair_space.values)},
            "mu": 1.0, "sigma": 0.0, "sigma_c": 0.0, "base_std": 0.0,
            "num_tuples": 1, "seed": 0,
        }))
        assert run(["simulate", "--scenario", path, "--out-truth", tmp_path / "t.csv"]) == 2


class TestAttack:
    def test_simulator_oracle_matches_in_process(self, tmp_path, scenario_file, hair_space):
        scenario_path, cfg = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        out = tmp_path / "predictions.json"
        assert run([
            "attack", "--attack-set", manifest, "--oracle", oracle, "--out", out,
        ]) == 0

        scenario = caia.generate_scenario(cfg)
        expected = caia.run_attack(
            scenario.attack_tuples(), caia.SimulatorLogitProvider(scenario), hair_space
        )
        _, predictions = caia.read_predictions(out)
        assert predictions == expected.predictions

    def test_sample_limit_first_by_tuple_id(self, tmp_path, scenario_file, hair_space):
        scenario_path, cfg = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        out = tmp_path / "p.json"
        assert run([
            "attack", "--attack-set", manifest, "--oracle", oracle,
            "--out", out, "--sample-limit", 3,
        ]) == 0
        scenario = caia.generate_scenario(cfg)
        expected = caia.run_attack(
            scenario.attack_tuples(),
            caia.SimulatorLogitProvider(scenario),
            hair_space,
            sample_limit=3,
        )
        _, predictions = caia.read_predictions(out)
        assert predictions == expected.predictions

    def test_unreachable_http_oracle_exit_4(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="http", locator="http://127.0.0.1:9"
        )
        assert run([
            "attack", "--attack-set", manifest, "--oracle", oracle,
            "--out", tmp_path / "p.json",
        ]) == 4

    def test_missing_logits_file_exit_2(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="file", locator=str(tmp_path / "nope.jsonl")
        )
        assert run([
            "attack", "--attack-set", manifest, "--oracle", oracle,
            "--out", tmp_path / "p.json",
        ]) == 2

    def test_config_echo_present(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        out = tmp_path / "p.json"
        run(["attack", "--attack-set", manifest, "--oracle", oracle, "--out", out])
        doc = json.loads(out.read_text())
        assert doc["config"]["command"] == "attack"
        assert doc["config"]["attack_set"] == str(manifest)

    def test_served_simulator_attack_matches_in_process(self, tmp_path, scenario_file):
        scenario_path, cfg = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])

        sim_oracle = descriptor_file(
            tmp_path, "oracle_sim.json", kind="simulator", locator=str(scenario_path)
        )
        out_local = tmp_path / "p_local.json"
        assert run([
            "attack", "--attack-set", manifest, "--oracle", sim_oracle, "--out", out_local,
        ]) == 0

        scenario = caia.generate_scenario(cfg)
        with caia.serve(scenario) as server:
            http_oracle = descriptor_file(
                tmp_path, "oracle_http.json", kind="http", locator=server.address
            )
            out_http = tmp_path / "p_http.json"
            assert run([
                "attack", "--attack-set", manifest, "--oracle", http_oracle,
                "--out", out_http,
            ]) == 0

        local = json.loads(out_local.read_text())
        http = json.loads(out_http.read_text())
        assert local["classes"] == http["classes"]

    def test_identical_invocations_identical_bytes(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        run(["simulate", "--scenario", scenario_path, "--out-manifest", manifest])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        out1, out2 = tmp_path / "p1.json", tmp_path / "p2.json"
        run(["attack", "--attack-set", manifest, "--oracle", oracle, "--out", out1])
        run(["attack", "--attack-set", manifest, "--oracle", oracle, "--out", out2])
        a, b = out1.read_bytes(), out2.read_bytes()
        # config echoes differ only in the --out path, which is not embedded
        assert a == b


class TestEval:
    def _attack(self, tmp_path, scenario_file):
        scenario_path, cfg = scenario_file
        manifest = tmp_path / "attack.json"
        truth_csv = tmp_path / "truth.csv"
        run([
            "simulate", "--scenario", scenario_path,
            "--out-manifest", manifest, "--out-truth", truth_csv,
        ])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        predictions = tmp_path / "predictions.json"
        run(["attack", "--attack-set", manifest, "--oracle", oracle, "--out", predictions])
        return predictions, truth_csv

    def test_eval_writes_report(self, tmp_path, scenario_file):
        predictions, truth_csv = self._attack(tmp_path, scenario_file)
        report_path = tmp_path / "report.json"
        assert run([
            "eval", "--predictions", predictions, "--truth", truth_csv,
            "--out", report_path, "--table",
        ]) == 0
        report = caia.read_report(report_path)
        assert report.accuracy == 1.0  # recovery scenario is easy at 10 tuples
        doc = json.loads(report_path.read_text())
        assert doc["format"] == "caia-report/1"
        assert "config" in doc

    def test_mismatched_class_ids_exit_2(self, tmp_path, scenario_file):
        predictions, _ = self._attack(tmp_path, scenario_file)
        bad_truth = tmp_path / "bad_truth.csv"
        bad_truth.write_text("class_id,value\n999,black\n")
        assert run([
            "eval", "--predictions", predictions, "--truth", bad_truth,
            "--out", tmp_path / "r.json",
        ]) == 2

    def test_aggregate_matches_library(self, tmp_path, scenario_file):
        predictions, truth_csv = self._attack(tmp_path, scenario_file)
        report_path = tmp_path / "report.json"
        run(["eval", "--predictions", predictions, "--truth", truth_csv, "--out", report_path])
        agg_path = tmp_path / "aggregate.json"
        assert run([
            "eval", "--aggregate", *([report_path] * 9), "--out", agg_path,
        ]) == 0
        single = caia.read_report(report_path)
        aggregated = caia.read_report(agg_path)
        expected = caia.aggregate_runs([single] * 9)
        assert aggregated.accuracy == expected.accuracy
        assert aggregated.accuracy_std == expected.accuracy_std == 0.0
        assert aggregated.runs == 9

    def test_eval_without_inputs_exit_2(self, tmp_path):
        assert run(["eval", "--out", tmp_path / "r.json"]) == 2


class TestFilter:
    def _candidates(self, tmp_path, gender_space, n=6, good=None):
        good = good if good is not None else [True] * n
        cands = []
        for i in range(n):
            if good[i]:
                scores = {"female": [0.9, 0.1], "male": [0.2, 0.8]}
            else:
                scores = {"female": [0.4, 0.6], "male": [0.2, 0.8]}
            cands.append(
                caia.CandidateTuple(
                    f"c{i:03d}",
                    images={v: f"img/{i}/{v}.png" for v in gender_space.values},
                    scores=scores,
                )
            )
        path = tmp_path / "candidates.json"
        caia.write_candidates(path, gender_space, cands)
        return path

    def test_filter_writes_manifest(self, tmp_path, gender_space):
        candidates = self._candidates(tmp_path, gender_space)
        out = tmp_path / "attack.json"
        decisions = tmp_path / "decisions.json"
        assert run([
            "filter", "--candidates", candidates, "--tau", 0.6, "--count", 4,
            "--out", out, "--decisions", decisions,
        ]) == 0
        space, tuples = caia.read_attack_manifest(out)
        assert len(tuples) == 4
        doc = json.loads(decisions.read_text())
        assert doc["format"] == "caia-decisions/1"
        assert doc["accepted_count"] == 4

    def test_no_filter_accepts_everything(self, tmp_path, gender_space):
        candidates = self._candidates(tmp_path, gender_space, good=[False] * 6)
        out = tmp_path / "attack.json"
        assert run([
            "filter", "--candidates", candidates, "--count", 5,
            "--out", out, "--no-filter",
        ]) == 0
        _, tuples = caia.read_attack_manifest(out)
        assert [t.tuple_id for t in tuples] == [f"c{i:03d}" for i in range(5)]

    def test_tau_out_of_range_exit_2(self, tmp_path, gender_space):
        candidates = self._candidates(tmp_path, gender_space)
        assert run([
            "filter", "--candidates", candidates, "--tau", 1.5, "--count", 3,
            "--out", tmp_path / "a.json",
        ]) == 2

    def test_nothing_accepted_exit_3(self, tmp_path, gender_space):
        candidates = self._candidates(tmp_path, gender_space, good=[False] * 6)
        assert run([
            "filter", "--candidates", candidates, "--tau", 0.6, "--count", 3,
            "--out", tmp_path / "a.json",
        ]) == 3

    def test_malformed_manifest_exit_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run([
            "filter", "--candidates", path, "--count", 3, "--out", tmp_path / "a.json",
        ]) == 2


class TestAblate:
    def test_curve_written(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        truth_csv = tmp_path / "truth.csv"
        run([
            "simulate", "--scenario", scenario_path,
            "--out-manifest", manifest, "--out-truth", truth_csv,
        ])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        curve = tmp_path / "curve.json"
        assert run([
            "ablate", "--attack-set", manifest, "--oracle", oracle,
            "--truth", truth_csv, "--sizes", "1,5,10", "--repeats", 2,
            "--seed", 5, "--out", curve,
        ]) == 0
        doc = json.loads(curve.read_text())
        assert doc["format"] == "caia-curve/1"
        assert [p["size"] for p in doc["points"]] == [1, 5, 10]

    def test_oversized_exit_2(self, tmp_path, scenario_file):
        scenario_path, _ = scenario_file
        manifest = tmp_path / "attack.json"
        truth_csv = tmp_path / "truth.csv"
        run([
            "simulate", "--scenario", scenario_path,
            "--out-manifest", manifest, "--out-truth", truth_csv,
        ])
        oracle = descriptor_file(
            tmp_path, "oracle.json", kind="simulator", locator=str(scenario_path)
        )
        assert run([
            "ablate", "--attack-set", manifest, "--oracle", oracle,
            "--truth", truth_csv, "--sizes", "999", "--repeats", 1,
            "--out", tmp_path / "c.json",
        ]) == 2


class TestAttribution:
    def test_files_through_cli(self, tmp_path):
        grid = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        caia.write_float_grid(tmp_path / "map.grid", grid)
        caia.write_mask(tmp_path / "diag.png", np.array([[1, 0], [0, 1]], dtype=np.uint8))
        caia.write_mask(tmp_path / "all.png", np.ones((2, 2), dtype=np.uint8))
        caia.write_mask(tmp_path / "none.png", np.zeros((2, 2), dtype=np.uint8))
        samples = tmp_path / "samples.json"
        samples.write_text(json.dumps({
            "samples": [
                {
                    "map": "map.grid",
                    "masks": {"diag": "diag.png", "all": "all.png", "none": "none.png"},
                }
            ]
        }))
        out = tmp_path / "attribution.json"
        assert run(["attribution", "--samples", samples, "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["regions"]["diag"]["share"] == pytest.approx(0.5, abs=1e-12)
        assert doc["regions"]["all"]["share"] == 1.0
        assert doc["regions"]["none"]["share"] == 0.0

    def test_missing_samples_file_exit_2(self, tmp_path):
        assert run([
            "attribution", "--samples", tmp_path / "nope.json",
            "--out", tmp_path / "o.json",
        ]) == 2


class TestUsage:
    def test_no_command_exit_2(self):
        assert run([]) == 2

    def test_unknown_command_exit_2(self):
        assert run(["frobnicate"]) == 2
