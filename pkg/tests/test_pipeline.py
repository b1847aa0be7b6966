"""End-to-end pipeline: artifact layout, determinism, and the error file."""

import json
from types import SimpleNamespace

import pytest

from power_attest.config import Config
from power_attest.errors import ConfigError, InsufficientTraces
from power_attest.evaluate import read_report
from power_attest.pipeline import PIPELINE_STAGES, report_recall, run_pipeline
from power_attest.protocol.wire import read_transcript
from power_attest.template import read_template

RUN_ARGS = dict(
    per_program=7, template_count=2, calibration_count=4, sessions=2
)


@pytest.fixture(scope="module")
def pipeline_config():
    return Config(seed=77)


@pytest.fixture(scope="module")
def pipeline_run(pipeline_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe") / "run"
    notes = []
    result = run_pipeline(
        pipeline_config, out, progress=notes.append, **RUN_ARGS
    )
    return result, notes


def tree_bytes(root):
    """Map of relative path -> file bytes for a whole directory tree."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestValidation:
    def test_no_eval_traces_left(self, tmp_path):
        out = tmp_path / "never"
        with pytest.raises(ConfigError, match="leaves no evaluation"):
            run_pipeline(
                Config(), out,
                per_program=10, template_count=5, calibration_count=5,
            )
        assert not out.exists()


class TestArtifacts:
    def test_every_artifact_exists(self, pipeline_run):
        result, _ = pipeline_run
        expected = {
            "config", "corpus_manifest", "templates", "eval_report",
            "security_table", "protocol_transcript", "protocol_summary",
            "summary",
        }
        assert set(result.artifacts) == expected
        for rel in result.artifacts.values():
            assert (result.out_dir / rel).exists()

    def test_no_error_file_on_success(self, pipeline_run):
        result, _ = pipeline_run
        assert not (result.out_dir / "error.json").exists()

    def test_templates_are_calibrated(self, pipeline_run):
        result, _ = pipeline_run
        template_dir = result.out_dir / result.artifacts["templates"]
        names = sorted(p.stem for p in template_dir.glob("*.tpl"))
        assert names == ["alpha", "bravo"]
        for path in template_dir.glob("*.tpl"):
            assert read_template(path).calibrated

    def test_eval_report_reads_back(self, pipeline_run):
        result, _ = pipeline_run
        report = read_report(result.out_dir / result.artifacts["eval_report"])
        assert set(report.entries) == {"alpha", "bravo"}
        eval_count = (
            RUN_ARGS["per_program"]
            - RUN_ARGS["template_count"]
            - RUN_ARGS["calibration_count"]
        )
        assert report.trace_counts == {
            "alpha": eval_count, "bravo": eval_count,
        }
        assert (result.out_dir / "eval" / "report.csv").exists()

    def test_security_table_has_all_levels(self, pipeline_run):
        result, _ = pipeline_run
        rows = json.loads(
            (result.out_dir / result.artifacts["security_table"]).read_text()
        )
        assert len(rows) == 4
        assert (result.out_dir / "security" / "table.txt").exists()

    def test_protocol_summary(self, pipeline_run):
        result, _ = pipeline_run
        doc = json.loads(
            (result.out_dir / result.artifacts["protocol_summary"]).read_text()
        )
        assert doc["sessions"] == RUN_ARGS["sessions"]
        assert doc["accepted"] == RUN_ARGS["sessions"]
        assert doc["aborted"] == 0
        assert doc["acceptance_rate"] == 1.0
        assert doc["trace_count"] == 52
        assert doc["pass_threshold"] == 21
        assert doc["app_id"] == "alpha"

    def test_transcript_reads_back(self, pipeline_run):
        result, _ = pipeline_run
        records, params = read_transcript(
            result.out_dir / result.artifacts["protocol_transcript"]
        )
        assert records
        assert params["signature"] == "Ed25519"
        assert {r["session_id"] for r in records} == set(
            range(RUN_ARGS["sessions"])
        )

    def test_summary_file_matches_result(self, pipeline_run):
        result, _ = pipeline_run
        doc = json.loads((result.out_dir / "summary.json").read_text())
        assert doc == result.summary
        assert doc["stages"] == list(PIPELINE_STAGES)
        assert doc["profiles"] == ["alpha", "bravo"]
        assert 0.0 <= doc["recall"] <= 1.0
        worst = doc["worst_false_positive"]
        assert set(worst) == {"impostor", "victim", "count", "rate"}

    def test_progress_covers_stages(self, pipeline_run):
        _, notes = pipeline_run
        seen = {note.split(":", 1)[0] for note in notes}
        assert seen == {
            "synth", "template", "eval", "secparam", "protocol-sim",
        }


class TestDeterminism:
    def test_same_config_same_tree(self, pipeline_config, pipeline_run, tmp_path):
        first, _ = pipeline_run
        out = tmp_path / "again"
        second = run_pipeline(pipeline_config, out, **RUN_ARGS)
        left = tree_bytes(first.out_dir)
        right = tree_bytes(second.out_dir)
        assert sorted(left) == sorted(right)
        mismatched = [rel for rel in left if left[rel] != right[rel]]
        assert mismatched == []
        assert first.summary == second.summary


class TestErrorFile:
    def test_failure_records_stage(self, tmp_path):
        out = tmp_path / "broken"
        # Zero calibration traces trip the minimum inside the calibrate
        # stage after synth and template building already succeeded.
        with pytest.raises(InsufficientTraces):
            run_pipeline(
                Config(seed=5), out,
                per_program=6, template_count=5, calibration_count=0,
                sessions=1,
            )
        doc = json.loads((out / "error.json").read_text())
        assert doc["stage"] == "calibrate"
        assert doc["error"] == "InsufficientTraces"
        assert "4 calibration traces" in doc["message"]
        assert (out / "config.json").exists()


class TestReportRecall:
    def test_aggregates_over_programs(self):
        entry = lambda tp, fn: SimpleNamespace(
            stats=SimpleNamespace(tp=tp, fn=fn)
        )
        report = SimpleNamespace(
            entries={"a": entry(3, 1), "b": entry(2, 2)}
        )
        assert report_recall(report) == pytest.approx(5 / 8)

    def test_empty_report_is_zero(self):
        assert report_recall(SimpleNamespace(entries={})) == 0.0
