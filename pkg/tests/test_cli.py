import csv
import json
import math
from pathlib import Path

import pytest
import yaml

from helpers import make_corpus
from legalstyle.cli import main
from legalstyle.scoring import DEFAULT_DIMENSION_WEIGHTS


def write_corpus(path: Path, count: int, seed: int = 51) -> Path:
    with open(path, "w", encoding="utf-8") as fp:
        for record in make_corpus(seed, count):
            fp.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "corpus.jsonl", 3)


def run(*argv) -> int:
    return main([str(a) for a in argv])


class TestSynth:
    def test_three_documents(self, tmp_path, corpus):
        out = tmp_path / "run"
        assert run("synth", "--corpus", corpus, "--out", out) == 0
        pairs = (out / "pairs.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(pairs) == 3
        assert (out / "run.json").exists()
        assert not (out / ".lock").exists()

    def test_unreadable_corpus_names_path(self, tmp_path, capsys):
        rc = run("synth", "--corpus", tmp_path / "missing.jsonl", "--out", tmp_path / "o")
        assert rc != 0
        assert "missing.jsonl" in capsys.readouterr().err

    def test_n_zero_writes_empty_file(self, tmp_path, corpus):
        out = tmp_path / "run"
        assert run("synth", "--corpus", corpus, "--out", out, "--n", 0) == 0
        assert (out / "pairs.jsonl").read_text(encoding="utf-8") == ""

    def test_n_above_corpus_size_fails(self, tmp_path, corpus, capsys):
        assert run("synth", "--corpus", corpus, "--out", tmp_path / "o", "--n", 99) != 0

    def test_same_seed_byte_identical(self, tmp_path, corpus):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run("synth", "--corpus", corpus, "--out", out1, "--seed", 5) == 0
        assert run("synth", "--corpus", corpus, "--out", out2, "--seed", 5) == 0
        assert (out1 / "pairs.jsonl").read_bytes() == (out2 / "pairs.jsonl").read_bytes()

    def test_lock_conflict(self, tmp_path, corpus, capsys):
        out = tmp_path / "run"
        out.mkdir()
        (out / ".lock").touch()
        assert run("synth", "--corpus", corpus, "--out", out) != 0
        assert "lock" in capsys.readouterr().err.lower()

    def test_audit_log_written_when_configured(self, tmp_path, corpus):
        config = tmp_path / "audit.yaml"
        config.write_text(
            yaml.safe_dump({"gateway": {"audit_log": "audit.jsonl"}}), encoding="utf-8"
        )
        out = tmp_path / "run"
        assert run("synth", "--config", config, "--corpus", corpus, "--out", out) == 0
        lines = (out / "audit.jsonl").read_text(encoding="utf-8").splitlines()
        assert lines
        entry = json.loads(lines[0])
        assert {"seq", "role", "kind", "request_sha256", "response_sha256"} <= set(entry)

    def test_invalid_config_rejected_before_output(self, tmp_path, corpus, capsys):
        config = tmp_path / "bad.yaml"
        config.write_text(yaml.safe_dump({"pipeline": {"k": 0}}), encoding="utf-8")
        out = tmp_path / "run"
        assert run("synth", "--config", config, "--corpus", corpus, "--out", out) != 0
        assert not out.exists()


@pytest.fixture
def pipeline_dirs(tmp_path, corpus):
    """synth + learn + train executed once for downstream command tests."""
    run_dir = tmp_path / "run"
    assert run("synth", "--corpus", corpus, "--out", run_dir) == 0
    pools_dir = tmp_path / "pools"
    assert run("learn", "--pairs", run_dir / "pairs.jsonl", "--out", pools_dir) == 0
    model_path = tmp_path / "model.json"
    assert run("train", "--pools", pools_dir, "--out", model_path) == 0
    return run_dir, pools_dir, model_path


class TestLearnTrain:
    def test_learn_outputs_manifest(self, pipeline_dirs):
        _, pools_dir, _ = pipeline_dirs
        manifest = json.loads((pools_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["count"] >= 3
        assert set(manifest["checksums"]) == {"positives.jsonl", "negatives.jsonl"}

    def test_learn_empty_pairs_fails(self, tmp_path, capsys):
        empty = tmp_path / "pairs.jsonl"
        empty.write_text("", encoding="utf-8")
        assert run("learn", "--pairs", empty, "--out", tmp_path / "pools") != 0

    def test_train_records_config_k(self, tmp_path, pipeline_dirs):
        _, pools_dir, _ = pipeline_dirs
        config = tmp_path / "k7.yaml"
        config.write_text(yaml.safe_dump({"pipeline": {"k": 7}}), encoding="utf-8")
        out = tmp_path / "model7.json"
        assert run("train", "--config", config, "--pools", pools_dir, "--out", out) == 0
        model = json.loads(out.read_text(encoding="utf-8"))
        assert len(model["selected_indices"]) == 7

    def test_retrain_is_byte_identical(self, tmp_path, pipeline_dirs):
        _, pools_dir, model_path = pipeline_dirs
        second = tmp_path / "model2.json"
        assert run("train", "--pools", pools_dir, "--out", second) == 0
        assert model_path.read_bytes() == second.read_bytes()

    def test_k_out_of_range_fails(self, tmp_path, pipeline_dirs):
        _, pools_dir, _ = pipeline_dirs
        config = tmp_path / "bad.yaml"
        config.write_text(yaml.safe_dump({"pipeline": {"k": 101}}), encoding="utf-8")
        assert run("train", "--config", config, "--pools", pools_dir,
                   "--out", tmp_path / "m.json") != 0


class TestScore:
    def _texts_file(self, tmp_path, corpus_records):
        path = tmp_path / "texts.jsonl"
        with open(path, "w", encoding="utf-8") as fp:
            for record in corpus_records:
                fp.write(json.dumps(record, ensure_ascii=False) + "\n")
        return path

    def test_reports_emitted_per_document(self, tmp_path, pipeline_dirs):
        _, pools_dir, model_path = pipeline_dirs
        texts = self._texts_file(tmp_path, [
            {"id": "t1", "text": "本院认为，原告的诉讼请求于法有据，本院予以支持。"},
            {"id": "t2", "text": "我们觉得原告要的钱法律上站得住，是支持的。"},
        ])
        out = tmp_path / "reports"
        assert run("score", "--model", model_path, "--pools", pools_dir,
                   "--texts", texts, "--out", out, "--config", self._fast_config(tmp_path)) == 0
        names = sorted(p.name for p in out.glob("report_*.json"))
        assert names == ["report_t1.json", "report_t2.json"]
        raw = json.loads((out / "report_t1.json").read_text(encoding="utf-8"))
        assert 0.0 < raw["fused"] < 1.0
        assert set(raw["dimensions"]) == set(DEFAULT_DIMENSION_WEIGHTS)

    def _fast_config(self, tmp_path):
        path = tmp_path / "fast.yaml"
        path.write_text(yaml.safe_dump({"pipeline": {"x": 2, "y": 2}}), encoding="utf-8")
        return path

    def test_fingerprint_mismatch_fails(self, tmp_path, pipeline_dirs):
        _, pools_dir, model_path = pipeline_dirs
        tampered = tmp_path / "tampered.json"
        raw = json.loads(model_path.read_text(encoding="utf-8"))
        raw["pools_fingerprint"] = "0" * 64
        tampered.write_text(json.dumps(raw), encoding="utf-8")
        texts = self._texts_file(tmp_path, [{"id": "t", "text": "本院认为，应予支持。"}])
        assert run("score", "--model", tampered, "--pools", pools_dir,
                   "--texts", texts, "--out", tmp_path / "r") != 0


def _write_reports(directory: Path, fused: dict[str, float]):
    directory.mkdir(parents=True, exist_ok=True)
    for doc_id, value in fused.items():
        payload = {
            "doc_id": doc_id,
            "fused": value,
            "objective": value * 10.0,
            "subjective": 10.0 - value * 10.0,
            "dimensions": {},
            "provenance": {},
        }
        (directory / f"report_{doc_id}.json").write_text(
            json.dumps(payload, ensure_ascii=False), encoding="utf-8"
        )


def _write_human_csv(path: Path, scores: dict[str, float], raters=("r1", "r2")):
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["doc_id", "rater_id", "dimension", "score"])
        for doc_id, value in scores.items():
            for rater in raters:
                for dimension in DEFAULT_DIMENSION_WEIGHTS:
                    writer.writerow([doc_id, rater, dimension, value])


class TestEval:
    def test_known_series_reproduced(self, tmp_path):
        fused = {"a": 0.10, "b": 0.40, "c": 0.20, "d": 0.90}
        human = {"a": 1.0, "b": 3.0, "c": 2.0, "d": 4.0}
        reports = tmp_path / "reports"
        _write_reports(reports, fused)
        human_csv = tmp_path / "human.csv"
        _write_human_csv(human_csv, human)
        out = tmp_path / "metrics"
        assert run("eval", "--reports", reports, "--human", human_csv, "--out", out) == 0
        metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))

        xs = [fused[d] for d in sorted(fused)]
        ys = [human[d] for d in sorted(human)]
        n = len(xs)
        mx, my = sum(xs) / n, sum(ys) / n
        expected_r = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / math.sqrt(
            sum((a - mx) ** 2 for a in xs) * sum((b - my) ** 2 for b in ys)
        )
        got = metrics["series"]["fused"]
        assert got["pearson"] == pytest.approx(expected_r, abs=1e-9)
        assert got["spearman"] == pytest.approx(1.0, abs=1e-9)  # same order
        assert got["kendall"] == pytest.approx(1.0, abs=1e-9)
        assert metrics["krippendorff_alpha"] == 1.0

    def test_missing_doc_ids_fail(self, tmp_path, capsys):
        reports = tmp_path / "reports"
        _write_reports(reports, {"a": 0.1, "b": 0.2})
        human_csv = tmp_path / "human.csv"
        _write_human_csv(human_csv, {"a": 1.0, "z": 2.0})
        assert run("eval", "--reports", reports, "--human", human_csv,
                   "--out", tmp_path / "m") != 0

    def test_table_lists_all_columns(self, tmp_path):
        reports = tmp_path / "reports"
        _write_reports(reports, {"a": 0.1, "b": 0.4, "c": 0.3})
        human_csv = tmp_path / "human.csv"
        _write_human_csv(human_csv, {"a": 2.0, "b": 6.0, "c": 5.0})
        out = tmp_path / "metrics"
        assert run("eval", "--reports", reports, "--human", human_csv, "--out", out) == 0
        table = (out / "metrics.txt").read_text(encoding="utf-8")
        for column in ("r", "rho", "tau", "std", "variance", "cv"):
            assert column in table
        for series in ("fused", "objective", "subjective", "human"):
            assert series in table

    def test_incomplete_rater_dimensions_fail(self, tmp_path, capsys):
        reports = tmp_path / "reports"
        _write_reports(reports, {"a": 0.1, "b": 0.2})
        human_csv = tmp_path / "human.csv"
        with open(human_csv, "w", encoding="utf-8", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(["doc_id", "rater_id", "dimension", "score"])
            writer.writerow(["a", "r1", "noun_usage", "5"])
        assert run("eval", "--reports", reports, "--human", human_csv,
                   "--out", tmp_path / "m") != 0
        assert "missing dimensions" in capsys.readouterr().err
