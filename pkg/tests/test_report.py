"""Tests for report serialization and figure emission."""
import json

import pytest

from whistlekit.metrics import ConfusionMatrix, RocCurve, confusion_and_metrics, \
    roc_and_auc
from whistlekit.report import EvalReport, emit_report


def sample_report():
    metrics = confusion_and_metrics([1, 0, 1, 0, 1], [1, 0, 1, 1, 0])
    roc = roc_and_auc([0.9, 0.2, 0.7, 0.6, 0.4], [1, 0, 1, 0, 1])
    return EvalReport.from_metrics(metrics, roc=roc,
                                   config_fingerprint="abc123")


class TestEvalReport:
    def test_dict_round_trip(self):
        report = sample_report()
        again = EvalReport.from_dict(report.to_dict())
        assert again.to_dict() == report.to_dict()

    def test_undefined_metrics_survive_round_trip(self):
        metrics = confusion_and_metrics([1, 1], [0, 0])
        report = EvalReport.from_metrics(metrics)
        again = EvalReport.from_dict(report.to_dict())
        assert again.precision is None
        assert again.fpr is None

    def test_metrics_consistent_with_confusion(self):
        report = sample_report()
        cm = report.confusion
        assert report.accuracy == (cm.tp + cm.tn) / cm.n
        assert report.precision == cm.tp / (cm.tp + cm.fp)


class TestEmitReport:
    def test_expected_files(self, tmp_path):
        written = emit_report(sample_report(), tmp_path)
        names = sorted(p.name for p in written)
        assert names == ["confusion.svg", "metrics.csv", "report.json",
                         "roc.csv", "roc.svg"]
        for p in written:
            assert p.stat().st_size > 0

    def test_json_matches_report(self, tmp_path):
        report = sample_report()
        emit_report(report, tmp_path, formats=("json",))
        data = json.loads((tmp_path / "report.json").read_text())
        assert data == report.to_dict()

    def test_roc_csv_equals_points(self, tmp_path):
        report = sample_report()
        emit_report(report, tmp_path, formats=("csv",))
        lines = (tmp_path / "roc.csv").read_text().strip().split("\n")
        assert lines[0] == "fpr,tpr"
        points = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
        assert points == report.roc.points

    def test_metrics_csv_has_undefined_not_zero(self, tmp_path):
        metrics = confusion_and_metrics([1, 1], [0, 0])
        emit_report(EvalReport.from_metrics(metrics), tmp_path,
                    formats=("csv",))
        text = (tmp_path / "metrics.csv").read_text()
        assert "precision,undefined" in text
        assert "fpr,undefined" in text

    def test_svg_contains_auc_text(self, tmp_path):
        roc = RocCurve(points=[(0.0, 0.0), (0.0, 0.86), (1.0, 1.0)], auc=0.93)
        report = EvalReport(accuracy=0.9, precision=0.9, recall=0.9, tpr=0.9,
                            fpr=0.1, confusion=ConfusionMatrix(9, 1, 9, 1),
                            roc=roc)
        emit_report(report, tmp_path, formats=("svg",))
        svg = (tmp_path / "roc.svg").read_text()
        assert "AUC = 0.930" in svg

    def test_reemit_identical_bytes(self, tmp_path):
        report = sample_report()
        first = tmp_path / "a"
        second = tmp_path / "b"
        emit_report(report, first)
        emit_report(report, second)
        for name in ("report.json", "metrics.csv", "roc.csv", "roc.svg",
                     "confusion.svg"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_no_roc_skips_roc_outputs(self, tmp_path):
        metrics = confusion_and_metrics([1, 0], [1, 0])
        emit_report(EvalReport.from_metrics(metrics), tmp_path)
        assert not (tmp_path / "roc.svg").exists()
        assert not (tmp_path / "roc.csv").exists()
        assert (tmp_path / "confusion.svg").exists()

    def test_unwritable_path_raises(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("x")  # a file where a directory must go
        with pytest.raises(OSError):
            emit_report(sample_report(), target)
