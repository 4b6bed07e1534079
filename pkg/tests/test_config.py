"""Tests for config loading, overrides, fingerprints, and run records."""
import json

import pytest

from whistlekit.config import (
    ConfigError,
    config_fingerprint,
    digest_file,
    load_config,
    write_run_record,
)


class TestLoadConfig:
    def test_defaults_are_concrete(self):
        cfg = load_config()
        assert cfg["detector"]["threshold_db"] == 8.0
        assert cfg["train"]["lr"] == 1e-4
        assert cfg["seed"] == 0

    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"detector": {"threshold_db": 6.0}}))
        cfg = load_config(path)
        assert cfg["detector"]["threshold_db"] == 6.0
        assert cfg["detector"]["connectivity"] == 8  # untouched default

    def test_unknown_file_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"detectorr": {"threshold_db": 6.0}}))
        with pytest.raises(ConfigError, match="detectorr"):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"detector": {"thresh": 6.0}}))
        with pytest.raises(ConfigError, match="detector.thresh"):
            load_config(path)

    def test_flag_overrides_beat_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"detector": {"threshold_db": 6.0}}))
        cfg = load_config(path, ["detector.threshold_db=4.5"])
        assert cfg["detector"]["threshold_db"] == 4.5

    def test_override_values_json_parsed(self):
        cfg = load_config(None, ["spectrogram.hop=1638", "filter.enabled=false",
                                 "spectrogram.window_kind=blackman"])
        assert cfg["spectrogram"]["hop"] == 1638
        assert cfg["filter"]["enabled"] is False
        assert cfg["spectrogram"]["window_kind"] == "blackman"

    def test_bad_override_forms_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["no_equals_sign"])
        with pytest.raises(ConfigError):
            load_config(None, ["detector.nope=1"])
        with pytest.raises(ConfigError):
            load_config(None, ["nosuch.section=1"])

    def test_defaults_not_mutated(self):
        a = load_config(None, ["seed=9"])
        b = load_config()
        assert a["seed"] == 9
        assert b["seed"] == 0


class TestFingerprint:
    def test_stable_for_equal_configs(self):
        assert config_fingerprint(load_config()) == \
            config_fingerprint(load_config())

    def test_differs_when_config_differs(self):
        assert config_fingerprint(load_config()) != \
            config_fingerprint(load_config(None, ["seed=1"]))


class TestRunRecord:
    def test_record_contents(self, tmp_path):
        data = tmp_path / "input.bin"
        data.write_bytes(b"hello")
        record_path = tmp_path / "run.json"
        cfg = load_config()
        write_run_record(record_path, cfg, [data], [tmp_path / "out.bin"])
        record = json.loads(record_path.read_text())
        assert record["tool"] == "whistlekit"
        assert record["config"] == cfg
        assert record["config_fingerprint"] == config_fingerprint(cfg)
        assert record["inputs"][0]["sha256"] == digest_file(data)
        assert record["outputs"] == [str(tmp_path / "out.bin")]

    def test_missing_inputs_skipped(self, tmp_path):
        record_path = tmp_path / "run.json"
        write_run_record(record_path, load_config(),
                         [tmp_path / "nope.bin"], [])
        record = json.loads(record_path.read_text())
        assert record["inputs"] == []
