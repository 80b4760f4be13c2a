import json
import struct

import numpy as np
import pytest

from laplacianshot.bench import EpisodeResult, EpisodeReport, EpisodeSpec
from laplacianshot.core import FeatureMatrix, InferenceConfig, InvalidConfig
from laplacianshot.io import (
    format_report,
    load_config,
    read_features_binary,
    read_features_csv,
    strip_timing,
    write_features_binary,
    write_features_csv,
    write_report,
    write_report_jsonl,
)
from laplacianshot.io.features import (
    BadMagic,
    BadVersion,
    FeatureFileError,
    NonFiniteValue,
    TruncatedFile,
)


def header(n, dim, flags, magic=b"LSFT", version=1):
    return struct.pack("<4sIIII", magic, version, n, dim, flags)


class TestBinary:
    def test_minimal(self, tmp_path):
        p = tmp_path / "f.lsft"
        p.write_bytes(header(1, 2, 1) + struct.pack("<iff", 0, 1.0, 2.0))
        fm, mean = read_features_binary(p)
        assert fm.data.tolist() == [[1.0, 2.0]]
        assert fm.labels.tolist() == [0]
        assert mean is None

    def test_base_mean(self, tmp_path):
        p = tmp_path / "f.lsft"
        p.write_bytes(header(1, 2, 3) + struct.pack("<iff", 4, 1.0, 2.0)
                      + struct.pack("<ff", 0.5, 0.5))
        fm, mean = read_features_binary(p)
        assert mean.tolist() == [0.5, 0.5]
        assert fm.labels.tolist() == [4]

    def test_no_labels(self, tmp_path):
        p = tmp_path / "f.lsft"
        p.write_bytes(header(2, 1, 0) + struct.pack("<ff", 3.0, -1.0))
        fm, _ = read_features_binary(p)
        assert fm.labels is None and fm.data.tolist() == [[3.0], [-1.0]]

    def test_round_trip(self, tmp_path, rng):
        fm = FeatureMatrix(rng.normal(size=(17, 9)).astype(np.float32), rng.integers(-5, 50, 17))
        mean = rng.normal(size=9)
        a, b = tmp_path / "a.lsft", tmp_path / "b.lsft"
        write_features_binary(fm, a, mean)
        back, back_mean = read_features_binary(a)
        write_features_binary(back, b, back_mean)
        assert a.read_bytes() == b.read_bytes()
        assert back.equals(fm)
        np.testing.assert_array_equal(back_mean, mean.astype(np.float32))

    def test_little_endian_layout(self, tmp_path):
        p = tmp_path / "f.lsft"
        write_features_binary(FeatureMatrix([[1.0]], [258]), p)
        raw = p.read_bytes()
        assert raw[:4] == b"LSFT" and raw[4:8] == b"\x01\x00\x00\x00"
        assert raw[20:24] == b"\x02\x01\x00\x00"
        assert raw[24:28] == b"\x00\x00\x80\x3f"

    @pytest.mark.parametrize("blob, exc, offset", [
        (header(1, 1, 0, magic=b"NOPE") + b"\0" * 4, BadMagic, 0),
        (header(1, 1, 0, version=2) + b"\0" * 4, BadVersion, 4),
        (header(2, 2, 1) + b"\0" * 12, TruncatedFile, 32),
        (b"LSF", TruncatedFile, 3),
        (header(1, 1, 0) + b"\0" * 8, FeatureFileError, 24),
        (header(1, 1, 8) + b"\0" * 4, FeatureFileError, 16),
    ])
    def test_load_errors(self, tmp_path, blob, exc, offset):
        p = tmp_path / "bad.lsft"
        p.write_bytes(blob)
        with pytest.raises(exc) as err:
            read_features_binary(p)
        assert err.value.offset == offset
        assert f"byte offset {offset}" in str(err.value)

    def test_nan_payload(self, tmp_path):
        p = tmp_path / "nan.lsft"
        p.write_bytes(header(2, 2, 1) + struct.pack("<iff", 0, 1.0, 2.0)
                      + struct.pack("<iff", 1, 3.0, float("nan")))
        with pytest.raises(NonFiniteValue) as err:
            read_features_binary(p)
        assert err.value.offset == 20 + 12 + 4 + 4

    def test_inf_base_mean(self, tmp_path):
        p = tmp_path / "inf.lsft"
        p.write_bytes(header(1, 1, 2) + struct.pack("<f", 1.0) + struct.pack("<f", float("inf")))
        with pytest.raises(NonFiniteValue):
            read_features_binary(p)


class TestCsv:
    def test_with_labels(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("id,label,f0,f1,f2\na,3,1.5,2,3\nb,4,-1,0,1e-3\n")
        fm = read_features_csv(p)
        assert fm.data.tolist() == [[1.5, 2, 3], [-1, 0, 1e-3]]
        assert fm.labels.tolist() == [3, 4] and fm.ids == ("a", "b")

    def test_without_labels(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("id,f0\nx,1\ny,2\n")
        fm = read_features_csv(p)
        assert fm.labels is None and fm.data.tolist() == [[1.0], [2.0]]

    @pytest.mark.parametrize("text, line", [
        ("id,f0,f1\na,1\n", 2),
        ("id,f0\na,1\nb,oops\n", 3),
        ("id,label,f0\na,x,1\n", 2),
        ("id,f0\na,nan\n", 2),
        ("name,f0\n", 1),
    ])
    def test_parse_errors(self, tmp_path, text, line):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(FeatureFileError) as err:
            read_features_csv(p)
        assert err.value.line == line

    def test_csv_binary_cross_check(self, tmp_path, rng):
        for i in range(5):
            fm = FeatureMatrix(rng.normal(size=(6, 4)), rng.integers(0, 3, 6))
            write_features_csv(fm, tmp_path / "a.csv")
            write_features_binary(fm, tmp_path / "a.lsft")
            c = read_features_csv(tmp_path / "a.csv")
            b, _ = read_features_binary(tmp_path / "a.lsft")
            np.testing.assert_allclose(c.data, b.data, rtol=2**-23, atol=0)
            assert np.array_equal(c.labels, b.labels)


def fake_report(accs, seconds=0.5):
    eps = [EpisodeResult(i, 100 + i, a, a, 7, True, True, seconds, (1, 4)) for i, a in enumerate(accs)]
    return EpisodeReport(InferenceConfig(), EpisodeSpec(num_episodes=len(accs)), "laplacian", eps)


class TestReport:
    def test_single_episode(self):
        assert "accuracy: 100.00 ± 0.00" in format_report(fake_report([1.0]))

    def test_ci_spot_check(self):
        assert "accuracy: 90.00 ± 19.60" in format_report(fake_report([0.8, 1.0]))

    def test_timing_isolated(self):
        a = format_report(fake_report([0.5, 0.75], 0.1), episodes=True)
        b = format_report(fake_report([0.5, 0.75], 0.9), episodes=True)
        assert a != b
        assert strip_timing(a) == strip_timing(b)
        assert strip_timing(a) == format_report(fake_report([0.5, 0.75]), True, timing=False)

    def test_config_echo(self):
        text = format_report(fake_report([1.0]))
        assert "  lambda: 1.0" in text and "  knn: 3" in text and "seed: 0" in text

    def test_write(self, tmp_path):
        write_report(fake_report([1.0]), tmp_path / "r.txt", episodes=True)
        text = (tmp_path / "r.txt").read_text(encoding="utf-8")
        assert "per_episode:" in text and "  0 100 100.00 100.00 7 1 1 1,4" in text

    def test_jsonl(self, tmp_path):
        write_report_jsonl(fake_report([0.2, 0.4]), tmp_path / "r.jsonl")
        recs = [json.loads(l) for l in (tmp_path / "r.jsonl").read_text().splitlines()]
        assert len(recs) == 2
        assert list(recs[0]) == ["index", "seed", "accuracy", "per_class_accuracy", "iterations",
                                 "converged", "monotone", "seconds", "classes", "warnings"]
        assert recs[1]["accuracy"] == 0.4


class TestConfig:
    def test_defaults(self):
        rc = load_config()
        assert rc.inference() == InferenceConfig()
        assert rc.episodes().queries_per_class == 15

    def test_file_and_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"lambda": 0.7, "knn": 5, "ways": 3, "shots": [1, 2, 3]}))
        rc = load_config(p, {"knn": 10, "lambda": None})
        assert rc.inference().lam == 0.7 and rc.inference().knn == 10
        assert rc.episodes().shot_list == (1, 2, 3)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"lamdba": 0.7}))
        with pytest.raises(InvalidConfig, match="lamdba"):
            load_config(p)

    def test_nested_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"solver": {"lambda": 1}}))
        with pytest.raises(InvalidConfig):
            load_config(p)

    def test_invalid_value(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"knn": 0}))
        with pytest.raises(InvalidConfig):
            load_config(p).inference()
