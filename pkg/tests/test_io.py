import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wforge.io import (
    FormatError,
    load_witness,
    read_features,
    read_features_csv,
    read_rfe_trace,
    save_witness,
    witness_from_dict,
    witness_to_dict,
    write_features,
    write_features_csv,
    write_rfe_trace,
)
from wforge.trainer import Dataset, TrainConfig, WitnessModel
from wforge.witness import RfeStep, RfeTrace


def _data(seed=0, T=37, F=5):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((T, F)), rng.choice([-1, 1], T), "b0")


def test_binary_round_trip(tmp_path):
    data = _data()
    path = tmp_path / "f.wfrg"
    write_features(path, data)
    back = read_features(path, "b0")
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.digest() == data.digest()


def test_binary_header_layout(tmp_path):
    path = tmp_path / "f.wfrg"
    write_features(path, _data(T=3, F=2))
    raw = path.read_bytes()
    assert raw[:4] == b"WFRG"
    assert len(raw) == 4 + 4 + 8 + 4 + 3 * 2 * 8 + 3


def test_binary_rejects_bad_files(tmp_path):
    path = tmp_path / "f.wfrg"
    write_features(path, _data())
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.wfrg"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(FormatError):
        read_features(bad)
    bad.write_bytes(bytes(raw[:-1]))
    with pytest.raises(FormatError):
        read_features(bad)
    bad.write_bytes(b"WF")
    with pytest.raises(FormatError):
        read_features(bad)
    raw[4] = 9
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_features(bad)


def test_csv_round_trip(tmp_path):
    data = _data(1)
    path = tmp_path / "f.csv"
    write_features_csv(path, data, [f"f{i}" for i in range(5)])
    back = read_features_csv(path)
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)


def _witness(coef, p_max=0.25):
    labels = tuple(f"f{i}" for i in range(len(coef)))
    return WitnessModel((2, 2), labels, coef, basis_id="bid", scale=3.5, config=TrainConfig(seed=7).to_dict(),
                        dataset_digest="abc", p_max=p_max, final_loss=0.125)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=16))
def test_witness_json_round_trip_is_bit_exact(coef):
    model = _witness(coef)
    back = witness_from_dict(json.loads(json.dumps(witness_to_dict(model))))
    assert back.coefficients.tobytes() == model.coefficients.tobytes()
    assert back.labels == model.labels and back.spec == model.spec
    assert back.scale == model.scale and back.p_max == model.p_max


def test_witness_file_fields(tmp_path):
    model = _witness([1.0, -0.5, 0.0], p_max=float("inf"))
    path = tmp_path / "w.json"
    save_witness(path, model)
    doc = json.loads(path.read_text())
    assert doc["spec"] == {"d": 2, "n": 2}
    assert doc["p_max"] == "inf" and doc["seed"] == 7
    assert doc["config_digest"] == TrainConfig(seed=7).digest()
    assert doc["normalization"]["max_abs"] == 1.0
    assert load_witness(path).p_max == float("inf")


def test_malformed_witness_rejected():
    with pytest.raises(FormatError):
        witness_from_dict({"coefficients": [1.0]})


def test_rfe_trace_jsonl(tmp_path):
    m8 = _witness([1.0, -0.5, 0.2])
    m7 = _witness([1.0, -0.5, 0.0], p_max=0.2)
    trace = RfeTrace(RfeStep(None, m8, 0.25, 0), (RfeStep("f2", m7, 0.2, 0),), "target count")
    path = tmp_path / "t.jsonl"
    write_rfe_trace(path, trace)
    lines = read_rfe_trace(path)
    assert [r.get("n_terms") for r in lines[:2]] == [3, 2]
    assert lines[1]["removed"] == "f2" and lines[1]["retained"] == ["f0", "f1"]
    assert lines[-1] == {"stop_reason": "target count"}
