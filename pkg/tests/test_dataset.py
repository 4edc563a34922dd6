"""Dataset JSONL I/O."""

import pytest

from lambdaehr.dataset import read_jsonl, write_jsonl
from lambdaehr.errors import DataError

LAM = "λ"


def sample_records():
    return [
        {
            "id": "a",
            "question": "Did patient have pneumonia?",
            "entities": [
                {"start": 17, "end": 26, "kind": "concept", "value": "C0032285"}
            ],
            "lf": f"{LAM}x.has_concept(x, C0032285)",
        },
        {
            "id": "b",
            "question": "How often was insulin given?",
            "entities": [
                {"start": 14, "end": 21, "kind": "concept", "value": "C0021641"}
            ],
            "lf": f"count({LAM}x.has_concept(x, C0021641))",
        },
    ]


def test_write_read_round_trip(tmp_path):
    path = str(tmp_path / "data.jsonl")
    records = sample_records()
    write_jsonl(records, path)
    assert read_jsonl(path) == records


def test_byte_identical_rewrites(tmp_path):
    p1 = str(tmp_path / "one.jsonl")
    p2 = str(tmp_path / "two.jsonl")
    write_jsonl(sample_records(), p1)
    write_jsonl(sample_records(), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_utf8_lf_endings(tmp_path):
    path = str(tmp_path / "data.jsonl")
    write_jsonl(sample_records(), path)
    blob = open(path, "rb").read()
    assert b"\r" not in blob
    assert LAM.encode("utf-8") in blob


def test_missing_field(tmp_path):
    path = str(tmp_path / "bad.jsonl")
    path_obj = tmp_path / "bad.jsonl"
    path_obj.write_text('{"id": "a", "question": "q"}\n', encoding="utf-8")
    with pytest.raises(DataError):
        read_jsonl(path)


def test_bad_json_reports_line(tmp_path):
    path_obj = tmp_path / "bad.jsonl"
    path_obj.write_text("{}\nnot json\n", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        read_jsonl(str(path_obj), validate=False)
    assert ":2:" in str(exc.value)


def test_missing_file():
    with pytest.raises(DataError):
        read_jsonl("/nonexistent/nope.jsonl")
