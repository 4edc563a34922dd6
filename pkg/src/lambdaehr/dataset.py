"""Dataset file I/O.

Records travel as JSON Lines, one object per line, UTF-8 with LF endings:

    {"id": str, "question": str,
     "entities": [{"start", "end", "kind", "value"}], "lf": str}

Preprocessing adds "es", "tokens", "lf_stripped", and "lf_abstract";
extra fields round-trip untouched. Serialization is deterministic, so
equal record lists produce byte-identical files.
"""

from __future__ import annotations

import json
import os

from lambdaehr.errors import DataError

REQUIRED_FIELDS = ("id", "question", "entities", "lf")


def validate_record(record: dict, where: str = "record") -> None:
    if not isinstance(record, dict):
        raise DataError(f"{where}: not a JSON object")
    for field in REQUIRED_FIELDS:
        if field not in record:
            raise DataError(f"{where}: missing field {field!r}")
    if not isinstance(record["question"], str):
        raise DataError(f"{where}: question must be a string")
    if not isinstance(record["lf"], str):
        raise DataError(f"{where}: lf must be a string")
    if not isinstance(record["entities"], list):
        raise DataError(f"{where}: entities must be a list")


def read_jsonl(path: str, validate: bool = True) -> list[dict]:
    if not os.path.exists(path):
        raise DataError(f"no such dataset file: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSON: {exc}") from None
            if validate:
                validate_record(record, where=f"{path}:{lineno}")
            records.append(record)
    return records


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False)


def write_jsonl(records: list[dict], path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record))
            fh.write("\n")
