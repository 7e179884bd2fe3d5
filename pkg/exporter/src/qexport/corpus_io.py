"""Minimal reader for the sentence interchange format.

The exporter needs only sentence ids and raw text; every other field is
passed over. Records are UTF-8 JSON lines.
"""

from __future__ import annotations

import json
from pathlib import Path


def read_corpus(path: str | Path) -> list[dict]:
    """Returns [{"id": ..., "text": ...}, ...] in file order."""
    sentences = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "id" not in record:
                raise ValueError(f"line {lineno}: record has no id field")
            sentences.append(
                {"id": str(record["id"]), "text": str(record.get("text", ""))}
            )
    ids = [s["id"] for s in sentences]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus contains duplicate sentence ids")
    return sentences
