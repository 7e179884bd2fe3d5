"""Subword sequence export: one JSON line {id, pieces} per sentence."""

from __future__ import annotations

import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def load_tokenizer(tokenizer_id: str):
    from transformers import AutoTokenizer

    try:
        return AutoTokenizer.from_pretrained(tokenizer_id)
    except Exception as exc:
        raise ValueError(f"cannot load tokenizer {tokenizer_id!r}: {exc}") from exc


def export_subwords(corpus: list[dict], tokenizer, output_path: str | Path) -> Path:
    """Tokenize every sentence; pieces in encounter order, specials excluded.

    `tokenizer` may be a loaded tokenizer object or a model id / local path.
    Empty-text sentences get an empty pieces list and a logged warning.
    """
    if isinstance(tokenizer, (str, Path)):
        tokenizer = load_tokenizer(str(tokenizer))
    output_path = Path(output_path)
    with output_path.open("w", encoding="utf-8") as handle:
        for sentence in corpus:
            text = sentence["text"]
            # tokenize() yields content pieces only, no special tokens
            pieces = tokenizer.tokenize(text) if text else []
            if not pieces:
                logger.warning(
                    "sentence %s produced no subword pieces", sentence["id"]
                )
            record = {"id": sentence["id"], "pieces": pieces}
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")
    return output_path
