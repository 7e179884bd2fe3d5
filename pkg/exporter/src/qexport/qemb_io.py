"""QEMB binary writer.

Layout (integers unsigned 32-bit little-endian, floats 32-bit LE):

    magic "QEMB" | version | n_sentences | n_layers | dim | granularity
    [token-level only] n_sentences token counts
    per layer: row-major rows x dim float block

Granularity flag: 0 = sentence_level (one row per sentence per layer),
1 = token_level (one row per token, sentences in manifest order).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

QEMB_MAGIC = b"QEMB"
QEMB_VERSION = 1
GRANULARITY_FLAGS = {"sentence_level": 0, "token_level": 1}

_HEADER = struct.Struct("<4sIIIII")


def write_qemb_file(
    path: str | Path,
    layer_blocks: Sequence[np.ndarray],
    n_sentences: int,
    granularity: str = "sentence_level",
    token_counts: Optional[Sequence[int]] = None,
) -> Path:
    if granularity not in GRANULARITY_FLAGS:
        raise ValueError(f"unknown granularity {granularity!r}")
    blocks = [np.ascontiguousarray(b, dtype="<f4") for b in layer_blocks]
    if not blocks:
        raise ValueError("need at least one layer block")
    dim = blocks[0].shape[1]
    if granularity == "token_level":
        if token_counts is None:
            raise ValueError("token-level output requires per-sentence counts")
        rows = int(sum(token_counts))
    else:
        rows = n_sentences
    for block in blocks:
        if block.shape != (rows, dim):
            raise ValueError(
                f"block shape {block.shape} does not match ({rows}, {dim})"
            )
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(
            _HEADER.pack(
                QEMB_MAGIC,
                QEMB_VERSION,
                n_sentences,
                len(blocks),
                dim,
                GRANULARITY_FLAGS[granularity],
            )
        )
        if granularity == "token_level":
            handle.write(np.asarray(token_counts, dtype="<u4").tobytes(order="C"))
        for block in blocks:
            handle.write(block.tobytes(order="C"))
    return path


def read_qemb_header(path: str | Path) -> dict:
    """Parse just the fixed header; used for consistency checks."""
    raw = Path(path).read_bytes()[: _HEADER.size]
    magic, version, n_sentences, n_layers, dim, flag = _HEADER.unpack(raw)
    if magic != QEMB_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    granularity = {v: k for k, v in GRANULARITY_FLAGS.items()}[flag]
    return {
        "version": version,
        "n_sentences": n_sentences,
        "n_layers": n_layers,
        "dim": dim,
        "granularity": granularity,
    }
