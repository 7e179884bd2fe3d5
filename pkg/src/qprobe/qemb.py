"""QEMB binary interchange for per-layer sentence embeddings.

Layout (all integers unsigned 32-bit little-endian, floats 32-bit LE):

    magic "QEMB" | version | n_sentences | n_layers | dim | granularity
    [token-level only] n_sentences token counts
    for each layer block: row-major rows x dim floats

Sentence-level blocks hold n_sentences rows per layer; token-level blocks
hold one row per token, sentences in manifest order. A JSON sidecar
(<file>.manifest.json by default) records model_id, pooling, layer_indices
and sentence_ids in row order; unknown manifest fields are ignored.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError

QEMB_MAGIC = b"QEMB"
QEMB_VERSION = 1
GRANULARITIES = ("sentence_level", "token_level")

_HEADER = struct.Struct("<4sIIIII")


def default_manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".manifest.json")


def write_qemb(
    path: str | Path,
    layer_matrices: Sequence[np.ndarray],
    sentence_ids: Sequence[str],
    layer_indices: Optional[Sequence[int]] = None,
    granularity: str = "sentence_level",
    token_counts: Optional[Sequence[int]] = None,
    model_id: str = "unknown",
    pooling: str = "mean",
    manifest_path: Optional[str | Path] = None,
    manifest_extra: Optional[dict] = None,
) -> Path:
    """Write one QEMB file plus its manifest sidecar; returns the data path."""
    if granularity not in GRANULARITIES:
        raise FormatError(f"unknown granularity {granularity!r}")
    matrices = [np.ascontiguousarray(m, dtype="<f4") for m in layer_matrices]
    if not matrices:
        raise FormatError("need at least one layer matrix")
    dim = matrices[0].shape[1]
    n_sentences = len(sentence_ids)
    if granularity == "sentence_level":
        expected_rows = n_sentences
    else:
        if token_counts is None:
            raise FormatError("token-level files require token counts")
        expected_rows = int(sum(token_counts))
    for m in matrices:
        if m.shape != (expected_rows, dim):
            raise FormatError(
                f"layer block shape {m.shape} does not match "
                f"({expected_rows}, {dim})"
            )
    if layer_indices is None:
        layer_indices = list(range(1, len(matrices) + 1))
    if len(layer_indices) != len(matrices):
        raise FormatError("layer_indices must match the number of layer blocks")

    path = Path(path)
    with path.open("wb") as handle:
        handle.write(
            _HEADER.pack(
                QEMB_MAGIC,
                QEMB_VERSION,
                n_sentences,
                len(matrices),
                dim,
                GRANULARITIES.index(granularity),
            )
        )
        if granularity == "token_level":
            handle.write(
                np.asarray(token_counts, dtype="<u4").tobytes(order="C")
            )
        for m in matrices:
            handle.write(m.tobytes(order="C"))

    manifest = {
        "model_id": model_id,
        "pooling": pooling,
        "layer_indices": list(int(i) for i in layer_indices),
        "sentence_ids": list(sentence_ids),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    manifest_file = (
        Path(manifest_path) if manifest_path else default_manifest_path(path)
    )
    manifest_file.write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return path


def read_qemb(
    path: str | Path, manifest_path: Optional[str | Path] = None
) -> tuple[dict, dict]:
    """Read a QEMB file; returns (header+blocks dict, manifest dict).

    The first dict carries n_sentences, n_layers, dim, granularity, the
    per-layer float32 blocks keyed by position, and token counts when
    token-level.
    """
    path = Path(path)
    manifest_file = (
        Path(manifest_path) if manifest_path else default_manifest_path(path)
    )
    if not manifest_file.exists():
        raise FormatError(f"missing manifest sidecar {manifest_file}")
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    for key in ("model_id", "pooling", "layer_indices", "sentence_ids"):
        if key not in manifest:
            raise FormatError(f"manifest is missing field {key!r}")

    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file too short for a QEMB header")
    magic, version, n_sentences, n_layers, dim, gran_flag = _HEADER.unpack_from(raw)
    if magic != QEMB_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {QEMB_MAGIC!r}")
    if version != QEMB_VERSION:
        raise FormatError(f"unsupported QEMB version {version}")
    if gran_flag >= len(GRANULARITIES):
        raise FormatError(f"unknown granularity flag {gran_flag}")
    granularity = GRANULARITIES[gran_flag]
    offset = _HEADER.size
    token_counts = None
    if granularity == "token_level":
        counts = np.frombuffer(raw, dtype="<u4", count=n_sentences, offset=offset)
        token_counts = counts.astype(int)
        offset += 4 * n_sentences
        rows = int(token_counts.sum())
    else:
        rows = n_sentences
    blocks = []
    block_bytes = rows * dim * 4
    for _ in range(n_layers):
        if offset + block_bytes > len(raw):
            raise FormatError("QEMB body truncated")
        block = np.frombuffer(
            raw, dtype="<f4", count=rows * dim, offset=offset
        ).reshape(rows, dim)
        blocks.append(block)
        offset += block_bytes
    if offset != len(raw):
        raise FormatError("trailing bytes after the last QEMB layer block")

    if len(manifest["sentence_ids"]) != n_sentences:
        raise FormatError(
            "manifest sentence_ids length does not match the QEMB header"
        )
    if len(manifest["layer_indices"]) != n_layers:
        raise FormatError(
            "manifest layer_indices length does not match the QEMB header"
        )
    data = {
        "n_sentences": n_sentences,
        "n_layers": n_layers,
        "dim": dim,
        "granularity": granularity,
        "token_counts": token_counts,
        "blocks": blocks,
    }
    return data, manifest
