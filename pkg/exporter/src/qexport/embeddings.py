"""Frozen-encoder embedding export into the QEMB format.

The forward pass runs under torch.no_grad with the model in eval mode, so
exported values are identical whether or not a training context is active,
and batch size must not change values beyond float reordering noise (the
acceptance test asserts equality across batch sizes at 1e-5).
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .manifest import ExportManifest, tokenizer_fingerprint
from .qemb_io import write_qemb_file

logger = logging.getLogger(__name__)


def load_model(model_id: str):
    import torch
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ValueError(f"cannot load model {model_id!r}: {exc}") from exc
    model.eval()
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    return model


def _resolve_max_length(model, tokenizer, max_length: Optional[int]) -> int:
    if max_length is not None:
        return max_length
    candidate = getattr(tokenizer, "model_max_length", None)
    if candidate and candidate < 10**6:
        return int(candidate)
    return int(getattr(model.config, "max_position_embeddings", 512))


def export_embeddings(
    corpus: list[dict],
    model,
    tokenizer,
    output_path: str | Path,
    layers: Optional[Sequence[int]] = None,
    pooling: str = "mean",
    batch_size: int = 16,
    max_length: Optional[int] = None,
    model_id: Optional[str] = None,
) -> tuple[Path, ExportManifest]:
    """Write a QEMB file plus manifest; returns both paths' objects.

    `layers` are 1-based encoder layer indices (the embedding layer is not
    exported); default is every encoder layer. pooling="mean" averages
    non-special token positions into one row per sentence; pooling="none"
    stores token-level rows with per-sentence counts. Sentences longer
    than the model maximum are truncated and flagged in the manifest.
    """
    import torch

    if isinstance(model, (str, Path)):
        model_id = model_id or str(model)
        model = load_model(str(model))
    if isinstance(tokenizer, (str, Path)):
        from .subwords import load_tokenizer

        tokenizer = load_tokenizer(str(tokenizer))
    if pooling not in ("mean", "none"):
        raise ValueError(f"unknown pooling {pooling!r}")
    model.eval()  # frozen contract: no dropout, no parameter updates

    n_encoder_layers = int(model.config.num_hidden_layers)
    layer_indices = list(layers) if layers else list(range(1, n_encoder_layers + 1))
    bad = [k for k in layer_indices if k < 1 or k > n_encoder_layers]
    if bad:
        raise ValueError(
            f"layer indices {bad} outside the encoder's 1..{n_encoder_layers}"
        )
    limit = _resolve_max_length(model, tokenizer, max_length)

    ids = [s["id"] for s in corpus]
    texts = [s["text"] for s in corpus]
    truncated: list[str] = []
    per_layer_chunks: dict[int, list[np.ndarray]] = {k: [] for k in layer_indices}
    token_counts: list[int] = []

    for start in range(0, len(texts), batch_size):
        batch_texts = texts[start : start + batch_size]
        encoded = tokenizer(
            batch_texts,
            padding=True,
            truncation=True,
            max_length=limit,
            return_special_tokens_mask=True,
            return_tensors="pt",
        )
        overflow = tokenizer(batch_texts, truncation=False)["input_ids"]
        for offset, row in enumerate(overflow):
            if len(row) > limit:
                truncated.append(ids[start + offset])
        special = encoded.pop("special_tokens_mask")
        with torch.no_grad():
            outputs = model(**encoded, output_hidden_states=True)
        attention = encoded["attention_mask"]
        content = attention * (1 - special)
        row_counts = content.sum(dim=1)
        for offset in range(len(batch_texts)):
            if row_counts[offset] == 0:
                # nothing but specials (empty text): pool over non-padding
                logger.warning(
                    "sentence %s has no content tokens; pooling over "
                    "special positions",
                    ids[start + offset],
                )
                content[offset] = attention[offset]
        row_counts = content.sum(dim=1)
        if pooling == "none":
            token_counts.extend(int(c) for c in row_counts)
        for k in layer_indices:
            hidden = outputs.hidden_states[k]  # (batch, seq, dim)
            if pooling == "mean":
                mask = content.unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / row_counts.unsqueeze(-1).to(
                    hidden.dtype
                )
                per_layer_chunks[k].append(pooled.cpu().numpy().astype("<f4"))
            else:
                for offset in range(len(batch_texts)):
                    keep = content[offset].bool()
                    per_layer_chunks[k].append(
                        hidden[offset][keep].cpu().numpy().astype("<f4")
                    )

    blocks = [np.concatenate(per_layer_chunks[k], axis=0) for k in layer_indices]
    dim = blocks[0].shape[1]
    granularity = "sentence_level" if pooling == "mean" else "token_level"
    output_path = Path(output_path)
    write_qemb_file(
        output_path,
        blocks,
        n_sentences=len(ids),
        granularity=granularity,
        token_counts=token_counts if pooling == "none" else None,
    )
    manifest = ExportManifest(
        model_id=model_id or getattr(model.config, "name_or_path", "unknown"),
        tokenizer_fingerprint=tokenizer_fingerprint(tokenizer),
        pooling=pooling,
        layer_indices=layer_indices,
        sentence_ids=ids,
        dim=int(dim),
        granularity=granularity,
        truncated_ids=truncated,
    )
    manifest.write(Path(str(output_path) + ".manifest.json"))
    return output_path, manifest
