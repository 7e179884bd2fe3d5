"""Export manifest: the sidecar record accompanying every QEMB file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path


@dataclass
class ExportManifest:
    model_id: str
    tokenizer_fingerprint: str
    pooling: str  # "mean" or "none"
    layer_indices: list[int]
    sentence_ids: list[str]
    dim: int
    granularity: str
    created_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )
    truncated_ids: list[str] = field(default_factory=list)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(asdict(self), ensure_ascii=False, indent=2),
            encoding="utf-8",
        )
        return path

    @classmethod
    def read(cls, path: str | Path) -> "ExportManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def tokenizer_fingerprint(tokenizer) -> str:
    """Stable hash of the tokenizer's vocabulary mapping."""
    vocab = tokenizer.get_vocab()
    blob = json.dumps(sorted(vocab.items()), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
