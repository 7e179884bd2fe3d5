"""CoNLL-U and interchange-file ingestion into validated dependency sentences.

A sentence is kept as a flat token list plus a derived tree (children lists
and depths). Multiword range lines ("3-4") and empty nodes ("3.1") are
dropped at parse time: every downstream metric operates on basic syntactic
words only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import FormatError, ParseError, TreeValidationError

logger = logging.getLogger(__name__)

SUPPORTED_LANGUAGES = ("ara", "eng", "fin", "ind", "jpn", "kor", "rus")

# interchange field names are part of the on-disk contract; do not rename
_TOKEN_FIELDS = ("index", "form", "lemma", "upos", "head", "deprel")


@dataclass(frozen=True)
class Token:
    """One syntactic word: 1-based index, surface form, tags, head link."""

    index: int
    form: str
    lemma: str
    upos: str
    head: int
    deprel: str

    def deprel_base(self) -> str:
        """Relation name with any ":subtype" suffix stripped."""
        return self.deprel.split(":", 1)[0]

    def is_punct(self) -> bool:
        # PUNCT by POS; deprel "punct" accepted as fallback when upos missing
        if self.upos == "PUNCT":
            return True
        return self.upos in ("", "_") and self.deprel_base() == "punct"


@dataclass
class DepSentence:
    """A parsed sentence with optional label, split tag and cached metrics."""

    id: str
    language: str
    text: str
    tokens: list[Token]
    question_label: Optional[int] = None
    split_tag: Optional[str] = None
    metrics: Optional[dict] = None

    def __len__(self) -> int:
        return len(self.tokens)

    def root_index(self) -> int:
        for tok in self.tokens:
            if tok.head == 0:
                return tok.index
        raise TreeValidationError(f"sentence {self.id!r} has no root token")

    def validate(self) -> None:
        """Raise TreeValidationError unless tokens form a single rooted tree."""
        n = len(self.tokens)
        if n == 0:
            raise TreeValidationError(f"sentence {self.id!r} has no tokens")
        indices = [tok.index for tok in self.tokens]
        if indices != list(range(1, n + 1)):
            raise TreeValidationError(
                f"sentence {self.id!r}: token indices are not 1..{n}"
            )
        roots = [tok.index for tok in self.tokens if tok.head == 0]
        if len(roots) != 1:
            raise TreeValidationError(
                f"sentence {self.id!r}: expected exactly one root, found {len(roots)}"
            )
        for tok in self.tokens:
            if tok.head == tok.index:
                raise TreeValidationError(
                    f"sentence {self.id!r}: token {tok.index} is its own head"
                )
            if tok.head < 0 or tok.head > n:
                raise TreeValidationError(
                    f"sentence {self.id!r}: token {tok.index} has head "
                    f"{tok.head} outside 1..{n}"
                )
        # reachability from the root proves acyclicity for a head function
        children: dict[int, list[int]] = {i: [] for i in range(0, n + 1)}
        for tok in self.tokens:
            children[tok.head].append(tok.index)
        seen = set()
        stack = [0]
        while stack:
            node = stack.pop()
            for child in children[node]:
                seen.add(child)
                stack.append(child)
        if len(seen) != n:
            raise TreeValidationError(
                f"sentence {self.id!r}: head links contain a cycle"
            )


@dataclass
class DepTree:
    """Derived adjacency for one sentence: children lists and per-token depth.

    Depth convention: the root-attached token has depth 0 and each child is
    one deeper than its parent.
    """

    root: int
    children: dict[int, list[int]]
    depth: dict[int, int]


def build_tree(sentence: DepSentence) -> DepTree:
    """Compute children lists and depths; child order follows token index."""
    sentence.validate()
    children: dict[int, list[int]] = {tok.index: [] for tok in sentence.tokens}
    root = sentence.root_index()
    for tok in sentence.tokens:
        if tok.head != 0:
            children[tok.head].append(tok.index)
    for lst in children.values():
        lst.sort()
    depth = {root: 0}
    stack = [root]
    while stack:
        node = stack.pop()
        for child in children[node]:
            depth[child] = depth[node] + 1
            stack.append(child)
    return DepTree(root=root, children=children, depth=depth)


def _is_range_or_empty_id(column: str) -> bool:
    return "-" in column or "." in column


def _parse_block(
    lines: list[tuple[int, str]], language: str, fallback_id: str
) -> DepSentence:
    sent_id = None
    text = None
    tokens: list[Token] = []
    for lineno, line in lines:
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                key = key.strip()
                if key == "sent_id":
                    sent_id = value.strip()
                elif key == "text":
                    text = value.strip()
            continue
        columns = line.split("\t")
        if len(columns) != 10:
            raise ParseError(
                f"expected 10 tab-separated columns, got {len(columns)}",
                line=lineno,
            )
        if _is_range_or_empty_id(columns[0]):
            continue  # multiword range or empty node
        try:
            index = int(columns[0])
            head = int(columns[6])
        except ValueError as exc:
            raise ParseError(f"non-integer token id or head: {exc}", line=lineno)
        lemma = "" if columns[2] == "_" else columns[2]
        tokens.append(
            Token(
                index=index,
                form=columns[1],
                lemma=lemma,
                upos=columns[3],
                head=head,
                deprel=columns[7],
            )
        )
    sentence = DepSentence(
        id=sent_id or fallback_id,
        language=language,
        text=text if text is not None else " ".join(t.form for t in tokens),
        tokens=tokens,
    )
    sentence.validate()
    return sentence


def parse_conllu(
    text: str, language: str, source: str = "conllu", strict: bool = True
) -> list[DepSentence]:
    """Parse CoNLL-U text into one DepSentence per block, in block order.

    Sentence ids come from "# sent_id" comments, else "<source>:<ordinal>".
    With strict=False, blocks that fail validation are skipped with a logged
    warning instead of aborting the whole corpus.
    """
    sentences: list[DepSentence] = []
    block: list[tuple[int, str]] = []
    ordinal = 0

    def flush() -> None:
        nonlocal ordinal
        if not block:
            return
        ordinal += 1
        try:
            sentences.append(_parse_block(block, language, f"{source}:{ordinal}"))
        except (ParseError, TreeValidationError):
            if strict:
                raise
            logger.warning(
                "skipping invalid sentence %s:%d: %s",
                source,
                ordinal,
                "validation failed",
            )
        block.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if line.strip() == "":
            flush()
        else:
            block.append((lineno, line))
    flush()
    return sentences


def parse_conllu_file(
    path: str | Path, language: str, strict: bool = True
) -> list[DepSentence]:
    path = Path(path)
    return parse_conllu(
        path.read_text(encoding="utf-8"), language, source=path.stem, strict=strict
    )


def sentence_to_record(sentence: DepSentence) -> dict:
    """Interchange record for one sentence; field names are the contract."""
    record = {
        "id": sentence.id,
        "language": sentence.language,
        "text": sentence.text,
        "tokens": [
            {
                "index": tok.index,
                "form": tok.form,
                "lemma": tok.lemma,
                "upos": tok.upos,
                "head": tok.head,
                "deprel": tok.deprel,
            }
            for tok in sentence.tokens
        ],
    }
    if sentence.question_label is not None:
        record["question_label"] = sentence.question_label
    if sentence.metrics is not None:
        record["metrics"] = sentence.metrics
    if sentence.split_tag is not None:
        record["split_tag"] = sentence.split_tag
    return record


def record_to_sentence(record: dict) -> DepSentence:
    if "tokens" not in record:
        raise FormatError("record is missing the tokens array")
    tokens = []
    for entry in record["tokens"]:
        missing = [f for f in _TOKEN_FIELDS if f not in entry]
        if missing:
            raise FormatError(f"token entry is missing fields {missing}")
        tokens.append(
            Token(
                index=int(entry["index"]),
                form=entry["form"],
                lemma=entry["lemma"],
                upos=entry["upos"],
                head=int(entry["head"]),
                deprel=entry["deprel"],
            )
        )
    label = record.get("question_label")
    return DepSentence(
        id=record.get("id", ""),
        language=record.get("language", ""),
        text=record.get("text", ""),
        tokens=tokens,
        question_label=None if label is None else int(label),
        split_tag=record.get("split_tag"),
        metrics=record.get("metrics"),
    )


def save_labeled_corpus(
    sentences: Iterable[DepSentence], path: str | Path
) -> None:
    """Write one JSON record per line in the sentence interchange format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for sentence in sentences:
            handle.write(
                json.dumps(sentence_to_record(sentence), ensure_ascii=False)
            )
            handle.write("\n")


def iter_labeled_corpus(path: str | Path) -> Iterator[DepSentence]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON: {exc}")
            try:
                yield record_to_sentence(record)
            except FormatError as exc:
                raise FormatError(f"line {lineno}: {exc}")


def load_labeled_corpus(path: str | Path) -> list[DepSentence]:
    """Load a line-delimited interchange file; unknown fields are ignored."""
    return list(iter_labeled_corpus(path))
