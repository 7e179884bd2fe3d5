"""Subword TF-IDF features over externally tokenized sentences.

The tokenizer itself lives in the exporter tool; this module only consumes
its line-delimited output ({id, pieces:[...]} or {id, piece_ids:[...],
vocab_size}) and turns sequences into L2-normalized sparse vectors. The
vocabulary is always fitted on a training split, never on validation or
test data, so control and real runs share the same construction protocol.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError, FormatError


@dataclass(frozen=True)
class SubwordSequence:
    """Sentence id plus its subword pieces in encounter order."""

    id: str
    pieces: tuple[Hashable, ...]


@dataclass(frozen=True)
class SparseVector:
    """Sorted (index, value) pairs of one TF-IDF row; dimension V."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise DataError("sparse vector indices must be strictly increasing")
        if self.indices and self.indices[-1] >= self.dimension:
            raise DataError("sparse vector index out of range")
        if not all(math.isfinite(v) for v in self.values):
            raise DataError("sparse vector values must be finite")

    def l2_norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def load_subword_file(path: str | Path) -> list[SubwordSequence]:
    """Read the exporter's line-delimited subword records."""
    sequences = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "pieces" in record:
                pieces = tuple(record["pieces"])
            elif "piece_ids" in record:
                pieces = tuple(int(p) for p in record["piece_ids"])
            else:
                raise FormatError(
                    f"line {lineno}: record has neither pieces nor piece_ids"
                )
            sequences.append(SubwordSequence(id=str(record["id"]), pieces=pieces))
    return sequences


class SubwordTfidf(BaseEstimator, TransformerMixin):
    """TF-IDF vectorizer over pre-tokenized subword sequences.

    idf(p) = ln((1 + D) / (1 + df(p))) + 1 with D the number of training
    sequences; term weights are raw counts times idf, then each row is
    L2-normalized. Pieces unseen at fit time are ignored at transform time.
    """

    def __init__(self):
        pass

    def fit(self, sequences: Sequence[SubwordSequence], y=None, split_tag="train"):
        sequences = list(sequences)
        if not sequences:
            raise DataError("cannot fit a TF-IDF vocabulary on an empty input")
        self.fitted_on_ = split_tag
        df: dict[Hashable, int] = {}
        for seq in sequences:
            for piece in set(seq.pieces):
                df[piece] = df.get(piece, 0) + 1
        # deterministic column order: sort pieces by their string form
        ordered = sorted(df, key=lambda piece: (str(type(piece)), str(piece)))
        self.vocabulary_ = {piece: col for col, piece in enumerate(ordered)}
        n_docs = len(sequences)
        self.idf_ = np.array(
            [math.log((1 + n_docs) / (1 + df[piece])) + 1.0 for piece in ordered]
        )
        self.n_documents_ = n_docs
        return self

    def _check_fitted(self):
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError("SubwordTfidf must be fitted before use")

    def vectorize(self, sequence: SubwordSequence) -> SparseVector:
        """One sequence to a normalized SparseVector (zero if all OOV)."""
        self._check_fitted()
        counts: dict[int, int] = {}
        for piece in sequence.pieces:
            col = self.vocabulary_.get(piece)
            if col is not None:
                counts[col] = counts.get(col, 0) + 1
        if not counts:
            return SparseVector((), (), dimension=len(self.vocabulary_))
        indices = tuple(sorted(counts))
        raw = [counts[i] * self.idf_[i] for i in indices]
        norm = math.sqrt(sum(v * v for v in raw))
        return SparseVector(
            indices=indices,
            values=tuple(v / norm for v in raw),
            dimension=len(self.vocabulary_),
        )

    def transform(self, sequences: Iterable[SubwordSequence]) -> sparse.csr_matrix:
        """Stack vectorized rows into a CSR matrix."""
        self._check_fitted()
        data: list[float] = []
        indices: list[int] = []
        indptr = [0]
        for seq in sequences:
            vec = self.vectorize(seq)
            indices.extend(vec.indices)
            data.extend(vec.values)
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr)),
            shape=(len(indptr) - 1, len(self.vocabulary_)),
        )


def fit_vocabulary(train_sequences: Sequence[SubwordSequence]) -> SubwordTfidf:
    """Fit the vocabulary and idf weights on the training split only."""
    return SubwordTfidf().fit(train_sequences)


def vectorize(sequence: SubwordSequence, vocab: SubwordTfidf) -> SparseVector:
    return vocab.vectorize(sequence)
