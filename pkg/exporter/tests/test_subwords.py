import json

import pytest

from qexport.corpus_io import read_corpus
from qexport.subwords import export_subwords, load_tokenizer


def read_records(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line]


class TestExportSubwords:
    def test_pieces_in_encounter_order_without_specials(self, tiny_paths, small_corpus, tmp_path):
        corpus = read_corpus(small_corpus)
        out = export_subwords(corpus, tiny_paths["tokenizer"], tmp_path / "sub.jsonl")
        records = read_records(out)
        assert [r["id"] for r in records] == ["q1", "q2", "q3", "q4", "q5"]
        assert records[0]["pieces"] == ["is", "it", "raining", "?"]
        for record in records:
            assert "[CLS]" not in record["pieces"]
            assert "[SEP]" not in record["pieces"]

    def test_empty_text_gives_empty_pieces(self, tiny_paths, tmp_path):
        corpus = [{"id": "empty", "text": ""}]
        out = export_subwords(corpus, tiny_paths["tokenizer"], tmp_path / "sub.jsonl")
        (record,) = read_records(out)
        assert record == {"id": "empty", "pieces": []}

    def test_re_export_is_byte_identical(self, tiny_paths, small_corpus, tmp_path):
        corpus = read_corpus(small_corpus)
        tokenizer = load_tokenizer(tiny_paths["tokenizer"])
        first = export_subwords(corpus, tokenizer, tmp_path / "a.jsonl")
        second = export_subwords(corpus, tokenizer, tmp_path / "b.jsonl")
        assert first.read_bytes() == second.read_bytes()

    def test_piece_count_at_least_word_count(self, tiny_paths, small_corpus, tmp_path):
        # subword splitting only refines whitespace words, never merges them
        corpus = read_corpus(small_corpus)
        out = export_subwords(corpus, tiny_paths["tokenizer"], tmp_path / "sub.jsonl")
        for record, sentence in zip(read_records(out), corpus):
            words = [w for w in sentence["text"].split() if w]
            assert len(record["pieces"]) >= len(words)

    def test_unloadable_tokenizer_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            load_tokenizer(str(tmp_path / "no-such-tokenizer"))


class TestReadCorpus:
    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n')
        with pytest.raises(ValueError):
            read_corpus(path)

    def test_missing_id_rejected(self, tmp_path):
        path = tmp_path / "noid.jsonl"
        path.write_text('{"text": "x"}\n')
        with pytest.raises(ValueError):
            read_corpus(path)
