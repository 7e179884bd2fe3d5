"""Session fixtures: a tiny deterministic encoder and word-level tokenizer.

Everything is built locally (no hub access) and saved to a session tmp dir
so the AutoModel/AutoTokenizer loading paths are exercised for real.
"""

import json

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers, processors
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

WORDS = [
    "is", "it", "raining", "who", "left", "what", "did", "the", "committee",
    "decide", "about", "proposal", "hello", "world", "?",
]


@pytest.fixture(scope="session")
def tiny_paths(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    vocab = {"[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "[SEP]": 3}
    for word in WORDS:
        vocab[word] = len(vocab)
    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", 2), ("[SEP]", 3)],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        model_max_length=16,
    )
    tok_dir = base / "tokenizer"
    fast.save_pretrained(tok_dir)

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=3,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=16,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    model_dir = base / "model"
    model.save_pretrained(model_dir)
    return {"tokenizer": str(tok_dir), "model": str(model_dir)}


@pytest.fixture
def small_corpus(tmp_path):
    records = [
        {"id": "q1", "language": "eng", "text": "is it raining ?"},
        {"id": "q2", "language": "eng", "text": "who left ?"},
        {"id": "q3", "language": "eng", "text": "what did the committee decide about the proposal ?"},
        {"id": "q4", "language": "eng", "text": "hello"},
        {"id": "q5", "language": "eng", "text": "world world world"},
    ]
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
    )
    return path
