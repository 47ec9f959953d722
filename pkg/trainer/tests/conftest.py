import json
import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

from enctrain.model import Encoder

VOCAB_CHARS = "消防车猫狗红色蓝黑街道夜晚城市公园孩子雨风筝湖樱花学生教室厨师蔬菜桥河流水火abcdefghij0123456789"

PASSAGES = [
    ("p1", "红色消防车街道"),
    ("p2", "猫夜晚街道"),
    ("p3", "城市夜晚湖"),
    ("p4", "孩子公园风筝"),
    ("p5", "厨师蔬菜火"),
    ("p6", "学生教室"),
]


def _queries_for(pid: str, text: str) -> list[dict]:
    return [
        {"passage_id": pid, "kind": "SM", "text": text[:3]},
        {"passage_id": pid, "kind": "KW", "text": text[-2:]},
    ]


@pytest.fixture(scope="session")
def corpus_rows():
    return list(PASSAGES)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A saved, randomly initialized one-layer BERT with a character vocab."""
    root = tmp_path_factory.mktemp("backbone")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + list(VOCAB_CHARS)
    vocab_path = root / "vocab.txt"
    vocab_path.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    cfg = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(1234)
    model = BertModel(cfg)
    ckpt = root / "ckpt"
    model.save_pretrained(ckpt)
    BertTokenizer(vocab_file=str(vocab_path)).save_pretrained(ckpt)
    return str(ckpt)


@pytest.fixture()
def tiny_encoder(tiny_checkpoint):
    return Encoder.load(tiny_checkpoint, max_length=32)


@pytest.fixture()
def pairs_file(tmp_path):
    """A small training export: two generated queries per passage."""
    path = tmp_path / "pairs.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        for pid, text in PASSAGES:
            for q in _queries_for(pid, text):
                f.write(
                    json.dumps(
                        {
                            "query": q["text"],
                            "positives": [text],
                            "negatives": [],
                            "kind": q["kind"],
                            "passage_id": pid,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    return str(path)


@pytest.fixture()
def holdout_files(tmp_path):
    """Corpus passages TSV plus a holdout-queries JSONL referencing them."""
    corpus = tmp_path / "corpus.tsv"
    with open(corpus, "w", encoding="utf-8") as f:
        for pid, text in PASSAGES:
            f.write(f"{pid}\t{text}\n")
    holdout = tmp_path / "holdout.jsonl"
    with open(holdout, "w", encoding="utf-8") as f:
        for pid, text in PASSAGES[:3]:
            f.write(
                json.dumps(
                    {"passage_id": pid, "kind": "KW", "text": text[:2]}, ensure_ascii=False
                )
                + "\n"
            )
    return str(holdout), str(corpus)
