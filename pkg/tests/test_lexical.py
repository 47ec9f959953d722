import math

import pytest

from denseval.corpus import Passage
from denseval.errors import UnknownIdError
from denseval.lexical import (
    Bm25Index,
    DictTokenizer,
    PretokenizedTokenizer,
    bm25_all_scores,
    bm25_score,
    bm25_search,
    build_index,
    load_pretokenized,
    unigram_tokenize,
)


def test_unigram_splits_cjk_per_character():
    assert unigram_tokenize("消防车") == ["消", "防", "车"]


def test_unigram_keeps_latin_runs_lowercased():
    assert unigram_tokenize("iPhone 15 发布") == ["iphone", "15", "发", "布"]


def test_unigram_mixed_and_punctuation():
    assert unigram_tokenize("你好, world!") == ["你", "好", "world"]
    assert unigram_tokenize("") == []
    assert unigram_tokenize("   ") == []


def test_dict_tokenizer_longest_match():
    tok = DictTokenizer(["消防车", "消防", "公园"])
    assert tok("消防车在公园") == ["消防车", "在", "公园"]


def test_dict_tokenizer_falls_back_to_unigrams():
    tok = DictTokenizer(["猫"])
    assert tok("小猫叫") == ["小", "猫", "叫"]


def test_dict_tokenizer_from_file(tmp_path):
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("消防车 427\n公园\n", encoding="utf-8")  # extra columns ignored
    tok = DictTokenizer.from_file(str(vocab))
    assert tok("消防车去公园") == ["消防车", "去", "公园"]


def test_pretokenized_lookup(tmp_path):
    f = tmp_path / "pretok.tsv"
    f.write_text("t1\t消防 车\nt2\t公园\n", encoding="utf-8")
    table = load_pretokenized(str(f))
    assert table["t1"] == ["消防", "车"]


def test_pretokenized_tokenizer_by_exact_text():
    tok = PretokenizedTokenizer({"消防车": ["消防", "车"]})
    assert tok("消防车") == ["消防", "车"]
    with pytest.raises(UnknownIdError):
        tok("别的")


CORPUS = [
    Passage("d1", "红色消防车"),
    Passage("d2", "蓝色汽车"),
    Passage("d3", "红色玫瑰花"),
]


def test_idf_lucene_always_positive():
    idx = build_index(CORPUS, unigram_tokenize)
    for term in ("红", "色", "车"):
        assert idx.idf(term) > 0.0
    # by-hand Lucene idf for df=2, N=3
    expected = math.log(1.0 + (3 - 2 + 0.5) / (2 + 0.5))
    assert idx.idf("红") == pytest.approx(expected, abs=0)


def test_idf_unseen_term_is_zero_weight():
    idx = build_index(CORPUS, unigram_tokenize)
    assert idx.df("猫") == 0
    hits = bm25_search(idx, "猫", unigram_tokenize, 5)
    assert hits == []


def test_classic_eps_floors_negative_idf():
    # "色" appears in all 3 docs: classic idf = ln(0.5/3.5) < 0
    idx = build_index(CORPUS, unigram_tokenize, idf_variant="classic-eps")
    assert idx.idf("色") > 0.0
    lucene = build_index(CORPUS, unigram_tokenize)
    assert lucene.idf("色") > 0.0


def test_bm25_score_matches_textbook_formula():
    k1, b = 1.5, 0.75
    idx = build_index(CORPUS, unigram_tokenize, k1=k1, b=b)
    doc_tokens = unigram_tokenize("红色消防车")
    dl, avgdl = len(doc_tokens), idx.avgdl
    expected = 0.0
    for t in ("红", "车"):
        tf = doc_tokens.count(t)
        idf = idx.idf(t)
        expected += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    assert bm25_score(idx, ["红", "车"], "d1") == pytest.approx(expected, rel=1e-12)


def test_bm25_counts_token_multiplicity():
    idx = build_index(CORPUS, unigram_tokenize)
    once = bm25_score(idx, ["红"], "d1")
    twice = bm25_score(idx, ["红", "红"], "d1")
    assert twice == pytest.approx(2 * once, rel=1e-12)


def test_bm25_score_unknown_doc():
    idx = build_index(CORPUS, unigram_tokenize)
    with pytest.raises(UnknownIdError):
        bm25_score(idx, ["红"], "d9")


def test_bm25_all_scores_matches_pointwise():
    idx = build_index(CORPUS, unigram_tokenize)
    q = unigram_tokenize("红色消防车")
    scores = bm25_all_scores(idx, q)
    for i, did in enumerate(idx.doc_ids):
        assert scores[i] == pytest.approx(bm25_score(idx, q, did), rel=1e-12)


def test_bm25_search_ranks_and_excludes_zero_scores():
    idx = build_index(CORPUS, unigram_tokenize)
    hits = bm25_search(idx, "红色消防车", unigram_tokenize, 10)
    ids = [h[0] for h in hits]
    assert ids[0] == "d1"
    assert "d2" in ids  # matches 色 and 车
    scores = [h[1] for h in hits]
    assert scores == sorted(scores, reverse=True)
    assert all(s > 0 for s in scores)


def test_bm25_search_ties_break_by_doc_id():
    corpus = [Passage("b", "猫猫"), Passage("a", "猫猫"), Passage("c", "狗")]
    idx = build_index(corpus, unigram_tokenize)
    hits = bm25_search(idx, "猫", unigram_tokenize, 2)
    assert [h[0] for h in hits] == ["a", "b"]


def test_bm25_search_k_must_be_positive():
    idx = build_index(CORPUS, unigram_tokenize)
    with pytest.raises(ValueError):
        bm25_search(idx, "红", unigram_tokenize, 0)


def test_build_index_validates_parameters():
    with pytest.raises(ValueError):
        build_index(CORPUS, unigram_tokenize, k1=0.0)
    with pytest.raises(ValueError):
        build_index(CORPUS, unigram_tokenize, b=1.5)
    with pytest.raises(ValueError):
        build_index(CORPUS, unigram_tokenize, idf_variant="bogus")


def test_doc_tokens_override():
    # pretokenized documents change term statistics
    override = {"d1": ["红色", "消防车"], "d2": ["蓝色", "汽车"], "d3": ["红色", "玫瑰花"]}
    idx = build_index(CORPUS, unigram_tokenize, doc_tokens=override)
    assert idx.df("红色") == 2
    assert idx.df("红") == 0
    assert idx.doc_length("d1") == 2


def test_empty_query_returns_nothing():
    idx = build_index(CORPUS, unigram_tokenize)
    assert bm25_search(idx, "", unigram_tokenize, 5) == []
