from collections import Counter

import numpy as np
import pytest

from queryguard.corpus import (
    DEFAULT_CLASS_MIX,
    Corpus,
    CorpusConfig,
    gen_benign,
    gen_corpus,
    gen_malicious,
    load_corpus,
    save_corpus,
)
from queryguard.ingest import (
    BENIGN,
    MALICIOUS,
    NormalizedQuery,
    RawQuery,
    char_filter,
    contains_unsafe,
    normalize,
)

SMALL = CorpusConfig(
    batches=3, batch_size=100, malicious_per_batch=10, initial_benign=40,
    initial_malicious=12, seed=5,
)


@pytest.fixture(scope="module")
def small_corpus():
    return gen_corpus(SMALL)


@pytest.fixture(scope="module")
def drawn():
    return gen_malicious(10000, DEFAULT_CLASS_MIX, seed=7)


class TestGeneratedText:
    def test_benign_survives_pipeline(self):
        for text in gen_benign(500, seed=1):
            assert len(text) >= 4
            assert not contains_unsafe(text)
            nq = normalize(RawQuery(text=text, source_line=0))
            assert nq is not None and nq.text == text  # already canonical
            assert char_filter(NormalizedQuery(text=text))

    def test_malicious_survives_pipeline(self):
        # attacks must reach the model, not die at the character filter
        for text, cls in gen_malicious(500, DEFAULT_CLASS_MIX, seed=2):
            assert len(text) >= 4
            assert not contains_unsafe(text)
            assert cls in DEFAULT_CLASS_MIX
            nq = normalize(RawQuery(text=text, source_line=0))
            assert nq is not None and nq.text == text

    def test_benign_pair_count_1_to_4(self):
        for text in gen_benign(2000, seed=3):
            pairs = text.split("&")
            assert 1 <= len(pairs) <= 4
            for p in pairs:
                assert "=" in p

    def test_all_lowercase(self):
        # case mutations happen pre-normalization and must fold back down
        for text, _ in gen_malicious(300, DEFAULT_CLASS_MIX, seed=4):
            assert text == text.lower()

    def test_deterministic(self):
        assert gen_benign(50, seed=9) == gen_benign(50, seed=9)
        assert gen_malicious(50, DEFAULT_CLASS_MIX, seed=9) == gen_malicious(
            50, DEFAULT_CLASS_MIX, seed=9
        )
        assert gen_benign(50, seed=9) != gen_benign(50, seed=10)


class TestAttackContent:
    def test_class_mix_within_3_sigma(self, drawn):
        counts = Counter(cls for _, cls in drawn)
        n = len(drawn)
        total = sum(DEFAULT_CLASS_MIX.values())
        for cls, share in DEFAULT_CLASS_MIX.items():
            p = share / total
            sigma = np.sqrt(n * p * (1 - p))
            assert abs(counts[cls] - n * p) <= 3 * sigma, (cls, counts[cls], n * p)

    def test_comment_padding_variant_present(self, drawn):
        # keyword separation by /**/ must be reachable
        assert any("union/**/select" in t for t, _ in drawn)

    def test_depth_four_traversal_under_postid(self, drawn):
        assert any(t == "postid=../../../../etc/passwd" for t, _ in drawn)

    def test_traversal_depth_varies(self, drawn):
        depths = set()
        for t, cls in drawn:
            if cls == "dt" and "../" in t:
                depths.add(t.count("../"))
        assert len(depths) >= 4

    def test_rfi_hosts_and_paths_vary(self, drawn):
        hosts = set()
        for t, cls in drawn:
            if cls == "rfi" and "http://" in t:
                tail = t.split("http://", 1)[1]
                hosts.add(tail.split("/", 1)[0])
        assert len(hosts) >= 3

    def test_sqli_keyword_synonyms_vary(self, drawn):
        sqli = [t for t, cls in drawn if cls == "sqli"]
        keywords = ["union", "or+", "and+", "like", "order+by", "between"]
        seen = {k for k in keywords if any(k in t for t in sqli)}
        assert len(seen) >= 4

    def test_rider_pairs_at_most_one(self, drawn):
        for t, _ in drawn:
            assert len(t.split("&")) <= 2


class TestLabelConsistency:
    def test_disjoint_namespaces(self):
        # no text may ever appear under both labels
        benign = set(gen_benign(20000, seed=31))
        malicious = {t for t, _ in gen_malicious(5000, DEFAULT_CLASS_MIX, seed=32)}
        assert not benign & malicious

    def test_truth_builds_without_conflicts(self, small_corpus):
        truth = small_corpus.truth()
        labels = {lab for lab, _ in truth.values()}
        assert labels == {BENIGN, MALICIOUS}

    def test_truth_covers_each_batch(self, small_corpus):
        truth = small_corpus.truth()
        for day in small_corpus.days:
            for q in small_corpus.batches[day]:
                assert truth[q.text][0] == q.label


class TestCorpusShape:
    def test_counts(self, small_corpus):
        assert len(small_corpus.initial) == SMALL.initial_benign + SMALL.initial_malicious
        assert small_corpus.days == [1, 2, 3]
        for day in small_corpus.days:
            batch = small_corpus.batches[day]
            assert len(batch) == SMALL.batch_size
            mal = [q for q in batch if q.label == MALICIOUS]
            assert len(mal) == SMALL.malicious_per_batch
            assert all(q.attack_class for q in mal)

    def test_initial_unique_and_labeled(self, small_corpus):
        texts = [q.text for q in small_corpus.initial]
        assert len(set(texts)) == len(texts)
        assert all(q.label in (BENIGN, MALICIOUS) for q in small_corpus.initial)

    def test_batches_shuffled_not_grouped(self, small_corpus):
        # malicious records must not sit in a block at the end
        batch = small_corpus.batches[1]
        mal_positions = [i for i, q in enumerate(batch) if q.label == MALICIOUS]
        assert mal_positions != list(range(len(batch) - len(mal_positions), len(batch)))

    def test_deterministic(self):
        a = gen_corpus(SMALL)
        b = gen_corpus(SMALL)
        assert [q.text for q in a.initial] == [q.text for q in b.initial]
        for day in a.days:
            assert [q.text for q in a.batches[day]] == [q.text for q in b.batches[day]]

    def test_seed_changes_content(self):
        from dataclasses import replace

        other = gen_corpus(replace(SMALL, seed=6))
        base = gen_corpus(SMALL)
        assert [q.text for q in base.batches[1]] != [q.text for q in other.batches[1]]

    def test_validation(self):
        with pytest.raises(ValueError):
            CorpusConfig(batch_size=10, malicious_per_batch=20)
        with pytest.raises(ValueError):
            CorpusConfig(class_mix={})
        with pytest.raises(ValueError):
            CorpusConfig(class_mix={"sqli": -0.5})


class TestSaveLoad:
    def test_round_trip(self, small_corpus, tmp_path):
        path = tmp_path / "corpus.jsonl"
        save_corpus(path, small_corpus)
        loaded = load_corpus(path)
        assert isinstance(loaded, Corpus)
        assert [q.text for q in loaded.initial] == [q.text for q in small_corpus.initial]
        for day in small_corpus.days:
            assert loaded.batches[day] == small_corpus.batches[day]
        assert loaded.digest

    def test_digest_tracks_content(self, small_corpus, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(p1, small_corpus)
        save_corpus(p2, small_corpus)
        assert p1.read_bytes() == p2.read_bytes()
        assert load_corpus(p1).digest == load_corpus(p2).digest
