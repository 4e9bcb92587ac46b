import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clqa.augment import (
    AugExample,
    DictionaryTranslator,
    IdentityTranslator,
    build_aug_dataset,
    build_negative_pool,
    filter_pairs,
    filter_qa_pair,
    is_date,
    is_number,
    sample_negative_contexts,
    translate_pairs,
    translate_pairs_report,
)
from clqa.corpus import FilterLabel, Passage, QAPair, SubPassage
from clqa.errors import ArgumentError, ExhaustionError, MissingReferenceError, TranslationError
from clqa.tokenization import tokenize

from conftest import APPENDIX_PAIRS, toy_corpus, template_pairs


def _sub(pid, text, lang="en", index=0):
    return SubPassage(pid, index, text, len(tokenize(text, lang)), lang)


def _en_seed(n=12):
    return {p.id: p for p in toy_corpus(n * 5 // 4 + 1) if p.lang == "en"}


class TestFilter:
    @pytest.mark.parametrize("question, answer, label", APPENDIX_PAIRS)
    def test_appendix_pairs(self, question, answer, label):
        got = filter_qa_pair(question, answer)
        assert (got.value if got else None) == label

    def test_how_many(self):
        assert filter_qa_pair("How many bricks are sold?", "lots of them") == FilterLabel.HOW_MANY

    def test_number_beats_who(self):
        assert filter_qa_pair("Who won in 1928?", "1,928") == FilterLabel.NUMBER

    def test_who_beats_date(self):
        assert filter_qa_pair("who was born on March 3?", "March 3") == FilterLabel.WHO

    @pytest.mark.parametrize("text", ["1928", "1,000,000", "3.14", "-7", " 42 "])
    def test_numbers(self, text):
        assert is_number(text)

    @pytest.mark.parametrize("text", ["1928a", "the 1920s", "", "1,,000"])
    def test_not_numbers(self, text):
        assert not is_number(text)

    @pytest.mark.parametrize("text", ["November 18", "12/05/1999", "in 1066 AD", "Sept. 3"])
    def test_dates(self, text):
        assert is_date(text)

    @pytest.mark.parametrize("text", ["the 1920s", "may be", "12345"])
    def test_not_dates(self, text):
        assert not is_date(text)

    def test_whom_is_not_who(self):
        assert filter_qa_pair("Whom did he call?", "his mother") is None

    def test_filter_pairs_stamps_labels(self):
        pairs = [QAPair(f"q{i}", q, a, "en") for i, (q, a, _) in enumerate(APPENDIX_PAIRS)]
        kept = filter_pairs(pairs)
        assert [p.id for p in kept] == ["q0", "q1", "q2", "q5", "q6"]
        assert [p.label.value for p in kept] == ["Number", "ContainsNumber", "Who", "Date", "Who"]

    @given(st.permutations(list(range(len(APPENDIX_PAIRS)))))
    def test_filter_is_per_pair(self, order):
        pairs = [QAPair(f"q{i}", APPENDIX_PAIRS[i][0], APPENDIX_PAIRS[i][1], "en") for i in order]
        kept = {p.id: p.label.value for p in filter_pairs(pairs)}
        assert kept == {"q0": "Number", "q1": "ContainsNumber", "q2": "Who", "q5": "Date", "q6": "Who"}


class TestTranslatePairs:
    def _pairs(self, n=2):
        return [QAPair(f"p{i}", f"Who is {i}?", f"Name{i}", "en", FilterLabel.WHO, "s") for i in range(n)]

    def test_identity_counts(self):
        out = translate_pairs(self._pairs(2), ["ja", "fi", "ru"], IdentityTranslator())
        assert len(out) == 6
        for lang in ("ja", "fi", "ru"):
            assert sum(p.lang == lang for p in out) == 2
        assert out[0].id == "p0-ja" and out[0].label == FilterLabel.WHO

    def test_no_targets(self):
        assert translate_pairs(self._pairs(2), [], IdentityTranslator()) == []

    def test_failure_dropped_everywhere(self):
        pairs = self._pairs(2)
        table = {}
        for p in pairs:
            for t in ("ja", "fi"):
                table[(p.question, t)] = f"[{t}] {p.question}"
                table[(p.answer, t)] = f"[{t}] {p.answer}"
        del table[(pairs[1].answer, "fi")]
        rep = translate_pairs_report(pairs, ["ja", "fi"], DictionaryTranslator(table))
        assert [p.id for p in rep.pairs] == ["p0-ja", "p0-fi"]
        assert set(rep.failures) == {"p1"}
        assert rep.pairs[0].question == "[ja] Who is 0?"

    def test_non_english_input(self):
        with pytest.raises(ArgumentError):
            translate_pairs([QAPair("x", "q?", "a", "ja")], ["fi"], IdentityTranslator())

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 8), st.lists(st.sampled_from(["ja", "fi", "ru", "ko", "ar"]), unique=True),
           st.sets(st.integers(0, 7)))
    def test_equal_counts(self, n, targets, failing):
        pairs = self._pairs(n)
        table = {}
        for i, p in enumerate(pairs):
            for t in targets:
                if i in failing and t == (targets[-1] if targets else None):
                    continue
                table[(p.question, t)] = p.question
                table[(p.answer, t)] = p.answer
        out = translate_pairs(pairs, targets, DictionaryTranslator(table))
        counts = {t: sum(p.lang == t for p in out) for t in targets}
        assert len(set(counts.values())) <= 1


class TestSampleNegatives:
    def _pool(self):
        return [_sub(f"s{i}", f"passage number {i} about topic{i}") for i in range(5)]

    def test_three_of_five(self):
        got = sample_negative_contexts(self._pool(), "absent", 3, seed=1)
        assert len(got) == 3 and len({p.id for p in got}) == 3

    def test_answer_excluded_any_case(self):
        pool = self._pool() + [_sub("bad", "It mentions ABSENT here")]
        for seed in range(20):
            ids = [p.id for p in sample_negative_contexts(pool, "Absent", 5, seed=seed)]
            assert "bad#0" not in ids

    def test_exhaustion(self):
        pool = [_sub(f"s{i}", "the answer is here") for i in range(3)]
        with pytest.raises(ExhaustionError) as info:
            sample_negative_contexts(pool, "answer", 2)
        assert info.value.deficit == 2

    def test_trimmed_to_max_tokens(self):
        pool = [_sub("long", " ".join(f"w{i}" for i in range(300)))]
        (p,) = sample_negative_contexts(pool, "x", 1, max_tokens=100)
        assert len(tokenize(p.text, "en")) == 100

    def test_answer_beyond_trim_is_allowed(self):
        text = " ".join(["filler"] * 120) + " secret"
        (p,) = sample_negative_contexts([_sub("s", text)], "secret", 1, max_tokens=100)
        assert "secret" not in p.text

    def test_empty_pool(self):
        with pytest.raises(ArgumentError):
            sample_negative_contexts([], "a", 1)

    def test_deterministic(self):
        a = sample_negative_contexts(self._pool(), "x", 3, seed=9)
        assert a == sample_negative_contexts(self._pool(), "x", 3, seed=9)


class TestBuildAugDataset:
    def _pairs(self, seeds, lang="ja"):
        out = []
        for p in seeds.values():
            (base,) = template_pairs(p)
            out.append(QAPair(f"{base.id}-{lang}", base.question, base.answer, lang, FilterLabel.WHO, p.id))
        return out

    def test_identity_aug_qap(self):
        seeds = _en_seed()
        pairs = self._pairs(seeds)
        ex = build_aug_dataset(pairs, seeds, IdentityTranslator(), variant="AUG-QAP", negatives_per_example=3)
        for e in ex:
            src = seeds[e.qa.source_passage_id]
            assert e.positive_passage.text == src.text
            assert e.positive_passage.lang == "ja"

    def test_aug_qa_keeps_english(self):
        seeds = _en_seed()
        ex = build_aug_dataset(self._pairs(seeds), seeds, IdentityTranslator(), negatives_per_example=3)
        assert all(e.positive_passage.lang == "en" for e in ex)
        assert all(e.positive_passage == seeds[e.qa.source_passage_id] for e in ex)

    def test_aug_qap_uses_translator(self):
        seeds = _en_seed(4)
        table = {(p.text, "ja"): f"翻訳{i}" for i, p in enumerate(seeds.values())}
        table.update({(p.title, "ja"): "題" for p in seeds.values()})
        ex = build_aug_dataset(self._pairs(seeds), seeds, DictionaryTranslator(table), variant="AUG-QAP",
                               negatives_per_example=2)
        assert {e.positive_passage.text for e in ex} == set(table.values()) - {"題"}

    def test_translator_failure_names_pair(self):
        seeds = _en_seed(4)
        pairs = self._pairs(seeds)
        with pytest.raises(TranslationError, match=pairs[0].id):
            build_aug_dataset(pairs, seeds, DictionaryTranslator({}), variant="AUG-QAP", negatives_per_example=1)

    def test_top_placement(self):
        seeds = _en_seed()
        ex = build_aug_dataset(self._pairs(seeds), seeds, IdentityTranslator(), negatives_per_example=5, placement="top")
        assert all(e.positive_position == 0 and e.passages[0] is e.positive_passage for e in ex)

    def test_shuffle_placement_in_top_three(self):
        seeds = _en_seed()
        ex = build_aug_dataset(self._pairs(seeds) * 5, seeds, IdentityTranslator(), negatives_per_example=5, seed=3)
        positions = {e.positive_position for e in ex}
        assert positions <= {0, 1, 2} and len(positions) > 1

    def test_missing_seed(self):
        pair = QAPair("q", "Who?", "x", "ja", source_passage_id="nowhere")
        with pytest.raises(MissingReferenceError):
            build_aug_dataset([pair], _en_seed(), IdentityTranslator())

    def test_negatives_avoid_answer_and_own_passage(self):
        seeds = _en_seed()
        ex = build_aug_dataset(self._pairs(seeds), seeds, IdentityTranslator(), negatives_per_example=6, seed=1)
        for e in ex:
            assert len(e.negative_passages) == 6
            for n in e.negative_passages:
                assert e.qa.answer.lower() not in n.text.lower()
                assert not n.id.startswith(e.qa.source_passage_id + "#")

    def test_deterministic_and_serializable(self):
        seeds = _en_seed()
        a = build_aug_dataset(self._pairs(seeds), seeds, IdentityTranslator(), negatives_per_example=4, seed=11)
        b = build_aug_dataset(self._pairs(seeds), seeds, IdentityTranslator(), negatives_per_example=4, seed=11)
        assert a == b
        rec = json.loads(json.dumps(a[0].to_json()))
        assert set(rec) == {"qa", "positive", "negatives", "variant", "positive_position"}

    def test_bad_variant(self):
        with pytest.raises(ArgumentError):
            build_aug_dataset([], {}, IdentityTranslator(), variant="AUG-X")

    def test_negative_pool_first_three(self):
        long = Passage("L", "en", "", " ".join(f"Sentence {i} " + "w " * 300 + "." for i in range(5)))
        pool = build_negative_pool([long])
        assert [s.index for s in pool] == [0, 1, 2]
