"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line."""

import math
import time
from collections import Counter
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest

from clqa.augment import IdentityTranslator, build_aug_dataset, filter_qa_pair, translate_pairs
from clqa.cli import run_command
from clqa.contrastive import (
    ContrastiveBatch,
    MixParams,
    cosine_contrastive_loss,
    loss_check_report,
    mdpr_loss,
    mix_negative,
    mixcse_loss,
    random_batch,
)
from clqa.corpus import FilterLabel, Passage, QAPair, write_passages, write_qa_pairs
from clqa.dense import ensemble_rank
from clqa.errors import DegenerateMixError
from clqa.evaluate import display_round, macro_average, overall_score, token_f1
from clqa.lexical import RankedList, bm25_score, build_index, query
from clqa.tokenization import tokenize

from conftest import APPENDIX_PAIRS, toy_corpus, toy_questions, write_jsonl

XOR_AVG = [37.949, 1.404, 3.161, 15.223, 17.754, 37.951, 37.213, 37.577, 36.558, 36.889, 37.231]
MKQA_AVG = [17.141, 4.090, 12.709, 8.599, 10.785, 16.040, 15.909, 16.089, 15.451, 16.057, 15.915]
OVERALL = [27.55, 2.75, 7.94, 11.91, 14.27, 27.00, 26.56, 26.83, 26.00, 26.47, 26.57]
XOR_BASELINE = [49.66, 33.99, 39.54, 39.72, 25.59, 40.98, 36.16]
MKQA_BASELINE = [9.52, 36.34, 27.23, 22.70, 15.89, 6.00, 7.68, 25.11, 14.60, 26.69, 21.66, 13.78, 0.00, 12.78]


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return emit


def test_table4_reproduction(verdict):
    start = time.perf_counter()
    mismatches = []
    for xor, mkqa, shown in zip(XOR_AVG, MKQA_AVG, OVERALL):
        value = overall_score(xor, mkqa)
        if abs(value - shown) > 0.01 or display_round(value) != Decimal(f"{shown:.2f}"):
            mismatches.append((xor, mkqa, value, shown))
    elapsed = time.perf_counter() - start
    verdict(
        "Table-4 reproduction",
        not mismatches and elapsed < 1.0,
        f"{len(OVERALL) - len(mismatches)}/{len(OVERALL)} rows match, {elapsed * 1e3:.2f} ms",
    )


def test_macro_average_reproduction(verdict):
    _, xor = macro_average({f"x{i}": [v / 100] for i, v in enumerate(XOR_BASELINE)})
    _, mkqa = macro_average({f"m{i}": [v / 100] for i, v in enumerate(MKQA_BASELINE)})
    ok = abs(xor - 37.949) <= 0.005 and abs(mkqa - 17.141) <= 0.005
    verdict("Macro-average reproduction", ok, f"xor {xor:.6f} vs 37.949, mkqa {mkqa:.6f} vs 17.141")


def test_gradient_suite(verdict):
    start = time.perf_counter()
    mdpr = loss_check_report("mdpr", seeds=100)
    mix = loss_check_report("mixcse", seeds=100)
    elapsed = time.perf_counter() - start
    ok = mdpr["pass"] and mix["pass"] and elapsed < 10.0
    verdict(
        "Gradient suite",
        ok,
        f"mdpr max rel err {mdpr['max_rel_err']:.2e}, mixcse {mix['max_rel_err']:.2e}, {elapsed:.2f} s",
    )


def test_stop_gradient_exactness(verdict):
    bad = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        batch = random_batch(rng, int(rng.integers(2, 17)), n, normalize=True, spread=None)
        params = MixParams(0.2, 0.05, int(rng.integers(0, n)))
        try:
            live = mixcse_loss(batch, params)
        except DegenerateMixError:
            continue
        constant = np.array(mix_negative(batch.pos, batch.negs[params.neg_index], params.lam))
        recomputed = cosine_contrastive_loss(batch, params.tau, constant_negs=(constant,))
        pinned = mixcse_loss(batch, MixParams(params.lam, params.tau, params.neg_index, frozen_mix=constant))
        for ref in (recomputed, pinned):
            same = (
                np.array_equal(live.grad_pos, ref.grad_pos)
                and np.array_equal(live.grad_negs, ref.grad_negs)
                and np.array_equal(live.grad_q, ref.grad_q)
                and live.value == ref.value
            )
            bad += not same
    verdict("Stop-gradient exactness", bad == 0, f"{bad} mismatches over 200 batches (tolerance 0)")


def test_mixed_negative_unit_norm(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    done = 0
    while done < 1000:
        dim = int(rng.integers(1, 65))
        pos = rng.normal(size=dim)
        neg = rng.normal(size=dim)
        pos /= np.linalg.norm(pos)
        neg /= np.linalg.norm(neg)
        lam = float(rng.uniform(0.01, 0.99))
        try:
            v = mix_negative(pos, neg, lam)
        except DegenerateMixError:
            continue
        worst = max(worst, abs(float(np.linalg.norm(v)) - 1.0))
        done += 1
    verdict("Mixed-negative unit norm", worst <= 1e-9, f"max |norm - 1| = {worst:.2e} over 1000 draws")


def test_loss_sanity_values(verdict):
    errors = []
    q = np.array([0.6, 0.8])
    for n in (1, 2, 3, 7):
        value = mdpr_loss(ContrastiveBatch(q, q, np.tile(q, (n, 1)))).value
        errors.append(abs(value - math.log(n + 1)))
    v = np.array([1.0, 0.0, 0.0])
    q3 = np.array([0.0, 1.0, 0.0])
    value = mixcse_loss(ContrastiveBatch(q3, v, [v]), MixParams(0.2, 0.05)).value
    errors.append(abs(value - math.log(3)))
    worst = max(errors)
    verdict("Loss sanity values", worst <= 1e-9, f"max deviation {worst:.2e} (ln(n+1) for n=1,2,3,7 and ln 3)")


def _random_corpus(rng):
    vocab = [f"w{i}" for i in range(int(rng.integers(1, 51)))]
    docs = [
        Passage(f"d{i:03d}", "en", "", " ".join(rng.choice(vocab, size=int(rng.integers(1, 40)))))
        for i in range(int(rng.integers(1, 101)))
    ]
    q = " ".join(rng.choice(vocab + ["unseen"], size=int(rng.integers(1, 8))))
    return docs, vocab, q


def _tf_bump_ok(docs, toks, rng) -> bool:
    """Raise one query term's tf in one document, keeping dl, avgdl and df fixed."""
    idx = build_index(docs, "en")
    qset = set(toks)
    for j in rng.permutation(len(docs)):
        words = docs[int(j)].text.split()
        present = [w for w in words if w in qset]
        others = [i for i, w in enumerate(words) if w not in qset]
        if present and others:
            words[others[0]] = present[0]
            bumped = list(docs)
            bumped[int(j)] = Passage(docs[int(j)].id, "en", "", " ".join(words))
            before = bm25_score(idx, toks, docs[int(j)].id)
            after = bm25_score(build_index(bumped, "en"), toks, docs[int(j)].id)
            return after >= before
    return True


def test_bm25_oracle_equivalence(verdict):
    order_fail = mono_fail = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        docs, vocab, q = _random_corpus(rng)
        idx = build_index(docs, "en")
        toks = tokenize(q, "en")
        brute = sorted(((p.id, bm25_score(idx, toks, p.id)) for p in docs), key=lambda e: (-e[1], e[0]))
        k = int(rng.integers(1, 101))
        order_fail += list(query(idx, q, k=k).entries) != brute[:k]

        # IDF monotonicity: add the term to one more document
        term = str(rng.choice(vocab))
        target = next((i for i, p in enumerate(docs) if term not in p.text.split()), None)
        if target is not None:
            more = list(docs)
            more[target] = Passage(docs[target].id, "en", "", docs[target].text + " " + term)
            mono_fail += build_index(more, "en").idf(term) > idx.idf(term)

        # tf monotonicity at fixed dl: swap a token for a query term the doc already has
        mono_fail += not _tf_bump_ok(docs, toks, rng)
    verdict(
        "BM25 oracle equivalence",
        order_fail == 0 and mono_fail == 0,
        f"{200 - order_fail}/200 corpora match brute force, {mono_fail} monotonicity violations",
    )


def _rl(ids, qid="q"):
    return RankedList(qid, tuple((pid, -float(i)) for i, pid in enumerate(ids)), "r")


def test_ensemble_oracle_equivalence(verdict):
    fails = 0
    absent_cases = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        universe = [f"p{i:02d}" for i in range(int(rng.integers(1, 31)))]
        lists = []
        for _ in range(int(rng.integers(1, 6))):
            size = int(rng.integers(0, len(universe) + 1))
            lists.append([str(x) for x in rng.permutation(universe)[:size]])
        docs = sorted({d for lst in lists for d in lst})
        means = {}
        for d in docs:
            ranks = [lst.index(d) + 1 if d in lst else len(lst) + 1 for lst in lists]
            absent_cases += any(d not in lst for lst in lists)
            means[d] = Fraction(sum(ranks), len(ranks))
        k = int(rng.integers(1, 40))
        ref = sorted(means.items(), key=lambda e: (e[1], e[0]))[:k]
        got = ensemble_rank([_rl(lst) for lst in lists], k=k)
        ok = got.ids == [d for d, _ in ref] and all(
            abs(s + float(m)) <= 1e-12 for (_, s), (_, m) in zip(got.entries, ref)
        )
        if lists[0]:
            copies = int(rng.integers(1, 6))
            ok &= ensemble_rank([_rl(lists[0])] * copies, k=len(lists[0])).ids == lists[0]
        fails += not ok
    verdict(
        "Ensemble oracle equivalence",
        fails == 0 and absent_cases > 0,
        f"{200 - fails}/200 instances match ({absent_cases} absent-document ranks exercised)",
    )


def test_filter_regression(verdict):
    got = [filter_qa_pair(q, a) for q, a, _ in APPENDIX_PAIRS]
    expected = [label for _, _, label in APPENDIX_PAIRS]
    shown = [g.value if g else None for g in got]
    kept = [s for s in shown if s]
    ok = shown == expected and kept == ["Number", "ContainsNumber", "Who", "Date", "Who"]
    verdict("Filter regression", ok, f"labels {shown}")


def _seed_passages(n=100, seed=0):
    rng = np.random.default_rng(seed)
    vocab = [f"filler{i}" for i in range(200)]
    out = []
    for i in range(n):
        body = " ".join(rng.choice(vocab, size=150))
        # answers are unique tokens placed past the 100-token trim point
        out.append(Passage(f"s{i:03d}", "en", f"topic {i}", f"Opening line {i}. {body} Answer{i:03d}."))
    return out


def test_augmentation_invariants(verdict):
    seeds = _seed_passages()
    base = [
        QAPair(f"{p.id}-q", f"Which code ends topic {i}?", f"Answer{i:03d}", "en", FilterLabel.CONTAINS_NUMBER, p.id)
        for i, p in enumerate(seeds)
    ]
    targets = ["ja", "fi", "ru", "ko", "ar"]
    pairs = translate_pairs(base, targets, IdentityTranslator())
    counts = Counter(p.lang for p in pairs)
    examples = build_aug_dataset(
        pairs, {p.id: p for p in seeds}, IdentityTranslator(), variant="AUG-QAP", negatives_per_example=14, seed=7
    )
    leaks = sum(e.qa.answer.lower() in n.text.lower() for e in examples for n in e.negative_passages)
    too_long = sum(len(tokenize(n.text, n.lang)) > 100 for e in examples for n in e.negative_passages)
    wrong_lang = sum(e.positive_passage.lang != e.qa.lang for e in examples)
    equal = len(set(counts.values())) == 1 and len(counts) == len(targets)
    ok = len(examples) == 500 and leaks == 0 and too_long == 0 and wrong_lang == 0 and equal
    verdict(
        "Augmentation invariants",
        ok,
        f"{len(examples)} examples, {leaks} answer leaks, {too_long} over-long negatives, "
        f"{wrong_lang} positive-language mismatches, per-language counts {dict(sorted(counts.items()))}",
    )


def test_f1_metric(verdict):
    cases = [
        (token_f1("Walter Damrosch", ["walter damrosch"], "en"), 1.0),
        (token_f1("a b", ["c d"], "en"), 0.0),
        (token_f1("a b c", ["b c d"], "en"), 2 / 3),
        (token_f1("ニューヨーク", ["ニューヨーク"], "ja"), 1.0),
    ]
    worst = max(abs(got - want) for got, want in cases)
    verdict("F1 metric", worst <= 1e-9, f"max deviation {worst:.2e} over {len(cases)} cases")


def _pipeline(root, seed: int) -> bytes:
    root.mkdir()
    corpus = toy_corpus(50)
    questions = toy_questions(corpus)
    write_passages(root / "corpus.jsonl", corpus)
    write_qa_pairs(root / "questions.jsonl", questions)
    write_jsonl(root / "gold.jsonl", [
        {"id": q.id, "lang": q.lang, "answers": [q.answer], "dataset": "xor" if q.lang == "ja" else "mkqa"}
        for q in questions
    ])
    s = str(seed)
    steps = [
        ["index", "--corpus", str(root / "corpus.jsonl"), "--out", str(root / "idx"), "--seed", s],
        ["retrieve", "--index", str(root / "idx"), "--queries", str(root / "questions.jsonl"),
         "--k", "10", "--out", str(root / "runs.jsonl"), "--seed", s],
        ["generate", "--generator", "oracle-extractive", "--runs", str(root / "runs.jsonl"),
         "--corpus", str(root / "corpus.jsonl"), "--queries", str(root / "questions.jsonl"),
         "--gold", str(root / "gold.jsonl"), "--out", str(root / "pred.jsonl"), "--seed", s],
        ["eval", "--pred", str(root / "pred.jsonl"), "--gold", str(root / "gold.jsonl"),
         "--out", str(root / "report.json"), "--seed", s],
    ]
    for argv in steps:
        code = run_command(argv)
        if code != 0:
            raise AssertionError(f"{argv[0]} exited {code}")
    return (root / "report.json").read_bytes()


def test_end_to_end_smoke(verdict, tmp_path):
    start = time.perf_counter()
    first = _pipeline(tmp_path / "run1", seed=3)
    second = _pipeline(tmp_path / "run2", seed=3)
    elapsed = time.perf_counter() - start
    ok = first == second and elapsed < 5.0 and b'"overall"' in first
    verdict("End-to-end smoke", ok, f"reports byte-identical: {first == second}, {elapsed:.2f} s for two runs")
