"""``clqa`` command-line entry point.

Exit codes: 0 success, 1 usage/configuration error, 2 data or format
error, 3 internal invariant violation (including a failed loss check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import augment, contrastive, corpus, dense, evaluate, generate, lexical
from .config import RunConfig, load_config
from .errors import ClqaError, ConfigurationError, DataError, InvariantError, UsageError
from .tokenization import SUPPORTED_LANGS, check_lang, detect_language

logger = logging.getLogger("clqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
INDEX_SUFFIX = ".bmi"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(records, out: str | None) -> None:
    lines = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    if out is None:
        sys.stdout.write(lines)
    else:
        Path(out).write_text(lines, encoding="utf-8", newline="\n")


def _emit_json(obj, out: str | None) -> None:
    text = json.dumps(obj, ensure_ascii=False, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _need(path: str | None, what: str) -> str:
    if path is None:
        raise ConfigurationError(f"missing required input: {what}")
    if not Path(path).exists():
        raise ConfigurationError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_index(args, cfg: RunConfig) -> int:
    passages = corpus.load_passages(_need(args.corpus or cfg.corpus, "--corpus"))
    out = args.out or cfg.output
    if out is None:
        raise ConfigurationError("index needs --out")
    by_lang = corpus.group_by_lang(passages)
    if args.lang:
        check_lang(args.lang)
        by_lang = {args.lang: by_lang.get(args.lang, [])}
    if len(by_lang) == 1 and not Path(out).is_dir():
        (lang, items), = by_lang.items()
        lexical.build_index(items, lang, cfg.k1, cfg.b).save(out)
        logger.info("indexed %d %s passages into %s", len(items), lang, out)
        return EXIT_OK
    Path(out).mkdir(parents=True, exist_ok=True)
    for lang in sorted(by_lang):
        target = Path(out) / f"{lang}{INDEX_SUFFIX}"
        lexical.build_index(by_lang[lang], lang, cfg.k1, cfg.b).save(target)
        logger.info("indexed %d %s passages into %s", len(by_lang[lang]), lang, target)
    return EXIT_OK


def _load_indexes(path: str) -> dict[str, lexical.InvertedIndex]:
    p = Path(path)
    files = sorted(p.glob(f"*{INDEX_SUFFIX}")) if p.is_dir() else [p]
    if not files:
        raise ConfigurationError(f"no {INDEX_SUFFIX} files under {path}")
    indexes = {}
    for f in files:
        idx = lexical.InvertedIndex.load(f)
        indexes[idx.lang] = idx
    return indexes


def cmd_retrieve(args, cfg: RunConfig) -> int:
    if args.embeddings:
        store = dense.load_embeddings(_need(args.embeddings, "--embeddings"))
        queries = dense.load_embeddings(_need(args.query_embeddings, "--query-embeddings"))
        runs = [
            dense.cosine_top_k(store, queries.vector(qid), cfg.k, qid, args.source or "dense").to_json()
            for qid in queries.ids
        ]
        _emit(runs, args.out or cfg.output)
        return EXIT_OK

    indexes = _load_indexes(_need(args.index, "--index"))
    mode = "oracle_answer" if args.mode == "oracle" else args.mode
    runs = []
    for qa in corpus.load_qa_pairs(_need(args.queries or cfg.qa, "--queries")):
        lang = args.lang or detect_language(qa.question, set(indexes))
        if lang not in indexes:
            raise ConfigurationError(f"no index for language {lang!r} (query {qa.id})")
        text = lexical.compose_query(qa.question, qa.answer, mode)
        runs.append(lexical.query(indexes[lang], text, mode, cfg.k, qa.id).to_json())
    _emit(runs, args.out or cfg.output)
    return EXIT_OK


def _load_runs(path: str) -> list[lexical.RankedList]:
    return [lexical.RankedList.from_json(obj) for _, obj in corpus.iter_jsonl(path)]


def cmd_ensemble(args, cfg: RunConfig) -> int:
    grouped: dict[str, list[lexical.RankedList]] = {}
    for path in args.runs:
        for rl in _load_runs(_need(path, "--runs")):
            grouped.setdefault(rl.query_id, []).append(rl)
    out = [dense.ensemble_rank(lists, cfg.k).to_json() for lists in grouped.values()]
    _emit(out, args.out or cfg.output)
    return EXIT_OK


def cmd_filter_qa(args, cfg: RunConfig) -> int:
    pairs = corpus.load_qa_pairs(_need(args.qa or cfg.qa, "--qa"))
    kept = augment.filter_pairs(pairs)
    logger.info("kept %d of %d pairs", len(kept), len(pairs))
    _emit((p.to_json() for p in kept), args.out or cfg.output)
    return EXIT_OK


def cmd_build_aug(args, cfg: RunConfig) -> int:
    pairs = corpus.load_qa_pairs(_need(args.qa or cfg.qa, "--qa"))
    passages = corpus.load_passages(_need(args.corpus or cfg.corpus, "--corpus"))
    translator = augment.IdentityTranslator()
    if args.targets:
        targets = [t.strip() for t in args.targets.split(",") if t.strip()]
        report = augment.translate_pairs_report(pairs, targets, translator)
        for pid, msg in report.failures.items():
            logger.warning("dropped pair %s: %s", pid, msg)
        pairs = report.pairs
    examples = augment.build_aug_dataset(
        pairs,
        {p.id: p for p in passages},
        translator,
        variant=cfg.variant,
        negatives_per_example=cfg.negatives_per_example,
        placement=cfg.placement,
        seed=cfg.seed,
    )
    _emit((ex.to_json() for ex in examples), args.out or cfg.output)
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    preds = evaluate.load_predictions(_need(args.pred, "--pred"))
    gold = evaluate.load_gold(_need(args.gold, "--gold"))
    report = evaluate.evaluate_predictions(preds, gold)
    _emit_json(report.to_json(), args.out or cfg.output)
    return EXIT_OK


def cmd_loss_check(args, cfg: RunConfig) -> int:
    report = contrastive.loss_check_report(
        args.loss,
        seeds=args.seeds,
        max_dim=args.dim,
        max_negatives=args.negatives or cfg.n_negatives,
        lam=cfg.lam,
        tau=cfg.tau,
        epsilon=args.epsilon,
        tolerance=args.tolerance,
        base_seed=cfg.seed,
    )
    _emit_json(report, args.out or cfg.output)
    return EXIT_OK if report["pass"] else EXIT_INVARIANT


def _gold_answers(args) -> dict[str, tuple[str, ...]]:
    answers: dict[str, tuple[str, ...]] = {}
    if args.gold:
        for rec in evaluate.load_gold(_need(args.gold, "--gold")).values():
            answers[rec.id] = rec.answers
    return answers


def cmd_generate(args, cfg: RunConfig) -> int:
    gen = generate.get_generator(args.generator)
    answers = _gold_answers(args)
    if args.requests:
        requests = [
            generate.GenerationRequest.from_json(obj)
            for _, obj in corpus.iter_jsonl(_need(args.requests, "--requests"))
        ]
    else:
        passages = {p.id: p for p in corpus.load_passages(_need(args.corpus or cfg.corpus, "--corpus"))}
        runs = {rl.query_id: rl for rl in _load_runs(_need(args.runs, "--runs"))}
        requests = []
        for qa in corpus.load_qa_pairs(_need(args.queries or cfg.qa, "--queries")):
            rl = runs.get(qa.id)
            ranked = [passages[pid] for pid in rl.ids if pid in passages] if rl else []
            gold = answers.get(qa.id, (qa.answer,))
            requests.append(
                generate.make_request(qa.question, qa.lang, ranked, args.top_n, id=qa.id, answers=gold)
            )
    requests = [generate.truncate_input(r, args.max_input_tokens) for r in requests]
    if args.emit_requests:
        _emit((r.to_json() for r in requests), args.emit_requests)
    preds = []
    for r in requests:
        if not r.answers and r.id in answers:
            r = generate.GenerationRequest(
                r.question, r.lang, r.passages, r.max_input_tokens, r.id, answers[r.id]
            )
        preds.append({"id": r.id, "lang": r.lang, "prediction": generate.generate(r, gen)})
    _emit(preds, args.out or cfg.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--k", type=int, help="ranking depth (default 100)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="clqa", description="Cross-lingual open-retrieval QA toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("index", parents=[common], help="build per-language BM25 indexes")
    p.add_argument("--corpus")
    p.add_argument("--lang")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)

    p = sub.add_parser("retrieve", parents=[common], help="BM25 or dense retrieval")
    p.add_argument("--index", help="index file or directory of <lang>.bmi files")
    p.add_argument("--queries", help="QA JSONL of queries")
    p.add_argument("--mode", choices=("question", "oracle", "question_answer"), default="question")
    p.add_argument("--lang", choices=SUPPORTED_LANGS, help="skip language detection")
    p.add_argument("--embeddings", help="passage embeddings (dense mode)")
    p.add_argument("--query-embeddings", help="query embeddings keyed by query id")
    p.add_argument("--source", help="ranker label written into each ranked list")

    p = sub.add_parser("ensemble", parents=[common], help="average-rank fusion of runs")
    p.add_argument("--runs", nargs="+", required=True)

    p = sub.add_parser("filter-qa", parents=[common], help="apply the QA filtering heuristics")
    p.add_argument("--qa")

    p = sub.add_parser("build-aug", parents=[common], help="assemble AUG-QA / AUG-QAP examples")
    p.add_argument("--qa", help="QA JSONL (English unless --targets is omitted)")
    p.add_argument("--corpus", help="seed passages JSONL")
    p.add_argument("--targets", help="comma-separated target languages to translate into")
    p.add_argument("--variant", choices=("aug-qa", "aug-qap"))
    p.add_argument("--placement", choices=("shuffle", "top"))
    p.add_argument("--negatives", type=int, help="negatives per example")

    p = sub.add_parser("eval", parents=[common], help="token-F1 evaluation report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)

    p = sub.add_parser("loss-check", parents=[common], help="finite-difference gradient check")
    p.add_argument("--loss", choices=("mdpr", "mixcse"), required=True)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--dim", type=int, default=16, help="maximum embedding dim")
    p.add_argument("--negatives", type=int, help="maximum negatives per batch")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("generate", parents=[common], help="answer generation with a baseline")
    p.add_argument("--generator", choices=tuple(generate.GENERATORS), default="echo")
    p.add_argument("--requests", help="GenerationRequest JSONL (instead of --runs/--corpus)")
    p.add_argument("--runs", help="ranked-list JSONL")
    p.add_argument("--corpus")
    p.add_argument("--queries", help="QA JSONL of questions")
    p.add_argument("--gold", help="gold JSONL; answers for oracle-extractive")
    p.add_argument("--top-n", type=int, default=generate.MAX_PASSAGES)
    p.add_argument("--max-input-tokens", type=int, default=generate.MAX_INPUT_TOKENS)
    p.add_argument("--emit-requests", help="also write the truncated requests here")

    return parser


COMMANDS = {
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "ensemble": cmd_ensemble,
    "filter-qa": cmd_filter_qa,
    "build-aug": cmd_build_aug,
    "eval": cmd_eval,
    "loss-check": cmd_loss_check,
    "generate": cmd_generate,
}


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    variant = getattr(args, "variant", None)
    cfg = cfg.override(
        seed=args.seed,
        k=args.k,
        k1=getattr(args, "k1", None),
        b=getattr(args, "b", None),
        lam=getattr(args, "lam", None),
        tau=getattr(args, "tau", None),
        variant=variant.upper() if variant else None,
        placement=getattr(args, "placement", None),
        negatives_per_example=getattr(args, "negatives", None) if args.command == "build-aug" else None,
    )
    return cfg.validate()


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"clqa {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, KeyError, ValueError, OSError) as exc:
        print(f"clqa {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, AssertionError, ClqaError) as exc:
        print(f"clqa {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
