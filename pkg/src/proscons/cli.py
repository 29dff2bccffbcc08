"""Command-line pipeline: validate, run, verify, evaluate.

The stages communicate through files so an expensive synthesis run can be
verified and evaluated repeatedly. Providers are constructed from a JSON
config file; every role defaults to its deterministic in-repo double, so
the whole pipeline runs offline and reproducibly unless an HTTP provider
is configured. Secrets are environment-only (``OPINIORAG_*`` variables).

Exit codes: 0 success, 1 validation failure, 2 provider failure,
3 structured-output extraction failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .corpus import (
    CorpusError,
    Entity,
    corpus_stats,
    load_corpus,
    segment_sentences,
    verify_query_alignment,
)
from .evaluation import (
    EvaluationError,
    alignment_rates,
    baseline_graph_rank,
    baseline_oracle,
    baseline_random,
    judge_summary,
    score_summary,
)
from .providers import (
    GenerationConfig,
    HashingEmbedder,
    HttpChatProvider,
    HttpEmbeddingProvider,
    HttpSentimentProvider,
    KeyPointChatProvider,
    LexiconSentimentProvider,
    OneHotEmbedder,
    PatternTripletExtractor,
    PromptedTripletExtractor,
    ProviderError,
)
from .reporting import (
    render_query_length_figure,
    render_scores_figure,
    render_verification_figure,
    write_csv,
    write_json,
)
from .retrieval import (
    DegenerateQueryError,
    RetrievalConfig,
    build_bm25_index,
    retrieve_bm25,
    retrieve_dense,
)
from .synthesizer import (
    PromptSpec,
    StructuredOutputError,
    Summary,
    load_summary,
    synthesize_highlight,
)
from .verification import TripletCache, VerificationError, aggregate_rows, verify_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PROVIDER = 2
EXIT_EXTRACTION = 3

BASELINE_NAMES = ("random", "oracle", "textrank", "lexrank")


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _env(name: str) -> str | None:
    value = os.environ.get(name)
    return value if value else None


def build_chat_provider(cfg: dict):
    kind = cfg.get("kind", "double")
    if kind == "double":
        return KeyPointChatProvider()
    if kind == "http":
        url = cfg.get("url") or _env("OPINIORAG_CHAT_URL")
        if not url:
            raise ConfigError("chat provider kind 'http' needs a url (config or OPINIORAG_CHAT_URL)")
        return HttpChatProvider(url, api_key=_env(cfg.get("key_env", "OPINIORAG_CHAT_KEY")),
                                model=cfg.get("model"))
    if kind == "none":
        return None
    raise ConfigError(f"unknown chat provider kind: {kind!r}")


def build_embedding_provider(cfg: dict):
    kind = cfg.get("kind", "double")
    if kind == "double":
        return HashingEmbedder(dim=int(cfg.get("dim", 256)))
    if kind == "onehot":
        return OneHotEmbedder(dim=int(cfg.get("dim", 8192)))
    if kind == "http":
        url = cfg.get("url") or _env("OPINIORAG_EMBED_URL")
        if not url:
            raise ConfigError("embedding provider kind 'http' needs a url (config or OPINIORAG_EMBED_URL)")
        return HttpEmbeddingProvider(url, api_key=_env(cfg.get("key_env", "OPINIORAG_EMBED_KEY")),
                                     model=cfg.get("model"))
    if kind == "none":
        return None
    raise ConfigError(f"unknown embedding provider kind: {kind!r}")


def build_sentiment_provider(cfg: dict):
    kind = cfg.get("kind", "double")
    if kind == "double":
        return LexiconSentimentProvider()
    if kind == "http":
        url = cfg.get("url") or _env("OPINIORAG_SENTIMENT_URL")
        if not url:
            raise ConfigError("sentiment provider kind 'http' needs a url (config or OPINIORAG_SENTIMENT_URL)")
        return HttpSentimentProvider(url, api_key=_env(cfg.get("key_env", "OPINIORAG_SENTIMENT_KEY")),
                                     model=cfg.get("model"))
    if kind == "none":
        return None
    raise ConfigError(f"unknown sentiment provider kind: {kind!r}")


def build_triplet_extractor(cfg: dict, chat=None):
    kind = cfg.get("kind", "double")
    if kind == "double":
        return PatternTripletExtractor()
    if kind == "chat":
        chat = chat or build_chat_provider(cfg.get("chat", {}))
        if chat is None:
            raise ConfigError("triplet extractor kind 'chat' needs a chat provider")
        return PromptedTripletExtractor(chat)
    raise ConfigError(f"unknown triplet extractor kind: {kind!r}")


def _embedder_for_role(providers_cfg: dict, role: str):
    """Per-role embedder override (``retrieval_embedder`` /
    ``verification_embedder``) falling back to the shared ``embedder``."""
    cfg = providers_cfg.get(f"{role}_embedder", providers_cfg.get("embedder", {}))
    return build_embedding_provider(cfg)


def _retrieval_config(config: dict, args) -> RetrievalConfig:
    section = dict(config.get("retrieval", {}))
    if getattr(args, "retriever", None):
        section["method"] = args.retriever
    if getattr(args, "top_k", None):
        section["top_k"] = args.top_k
    return RetrievalConfig(
        method=section.get("method", "bm25"),
        top_k=int(section.get("top_k", 10)),
        bm25_k1=float(section.get("bm25_k1", 1.5)),
        bm25_b=float(section.get("bm25_b", 0.75)),
        score_floor=float(section.get("score_floor", 0.0)),
        protected_tokens=dict(section.get("protected_tokens", {})),
    )


def _generation_config(config: dict) -> GenerationConfig:
    section = config.get("generation", {})
    return GenerationConfig(
        max_new_tokens=int(section.get("max_new_tokens", 256)),
        temperature=float(section.get("temperature", 0.7)),
        top_p=float(section.get("top_p", 0.9)),
        long_context_max_tokens=int(section.get("long_context_max_tokens", 512)),
    )


def _report_formats(args) -> set[str]:
    choice = getattr(args, "report_format", "both") or "both"
    return {"csv", "json"} if choice == "both" else {choice}


def _summary_paths(inputs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for raw in inputs:
        path = Path(raw)
        if path.is_dir():
            paths.extend(sorted(path.glob("summary_*.json")))
        elif path.is_file():
            paths.append(path)
        else:
            raise ConfigError(f"no such summary file or directory: {path}")
    if not paths:
        raise ConfigError("no summary files found")
    return paths


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    out = Path(args.out) / "validation"
    try:
        entities = load_corpus(args.corpus)
    except CorpusError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    reports = [verify_query_alignment(entity) for entity in entities]
    stats = corpus_stats(entities)
    formats = _report_formats(args)
    if "json" in formats:
        write_json(out / "alignment.json", [r.to_dict() for r in reports])
        write_json(out / "stats.json", stats.to_dict())
    if "csv" in formats:
        write_csv(out / "alignment.csv",
                  ["entity_id", "query", "status"],
                  [(r.entity_id, q, status)
                   for r in reports
                   for status, queries in (("aligned", r.aligned), ("unmatched", r.unmatched))
                   for q in queries])
        stat_dict = stats.to_dict()
        histogram = stat_dict.pop("query_length_histogram")
        rows = [(k, v) for k, v in stat_dict.items()]
        rows += [(f"queries_{k}_words", v) for k, v in histogram.items()]
        write_csv(out / "stats.csv", ["statistic", "value"], rows)
    render_query_length_figure(stats.query_length_histogram, out / "query_lengths.png")
    write_json(out / "manifest.json", {
        "command": "validate", "version": __version__,
        "entities": len(entities),
        "unmatched_queries": sum(len(r.unmatched) for r in reports),
    })
    for report in reports:
        for query in report.unmatched:
            print(f"warning: entity {report.entity_id}: query {query!r} has no exact "
                  "sentence match", file=sys.stderr)
    print(f"validated {len(entities)} entities -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _run_entity(entity: Entity, retrieval: RetrievalConfig, gen: GenerationConfig,
                spec: PromptSpec, chat, embedder, sentiment, seed: int,
                config_hash: str) -> tuple[Summary, str | None]:
    """Retrieve and synthesize one entity; returns the summary and the
    failure kind ('provider' | 'extraction') when the entity aborted."""
    summary = Summary(
        entity_id=entity.entity_id,
        entity_name=entity.entity_name,
        meta={
            "retriever": retrieval.method,
            "top_k": retrieval.top_k,
            "seed": seed,
            "config_hash": config_hash,
        },
    )
    sentences = segment_sentences(entity)
    if not sentences.sentences:
        for query in entity.expert_review.queries:
            summary.skipped[query] = "entity has no review sentences"
        return summary, None
    index = build_bm25_index(sentences, retrieval) if retrieval.method == "bm25" else None
    failure: str | None = None
    for polarity, section in (("pro", entity.expert_review.pros),
                              ("con", entity.expert_review.cons)):
        for query in section:
            try:
                if index is not None:
                    evidence = retrieve_bm25(index, query, retrieval)
                else:
                    evidence = retrieve_dense(sentences, query, retrieval, embedder)
            except DegenerateQueryError as exc:
                summary.skipped[query] = f"degenerate query: {exc}"
                continue
            if not evidence.items:
                summary.skipped[query] = "no evidence retrieved"
                continue
            try:
                highlight = synthesize_highlight(
                    query, evidence, spec, gen, chat,
                    polarity=polarity, sentiment=sentiment)
            except StructuredOutputError as exc:
                logger.error("entity %s query %r: extraction failed: %s",
                             entity.entity_id, query, exc)
                failure = "extraction"
                break
            except ProviderError as exc:
                logger.error("entity %s query %r: provider failed: %s",
                             entity.entity_id, query, exc)
                failure = "provider"
                break
            target = summary.pros if highlight.polarity == "pro" else summary.cons
            target[query] = highlight.text
            summary.provenance[query] = list(evidence.items)
        if failure:
            break
    return summary, failure


def cmd_run(args) -> int:
    try:
        config = _load_config(args.config)
        entities = load_corpus(args.corpus)
        retrieval = _retrieval_config(config, args)
        gen = _generation_config(config)
        providers_cfg = config.get("providers", {})
        chat = build_chat_provider(providers_cfg.get("chat", {}))
        if chat is None:
            raise ConfigError("cmd run needs a chat provider (kind 'double' or 'http')")
        embedder = _embedder_for_role(providers_cfg, "retrieval")
        if retrieval.method == "dense" and embedder is None:
            raise ConfigError("dense retrieval needs an embedding provider")
        sentiment = build_sentiment_provider(providers_cfg.get("sentiment", {}))
    except (ConfigError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.out) / "summaries"
    spec = PromptSpec()
    seed = args.seed
    config_hash = _config_hash(config)
    jobs = max(1, args.jobs)

    def work(entity: Entity):
        return _run_entity(entity, retrieval, gen, spec, chat, embedder,
                           sentiment, seed, config_hash)

    if jobs == 1:
        results = [work(entity) for entity in entities]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, entities))

    statuses: dict[str, str] = {}
    failures: list[str] = []
    for entity, (summary, failure) in zip(entities, results):
        write_json(out / f"summary_{entity.entity_id}.json", summary.to_dict())
        statuses[str(entity.entity_id)] = failure or "ok"
        if failure:
            failures.append(failure)
    write_json(out / "manifest.json", {
        "command": "run",
        "version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        "retriever": retrieval.method,
        "top_k": retrieval.top_k,
        "entities": statuses,
    })
    done = sum(1 for s in statuses.values() if s == "ok")
    print(f"synthesized {done}/{len(entities)} entities -> {out}")
    if "extraction" in failures:
        return EXIT_EXTRACTION
    if "provider" in failures:
        return EXIT_PROVIDER
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        config = _load_config(args.config)
        providers_cfg = config.get("providers", {})
        embedder = _embedder_for_role(providers_cfg, "verification")
        if embedder is None:
            raise ConfigError("cmd verify needs an embedding provider")
        extractor = build_triplet_extractor(providers_cfg.get("triplets", {}))
        paths = _summary_paths(args.summaries)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.out) / "verification"
    cache = TripletCache(extractor)
    formats = _report_formats(args)
    all_rows = []
    aggregates = {}
    try:
        for path in paths:
            summary = load_summary(path)
            report = verify_summary(summary, embedder, cache)
            all_rows.extend(report.rows)
            aggregates[f"entity {report.entity_id}"] = report.aggregate.to_dict()
            if "json" in formats:
                write_json(out / f"report_{report.entity_id}.json", report.to_dict())
            if "csv" in formats:
                write_csv(out / f"report_{report.entity_id}.csv",
                          ["query", "polarity", "ar", "sf", "of", "skip_reasons"],
                          [(r.query, r.polarity, r.ar, r.sf, r.of,
                            "; ".join(f"{k}: {v}" for k, v in r.skip_reasons.items()))
                           for r in report.rows])
    except VerificationError as exc:
        print(f"verification error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    rollup = aggregate_rows(all_rows)
    write_json(out / "rollup.json", {
        "command": "verify",
        "version": __version__,
        "config_hash": _config_hash(config),
        "entities": len(paths),
        "aggregate": rollup.to_dict(),
    })
    figure_data = dict(aggregates)
    figure_data["all"] = rollup.to_dict()
    render_verification_figure(figure_data, out / "verification.png")
    print(f"verified {len(paths)} summaries -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _system_row(name: str, summaries: dict[int, Summary], entities: dict[int, Entity],
                sentiment) -> dict:
    """Aggregate one system's summaries into a results-table row."""
    pros_scores = {"r1": [], "r2": [], "rl": []}
    cons_scores = {"r1": [], "r2": [], "rl": []}
    tpr_parts: list[tuple[int, int]] = []
    tnr_parts: list[tuple[int, int]] = []
    for entity_id, summary in summaries.items():
        entity = entities.get(entity_id)
        if entity is None:
            raise EvaluationError(f"summary references unknown entity_id {entity_id}")
        pros, cons = score_summary(summary.pros, summary.cons, entity.expert_review)
        if pros is not None:
            for key in pros_scores:
                pros_scores[key].append(getattr(pros, key))
        if cons is not None:
            for key in cons_scores:
                cons_scores[key].append(getattr(cons, key))
        if sentiment is not None and (summary.pros or summary.cons):
            rates = alignment_rates(summary, sentiment)
            tpr_parts.append((rates.pros_positive, rates.pros_evaluated))
            tnr_parts.append((rates.cons_negative, rates.cons_evaluated))
    row = {"system": name}
    for key in ("r1", "r2", "rl"):
        row[f"pros_{key}"] = _mean(pros_scores[key])
        row[f"cons_{key}"] = _mean(cons_scores[key])
    if sentiment is not None:
        pros_hit = sum(h for h, _ in tpr_parts)
        pros_total = sum(t for _, t in tpr_parts)
        cons_hit = sum(h for h, _ in tnr_parts)
        cons_total = sum(t for _, t in tnr_parts)
        row["tpr"] = 100.0 * pros_hit / pros_total if pros_total else None
        row["tnr"] = 100.0 * cons_hit / cons_total if cons_total else None
    return row


def cmd_evaluate(args) -> int:
    try:
        config = _load_config(args.config)
        entities = {e.entity_id: e for e in load_corpus(args.corpus)}
        paths = _summary_paths(args.summaries)
        providers_cfg = config.get("providers", {})
        sentiment = build_sentiment_provider(providers_cfg.get("sentiment", {}))
        baselines = [b.strip() for b in (args.baselines or "").split(",") if b.strip()]
        for name in baselines:
            if name not in BASELINE_NAMES:
                raise ConfigError(f"unknown baseline {name!r}; choose from {BASELINE_NAMES}")
        if baselines and sentiment is None and set(baselines) & {"oracle", "textrank", "lexrank"}:
            raise ConfigError("sentiment-constrained baselines need a sentiment provider")
        judge_chat = None
        if args.judge:
            judge_chat = build_chat_provider(providers_cfg.get("chat", {}))
            if judge_chat is None:
                raise ConfigError("--judge needs a chat provider")
    except (ConfigError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.out) / "evaluation"
    seed = args.seed
    systems: dict[str, dict[int, Summary]] = {}
    loaded = {}
    for path in paths:
        summary = load_summary(path)
        loaded[summary.entity_id] = summary
    systems["summaries"] = loaded

    try:
        for name in baselines:
            per_entity: dict[int, Summary] = {}
            for entity_id in loaded:
                entity = entities.get(entity_id)
                if entity is None:
                    raise EvaluationError(f"summary references unknown entity_id {entity_id}")
                counts = (len(entity.expert_review.pros), len(entity.expert_review.cons))
                if name == "random":
                    per_entity[entity_id] = baseline_random(entity, counts, seed + entity_id)
                elif name == "oracle":
                    per_entity[entity_id] = baseline_oracle(entity, entity.expert_review, sentiment)
                else:
                    per_entity[entity_id] = baseline_graph_rank(entity, counts, name, sentiment)
            systems[name] = per_entity

        rows = [_system_row(name, per_entity, entities, sentiment)
                for name, per_entity in systems.items()]
        if judge_chat is not None:
            for row, (name, per_entity) in zip(rows, systems.items()):
                scores = {"ar": [], "nr": [], "sa": [], "of": [], "ou": []}
                for entity_id, summary in per_entity.items():
                    judged = judge_summary(summary, entities[entity_id].expert_review, judge_chat)
                    for key in scores:
                        scores[key].append(getattr(judged, key))
                for key, values in scores.items():
                    row[f"judge_{key}"] = _mean(values)
    except (EvaluationError, ProviderError, StructuredOutputError) as exc:
        kind = EXIT_PROVIDER if isinstance(exc, ProviderError) else EXIT_VALIDATION
        if isinstance(exc, StructuredOutputError):
            kind = EXIT_EXTRACTION
        print(f"evaluation error: {exc}", file=sys.stderr)
        return kind

    formats = _report_formats(args)
    columns = sorted({key for row in rows for key in row if key != "system"})
    header = ["system"] + columns
    if "json" in formats:
        write_json(out / "results.json", {
            "command": "evaluate",
            "version": __version__,
            "config_hash": _config_hash(config),
            "seed": seed,
            "rows": rows,
        })
    if "csv" in formats:
        write_csv(out / "results.csv", header,
                  [[row.get(col) for col in header] for row in rows])
    metric_keys = [c for c in ("pros_r1", "pros_r2", "pros_rl", "cons_r1", "cons_r2", "cons_rl")
                   if any(row.get(c) is not None for row in rows)]
    render_scores_figure(rows, metric_keys, out / "rouge.png", title="Section ROUGE F1")
    if any("tpr" in row for row in rows):
        render_scores_figure(rows, ["tpr", "tnr"], out / "alignment.png",
                             title="Sentiment alignment (percent)")
    print(f"evaluated {len(systems)} systems over {len(loaded)} entities -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proscons",
        description="Query-keyed pros/cons opinion highlights from user reviews.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--report-format", choices=("csv", "json", "both"), default="both")
    common.add_argument("--seed", type=int, default=0)

    p_validate = sub.add_parser("validate", parents=[common],
                                help="check corpus invariants and query alignment")
    p_validate.add_argument("corpus", help="entity file or directory")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", parents=[common],
                           help="retrieve evidence and synthesize per-query highlights")
    p_run.add_argument("corpus", help="entity file or directory")
    p_run.add_argument("--retriever", choices=("bm25", "dense"))
    p_run.add_argument("--top-k", type=int, dest="top_k")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="verify summaries against their own evidence")
    p_verify.add_argument("summaries", nargs="+", help="summary files or directories")
    p_verify.set_defaults(func=cmd_verify)

    p_eval = sub.add_parser("evaluate", parents=[common],
                            help="score summaries against expert references")
    p_eval.add_argument("summaries", nargs="+", help="summary files or directories")
    p_eval.add_argument("--corpus", required=True, help="entity file or directory")
    p_eval.add_argument("--baselines", help="comma-separated: random,oracle,textrank,lexrank")
    p_eval.add_argument("--judge", action="store_true", help="rubric-score each system")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("PROSCONS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
