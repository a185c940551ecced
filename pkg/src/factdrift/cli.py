"""Command-line pipeline orchestration with stage accounting.

Subcommands mirror the pipeline: ingest -> extract -> filter -> screen ->
generate / update, plus dataset stats, index / search for the retrieval
simulator, evaluate for the judged experiments, and report for the stage
table. Stage outputs are written atomically; all randomness flows from the
single ``seed`` config key. Exit codes: 0 ok, 1 usage/config, 2 data error,
3 remote-service error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from datetime import date
from pathlib import Path

from . import clients, corpus, dataset_store, diffcore, eval_harness, filters
from . import qa_pipeline, screening, search_sim
from .config import Config, parse_experiment_entry
from .errors import ConfigError, DataError, ProtocolError, TransportError

STAGE_ORDER = ("original", "filtering", "screening", "final")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: str | Path, objects) -> None:
    atomic_write_text(
        path, "".join(json.dumps(o, ensure_ascii=False) + "\n" for o in objects)
    )


def _counts_path(workdir: str) -> Path:
    return Path(workdir) / "stage_counts.json"


def load_counts(workdir: str) -> dict:
    path = _counts_path(workdir)
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def store_counts(workdir: str, **updates: int) -> None:
    """Record stage counts, enforcing the monotone pipeline invariant.

    The QA stage's ``final`` count is the sum of generated and updated
    records, recomputed whenever either part lands.
    """
    Path(workdir).mkdir(parents=True, exist_ok=True)
    counts = load_counts(workdir)
    if "original" in updates:
        counts = {}  # extract starts a new accounting cycle
    counts.update(updates)
    if "generated" in counts or "updated" in counts:
        counts["final"] = counts.get("generated", 0) + counts.get("updated", 0)
    previous = None
    for name in STAGE_ORDER:
        if name not in counts:
            continue
        if previous is not None and counts[name] > previous:
            raise DataError(
                f"stage counts must be non-increasing: {name}={counts[name]} "
                f"exceeds the previous stage's {previous}"
            )
        previous = counts[name]
    atomic_write_text(_counts_path(workdir), json.dumps(counts, indent=2) + "\n")


def _resolve_date(flag_value: str | None, path: str, what: str) -> date:
    if flag_value:
        return date.fromisoformat(flag_value)
    from_name = corpus.date_from_snapshot_name(path)
    if from_name is None:
        raise ConfigError(
            f"no {what} date: pass --{what}-date or use a snapshot-YYYY-MM-DD.jsonl name"
        )
    return from_name


def _classifier_from_config(cfg: Config):
    backend = cfg.get_str("classifier_backend")
    if backend == "keep_all":
        return screening.KeepAllClassifier()
    if backend == "scripted":
        path = cfg.get_str("classifier_script")
        if not path:
            raise ConfigError("classifier_backend=scripted needs classifier_script")
        return screening.ScriptedClassifier(script_path=path)
    url = cfg.get_str("classifier_url")
    if not url:
        raise ConfigError("classifier_backend=http needs classifier_url")
    return screening.HttpClassifier(base_url=url)


def _chat_from_config(cfg: Config, role: str, offline_cls):
    """Build the chat client for one role; ``offline_cls`` is the
    deterministic backend matching the stage's purpose."""
    backend = cfg.get_str(f"{role}_backend")
    if backend == "offline":
        return offline_cls()
    if backend == "scripted":
        path = cfg.get_str(f"{role}_script")
        if not path:
            raise ConfigError(f"{role}_backend=scripted needs {role}_script")
        return clients.ScriptedChatClient(script_path=path)
    url = cfg.get_str(f"{role}_url")
    model = cfg.get_str(f"{role}_model")
    if not url or not model:
        raise ConfigError(f"{role}_backend=http needs {role}_url and {role}_model")
    return clients.HttpChatClient(
        base_url=url,
        model=model,
        temperature=cfg.get_float("chat_temperature"),
        max_tokens=cfg.get_int("chat_max_tokens"),
    )


def _decay_params(cfg: Config) -> search_sim.DecayParams:
    return search_sim.DecayParams(
        origin=cfg.get_date("current_date"),
        scale_days=cfg.get_float("decay_scale_days"),
        decay_at_scale=cfg.get_float("decay_at_scale"),
        offset_days=cfg.get_float("decay_offset_days"),
    )


def _load_pairs(path: str) -> list[diffcore.SentencePair]:
    pairs = []
    for lineno, obj in corpus.iter_jsonl(path):
        try:
            pairs.append(diffcore.SentencePair.from_dict(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad sentence pair: {exc}") from exc
    return pairs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args, cfg: Config) -> int:
    snapshot_date = _resolve_date(args.date, args.snapshot, "snapshot")
    loaded = corpus.load_snapshot(args.snapshot, snapshot_date)
    write_jsonl(
        args.out,
        (
            {"id": a.article_id, "title": a.title, "text": a.text}
            for a in sorted(loaded, key=lambda a: a.article_id)
        ),
    )
    print(
        json.dumps(
            {"stage": "ingest", "kept": len(loaded), "date": snapshot_date.isoformat()}
        )
    )
    return 0


def cmd_extract(args, cfg: Config) -> int:
    old_date = _resolve_date(args.old_date, args.old, "old")
    new_date = _resolve_date(args.new_date, args.new, "new")
    old = corpus.load_snapshot(args.old, old_date)
    new = corpus.load_snapshot(args.new, new_date)
    version_pairs, skip_report = corpus.pair_versions(old, new)
    tokenizer = cfg.get_str("tokenizer")
    sentence_pairs = []
    for vp in version_pairs:
        sentence_pairs.extend(diffcore.extract_modified_pairs(vp, tokenizer))
    write_jsonl(args.out, (p.to_dict() for p in sentence_pairs))
    store_counts(args.workdir, original=len(sentence_pairs))
    summary = {
        "stage": "extract",
        "article_pairs": len(version_pairs),
        "sentence_pairs": len(sentence_pairs),
        "skipped_deleted": len(skip_report.deleted),
        "skipped_created": len(skip_report.created),
    }
    if args.report:
        atomic_write_text(
            args.report,
            json.dumps(
                {**summary, "deleted": skip_report.deleted, "created": skip_report.created},
                indent=2,
            )
            + "\n",
        )
    print(json.dumps(summary))
    return 0


def cmd_filter(args, cfg: Config) -> int:
    pairs = _load_pairs(args.pairs)
    table = filters.build_frequency_table(pairs, threshold=cfg.get_int("filter_threshold"))
    kept, dropped, report = filters.filter_batch(pairs, table)
    write_jsonl(args.out, (p.to_dict() for p in kept))
    if args.dropped:
        write_jsonl(
            args.dropped,
            (
                {**p.to_dict(), "reasons": list(v.reasons)}
                for p, v in dropped
            ),
        )
    store_counts(args.workdir, filtering=len(kept))
    print(json.dumps(report))
    return 0


def cmd_screen(args, cfg: Config) -> int:
    pairs = _load_pairs(args.pairs)
    client = _classifier_from_config(cfg)
    tokenizer = cfg.get_str("tokenizer")
    inputs = [screening.build_screening_input(p, tokenizer) for p in pairs]
    verdicts = screening.classify_batch(
        client, inputs, max_in_flight=cfg.get_int("classifier_max_in_flight")
    )
    kept = [p for p, v in zip(pairs, verdicts) if v.is_factual]
    write_jsonl(args.out, (p.to_dict() for p in kept))
    if args.dropped:
        write_jsonl(
            args.dropped,
            (
                {**p.to_dict(), "confidence": v.confidence}
                for p, v in zip(pairs, verdicts)
                if not v.is_factual
            ),
        )
    store_counts(args.workdir, screening=len(kept))
    print(json.dumps({"stage": "screen", "in": len(pairs), "out": len(kept)}))
    return 0


def cmd_generate(args, cfg: Config) -> int:
    pairs = _load_pairs(args.pairs)
    records = (
        dataset_store.load_dataset(args.dataset) if Path(args.dataset).exists() else []
    )
    index = dataset_store.EvidenceIndex.build(records)
    client = _chat_from_config(cfg, "chat", qa_pipeline.OfflineQAClient)
    tokenizer = cfg.get_str("tokenizer")
    template_dir = cfg.get_str("template_dir")
    max_attempts = cfg.get_int("max_attempts")
    discards: list[qa_pipeline.DiscardRecord] = []
    created = 0
    skipped_existing = 0
    for pair in pairs:
        if qa_pipeline.match_existing(pair, index) is not None:
            skipped_existing += 1  # handled by the update stage
            continue
        cand = qa_pipeline.generate_with_retry(
            client, pair, max_attempts, discards, tokenizer, template_dir
        )
        if cand is not None:
            records.append(qa_pipeline.record_from_candidate(cand))
            created += 1
    dataset_store.save_dataset(records, args.dataset)
    if args.discards:
        write_jsonl(
            args.discards,
            (
                {
                    "article_id": d.article_id,
                    "title": d.title,
                    "failed_checks": list(d.failed_checks),
                    "attempts": d.attempts,
                    "error": d.error,
                }
                for d in discards
            ),
        )
    store_counts(args.workdir, generated=created)
    print(
        json.dumps(
            {
                "stage": "generate",
                "in": len(pairs),
                "created": created,
                "discarded": len(discards),
                "left_for_update": skipped_existing,
            }
        )
    )
    return 0


def cmd_update(args, cfg: Config) -> int:
    pairs = _load_pairs(args.pairs)
    records = dataset_store.load_dataset(args.dataset)
    client = _chat_from_config(cfg, "chat", qa_pipeline.OfflineQAClient)
    tokenizer = cfg.get_str("tokenizer")
    template_dir = cfg.get_str("template_dir")
    max_attempts = cfg.get_int("max_attempts")
    discards: list[qa_pipeline.DiscardRecord] = []
    matched = updated = 0
    index = dataset_store.EvidenceIndex.build(records)
    for pair in pairs:
        pos = qa_pipeline.match_existing(pair, index)
        if pos is None:
            continue
        matched += 1
        new_record = qa_pipeline.update_answer(
            client, records[pos], pair, max_attempts, discards, tokenizer, template_dir
        )
        if new_record is not None:
            records[pos] = new_record
            updated += 1
            index = dataset_store.EvidenceIndex.build(records)
    if matched != updated + len(discards):
        raise DataError(
            f"update accounting broken: matched={matched}, "
            f"updated={updated}, discarded={len(discards)}"
        )
    dataset_store.save_dataset(records, args.dataset)
    store_counts(args.workdir, updated=updated)
    if args.discards:
        write_jsonl(
            args.discards,
            (
                {
                    "article_id": d.article_id,
                    "title": d.title,
                    "failed_checks": list(d.failed_checks),
                    "attempts": d.attempts,
                    "error": d.error,
                }
                for d in discards
            ),
        )
    print(
        json.dumps(
            {
                "stage": "update",
                "in": len(pairs),
                "matched": matched,
                "updated": updated,
                "discarded": len(discards),
            }
        )
    )
    return 0


def cmd_stats(args, cfg: Config) -> int:
    records = dataset_store.load_dataset(args.dataset)
    report = dataset_store.dataset_stats(records)
    rendered = json.dumps(report, indent=2)
    if args.out:
        atomic_write_text(args.out, rendered + "\n")
    print(rendered)
    return 0


def cmd_index(args, cfg: Config) -> int:
    passages = []
    for lineno, obj in corpus.iter_jsonl(args.corpus):
        try:
            version = corpus.ArticleSnapshot(
                article_id=obj["doc_id"],
                title=obj["title"],
                text=obj["text"],
                snapshot_date=date.fromisoformat(obj["version_date"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{args.corpus}:{lineno}: bad document: {exc}") from exc
        passages.extend(
            search_sim.split_passages(
                version,
                c_s=cfg.get_int("c_s"),
                c_o=cfg.get_int("c_o"),
                tokenizer=cfg.get_str("tokenizer"),
            )
        )
    index = search_sim.build_index(
        passages, k1=cfg.get_float("k1"), b=cfg.get_float("b"),
        tokenizer=cfg.get_str("tokenizer"),
    )
    atomic_write_text(args.out, json.dumps(index.to_dict(), ensure_ascii=False) + "\n")
    print(json.dumps({"stage": "index", "passages": index.size}))
    return 0


def cmd_search(args, cfg: Config) -> int:
    index = search_sim.SearchIndex.from_dict(
        json.loads(Path(args.index).read_text(encoding="utf-8"))
    )
    decay_on = cfg.get_bool("decay") if args.decay is None else args.decay
    params = None
    if decay_on:
        if args.origin:
            params = search_sim.DecayParams(
                origin=date.fromisoformat(args.origin),
                scale_days=cfg.get_float("decay_scale_days"),
                decay_at_scale=cfg.get_float("decay_at_scale"),
                offset_days=cfg.get_float("decay_offset_days"),
            )
        else:
            params = _decay_params(cfg)
    results = search_sim.search(
        index,
        args.query,
        k=args.k or cfg.get_int("k"),
        decay_on=decay_on,
        params=params,
        tokenizer=cfg.get_str("tokenizer"),
    )
    payload = json.dumps([r.to_dict() for r in results], ensure_ascii=False, indent=2)
    if args.out:
        atomic_write_text(args.out, payload + "\n")
    print(payload)
    return 0


def _load_pools(path: str) -> dict:
    pools_by_question: dict = {}
    for _lineno, obj in corpus.iter_jsonl(path):
        pools: dict = {}
        for pool_name in (eval_harness.RELEVANT, eval_harness.OUTDATED, eval_harness.DISTRACTING):
            entries = []
            for item in obj.get(pool_name, []):
                passage = search_sim.Passage.from_dict(item["passage"])
                score = float(item.get("score", item.get("bm25", 0.0)))
                entries.append(
                    search_sim.RetrievalResult(
                        passage=passage,
                        bm25=float(item.get("bm25", score)),
                        decay=float(item.get("decay", 1.0)),
                        score=score,
                    )
                )
            pools[pool_name] = entries
        pools_by_question[obj["question"]] = pools
    return pools_by_question


def cmd_evaluate(args, cfg: Config) -> int:
    records = dataset_store.load_dataset(args.dataset)
    if args.sample:
        records, sample_report = dataset_store.sample_eval_set(
            records,
            clusters=cfg.get_int("clusters"),
            per_cluster=cfg.get_int("per_cluster"),
            seed=cfg.get_int("seed"),
        )
        print(json.dumps({"stage": "sample", **sample_report}))
    current_date = cfg.get_date("current_date")
    entries = cfg.get_list("experiment")
    if entries:
        grid = [
            eval_harness.ExperimentSpec(**parse_experiment_entry(e, current_date))
            for e in entries
        ]
    else:
        grid = [
            eval_harness.ExperimentSpec(
                r_count=1,
                o_count=1,
                d_count=2,
                ordering=eval_harness.ORDER_SCORE_DESC,
                answer_mode="short",
                current_date=current_date,
            )
        ]
    answer_client = _chat_from_config(cfg, "chat", eval_harness.OfflineAnswerClient)
    judge_client = _chat_from_config(cfg, "judge", eval_harness.OfflineJudgeClient)
    defaults = eval_harness.EngineDefaults(
        k=cfg.get_int("k"), c_s=cfg.get_int("c_s"), c_o=cfg.get_int("c_o"), n=cfg.get_int("n")
    )
    kwargs: dict = {"defaults": defaults, "template_dir": cfg.get_str("template_dir")}
    if args.pools:
        kwargs["pools_by_question"] = _load_pools(args.pools)
    elif args.index:
        kwargs["index"] = search_sim.SearchIndex.from_dict(
            json.loads(Path(args.index).read_text(encoding="utf-8"))
        )
        kwargs["decay_on"] = cfg.get_bool("decay")
        if cfg.get_bool("decay"):
            kwargs["decay_params"] = _decay_params(cfg)
    else:
        raise ConfigError("evaluate needs --pools or --index")
    report = eval_harness.run_experiment(
        records, grid, answer_client, judge_client, **kwargs
    )
    atomic_write_text(args.out, json.dumps(report, ensure_ascii=False, indent=2) + "\n")
    print(eval_harness.render_report_text(report))
    return 0


def cmd_report(args, cfg: Config) -> int:
    counts = load_counts(args.workdir)
    if not counts:
        raise DataError(f"no stage counts recorded under {args.workdir!r}")
    lines = [f"{'stage':<12} {'count':>10} {'change':>10}"]
    previous = None
    for stage in STAGE_ORDER:
        if stage not in counts:
            continue
        value = counts[stage]
        if previous in (None, 0):
            change = "-"
        else:
            change = f"{100.0 * (value - previous) / previous:.2f}%"
        lines.append(f"{stage:<12} {value:>10} {change:>10}")
        previous = value
    rendered = "\n".join(lines)
    if args.out:
        atomic_write_text(args.out, rendered + "\n")
    print(rendered)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="factdrift", description=__doc__)
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument(
        "--workdir", default=".", help="directory for stage accounting (default: .)"
    )
    parser.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and filter one snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--date", help="snapshot date (YYYY-MM-DD) if not in the filename")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="extract modified sentence pairs")
    p.add_argument("--old", required=True)
    p.add_argument("--old-date")
    p.add_argument("--new", required=True)
    p.add_argument("--new-date")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("filter", help="apply the heuristic filters")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dropped")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("screen", help="run the factual-change classifier")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dropped")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("generate", help="generate QA records for new pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--discards")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("update", help="update records matched by old evidence")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--discards")
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("index", help="build the versioned passage index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query the index")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--decay", dest="decay", action="store_true", default=None)
    p.add_argument("--no-decay", dest="decay", action="store_false")
    p.add_argument("--origin", help="decay origin date (defaults to current_date)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="run the judged RAG experiments")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index")
    p.add_argument("--pools")
    p.add_argument(
        "--sample",
        action="store_true",
        help="evaluate a clustered subsample (clusters/per_cluster from config)",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="stage-count table with reductions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {"seed": args.seed} if args.seed is not None else {}
        cfg = Config.load(args.config, overrides)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (TransportError, ProtocolError) as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
