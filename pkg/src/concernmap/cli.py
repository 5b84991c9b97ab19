"""Command-line entry points wiring the pipeline end to end.

Exit codes: 0 success (including empty results), 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .concern_engine import (
    Concern,
    RankedConcern,
    RankedConcerns,
    RelatedCode,
    STAGE_SELECTED,
    run_concern_pipeline,
)
from .config import build_gateway, load_config
from .evaluation import (
    DEFAULT_KS,
    TaskLoadError,
    evaluate_tasks,
    format_report_table,
    hit4_report,
    load_predictions,
    load_tasks,
    report_to_json,
)
from .issue_retrieval import extract_keywords, load_issue, match_terms
from .knowledge_base import (
    KB_FORMAT_VERSION,
    KnowledgeBaseError,
    build_kb,
    default_kb_path,
    load_kb,
    save_kb,
)
from .llm_gateway import GatewayError, TIER_LIGHT
from .localization import (
    MODE_AGENT,
    MODE_WORKFLOW,
    candidates_from_concerns,
    enhance_prompt,
    load_ranked_concerns,
    render_concern_block,
    save_ranked_concerns,
)
from .repo_model import RepositoryError, build_call_edges, parse_repository
from .term_explain import explain_all
from .term_extract import extract_terms
from . import prompts

logger = logging.getLogger(__name__)


def _cmd_index(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    languages = frozenset(args.languages.split(",")) if args.languages else frozenset(config.languages)
    gateway = build_gateway(config)

    units, stats = parse_repository(
        args.repo, language_filter=languages, workers=config.parse_workers
    )
    edges, edge_stats = build_call_edges(units)

    pairs = []
    for unit in units:
        for term in extract_terms(
            unit,
            filter_stop_terms=config.filter_stop_terms,
            stoplist=frozenset(config.stoplist),
        ):
            pairs.append((term, unit))
    records = explain_all(pairs, gateway, concurrency=config.explain_concurrency)

    kb = build_kb(records, edges, repository=args.repo_name or Path(args.repo).name,
                  commit_id=args.commit)
    out = args.out or default_kb_path(kb.repository, kb.commit_id)
    save_kb(kb, out)

    degraded = sum(1 for r in records if r.degraded)
    print(
        f"indexed {stats.files_seen} file(s) ({stats.files_skipped} skipped), "
        f"{stats.units_found} function(s), {len(records)} term record(s) "
        f"({degraded} degraded), {edge_stats.resolved_edges} call edge(s) "
        f"({edge_stats.unresolved_names} unresolved name(s))"
    )
    for warning in stats.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"knowledge base written to {out}")
    return 0


def _ranked_from_pseudo(issue_id: str, items: list[tuple[str, str, list[RelatedCode]]]) -> RankedConcerns:
    ranked = RankedConcerns(issue_id=issue_id)
    for rank, (term, summary, related) in enumerate(items, 1):
        concern = Concern(
            related_term=term,
            concern_summary=summary,
            related_code=tuple(related),
            source_records=(),
        )
        ranked.entries.append(RankedConcern(concern=concern, stage=STAGE_SELECTED, rank=rank))
    return ranked


def _variant_wo_exp(args, config, gateway, issue) -> RankedConcerns:
    """Whole-function summaries ranked by title similarity (no terms, no concerns)."""
    import numpy as np

    if not args.repo:
        raise RepositoryError("--repo is required with --mode wo-exp")
    units, _ = parse_repository(args.repo, language_filter=frozenset(config.languages),
                                workers=config.parse_workers)
    if not units:
        return RankedConcerns(issue_id=issue.id)
    summaries = []
    for unit in units:
        prompt = prompts.FUNCTION_SUMMARY_PROMPT.format(
            header=prompts.SUMMARY_TASK_HEADER,
            qualified_id=unit.qualified_id,
            source=unit.source_text,
        )
        summaries.append(gateway.chat(prompt, tier=TIER_LIGHT).strip())
    vectors = gateway.embed([issue.title] + [s or " " for s in summaries])
    scores = vectors[1:] @ vectors[0]
    order = np.argsort(-scores, kind="stable")[: args.top_n]
    items = []
    for i in order:
        unit = units[i]
        first_line = next((l for l in unit.source_text.splitlines() if l.strip()), "")
        items.append((unit.function_name, summaries[i],
                      [RelatedCode(unit.qualified_id, first_line)]))
    return _ranked_from_pseudo(issue.id, items)


def _variant_wo_con(args, config, gateway, issue, kb) -> RankedConcerns:
    """Term functionalities ranked by title similarity (no clustering/ranking)."""
    import numpy as np

    keywords = extract_keywords(issue, gateway)
    term_sets = match_terms(keywords, kb)
    records = []
    seen = set()
    for term_set in term_sets:
        for record in term_set.records:
            key = (record.term.lemma, record.term.function_id)
            if not record.degraded and key not in seen:
                seen.add(key)
                records.append(record)
    if not records:
        return RankedConcerns(issue_id=issue.id)
    vectors = gateway.embed([issue.title] + [r.explanation.functionality or " " for r in records])
    scores = vectors[1:] @ vectors[0]
    order = np.argsort(-scores, kind="stable")[: args.top_n]
    items = []
    for i in order:
        record = records[i]
        items.append(
            (
                record.term.lemma,
                record.explanation.functionality,
                [RelatedCode(record.term.function_id,
                             "\n".join(record.explanation.reference_snippets))],
            )
        )
    return _ranked_from_pseudo(issue.id, items)


def _cmd_concerns(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    gateway = build_gateway(config)
    issue = load_issue(args.issue)
    kb = load_kb(args.kb) if args.kb else None
    # Flags override the config; the config carries the 100/50/10 defaults.
    if args.limit is None:
        args.limit = config.precluster_limit
    if args.select_k is None:
        args.select_k = config.select_k
    if args.top_n is None:
        args.top_n = config.top_n

    if args.mode == "wo-exp":
        ranked = _variant_wo_exp(args, config, gateway, issue)
    elif args.mode == "wo-con":
        ranked = _variant_wo_con(args, config, gateway, issue, kb)
    else:
        ranked = run_concern_pipeline(
            issue,
            kb,
            gateway,
            limit=args.limit,
            select_k=args.select_k,
            top_n=args.top_n,
        )

    out = args.out or f"{issue.id}.concerns.json"
    save_ranked_concerns(ranked, out)
    if args.candidates_out:
        files, functions = candidates_from_concerns(ranked)
        record = {"id": ranked.issue_id, "files": files, "functions": functions}
        Path(args.candidates_out).write_text(json.dumps(record) + "\n", encoding="utf-8")
    if ranked.entries:
        print(f"{len(ranked.entries)} ranked concern(s) written to {out}")
    else:
        print(f"warning: no concerns produced for issue {issue.id}; empty output "
              f"written to {out}", file=sys.stderr)
    return 0


def _cmd_enhance(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    ranked = load_ranked_concerns(args.concerns)
    base = Path(args.base_prompt).read_text("utf-8")
    adapter = config.adapters.get(args.adapter) if args.adapter else None
    mode = args.mode or (adapter.mode if adapter else MODE_WORKFLOW)
    enhanced = enhance_prompt(base, mode, render_concern_block(ranked), adapter)
    if args.out:
        Path(args.out).write_text(enhanced, encoding="utf-8")
        print(f"enhanced prompt written to {args.out}")
    else:
        print(enhanced)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    tasks = load_tasks(args.tasks)
    levels = tuple(args.levels.split(","))
    ks = tuple(int(k) for k in args.ks.split(","))

    if args.predictions:
        predictions = load_predictions(args.predictions)
    elif args.concern_files:
        predictions = []
        for task in tasks:
            path = Path(args.concern_files) / f"{task.id}.concerns.json"
            if not path.is_file():
                raise TaskLoadError(f"no ranked-concern file for task {task.id}: {path}")
            files, functions = candidates_from_concerns(load_ranked_concerns(path))
            predictions.append({"id": task.id, "files": files, "functions": functions})
    else:
        raise TaskLoadError("either --predictions or --concern-files is required")

    report = evaluate_tasks(tasks, predictions, levels=levels, ks=ks)
    print(format_report_table(report, ks))

    if args.hit4:
        locations = {}
        for prediction in predictions:
            locations[str(prediction.get("id"))] = set(prediction.get("functions", []))
        scores = hit4_report(tasks, locations)
        print(f"Hit4File: {scores['Hit4File']:.4f}  Hit4Func: {scores['Hit4Func']:.4f}")

    if args.out:
        payload = report_to_json(report)
        if args.hit4:
            payload["hit4"] = scores
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concernmap",
        description="Mine repository concepts and rank issue-specific concerns.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"concernmap {__version__} (kb format {KB_FORMAT_VERSION}, "
        f"language table 1)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build a knowledge base from a repository")
    p_index.add_argument("--repo", required=True, help="repository root (checked out at --commit)")
    p_index.add_argument("--commit", required=True, help="commit id of the snapshot")
    p_index.add_argument("--languages", help="comma-separated language filter")
    p_index.add_argument("--repo-name", help="repository name for the snapshot id")
    p_index.add_argument("--out", help="knowledge-base file (default <repo>@<commit>.kb)")
    p_index.add_argument("--config", help="pipeline config file")
    p_index.set_defaults(func=_cmd_index)

    p_concerns = sub.add_parser("concerns", help="produce ranked concerns for an issue")
    p_concerns.add_argument("--kb", required=True, help="knowledge-base file")
    p_concerns.add_argument("--issue", required=True, help="issue JSON file")
    p_concerns.add_argument("--limit", type=int, help="pre-cluster size limit (default 100)")
    p_concerns.add_argument("--select-k", type=int, help="embedding selection size (default 50)")
    p_concerns.add_argument("--top-n", type=int, help="final concern count (default 10)")
    p_concerns.add_argument("--out", help="ranked-concern output file")
    p_concerns.add_argument("--config", help="pipeline config file")
    p_concerns.add_argument(
        "--mode",
        choices=["full", "wo-exp", "wo-con"],
        default="full",
        help="ablation mode (wo-exp: whole-function summaries; "
        "wo-con: term functionalities without clustering)",
    )
    p_concerns.add_argument("--repo", help="repository root (required for --mode wo-exp)")
    p_concerns.add_argument(
        "--candidates-out",
        help="also write the candidate files/functions as a prediction record",
    )
    p_concerns.set_defaults(func=_cmd_concerns)

    p_enhance = sub.add_parser("enhance", help="enhance a base prompt with ranked concerns")
    p_enhance.add_argument("--concerns", required=True, help="ranked-concern file")
    p_enhance.add_argument("--base-prompt", required=True, help="base prompt text file")
    p_enhance.add_argument("--mode", choices=[MODE_WORKFLOW, MODE_AGENT], help="instruction mode")
    p_enhance.add_argument("--adapter", help="adapter template name from the config")
    p_enhance.add_argument("--out", help="output file (default stdout)")
    p_enhance.add_argument("--config", help="pipeline config file")
    p_enhance.set_defaults(func=_cmd_enhance)

    p_eval = sub.add_parser("evaluate", help="score predictions against gold tasks")
    p_eval.add_argument("--tasks", required=True, help="JSONL task file")
    p_eval.add_argument("--predictions", help="JSONL prediction file")
    p_eval.add_argument("--concern-files", help="directory of <task_id>.concerns.json files")
    p_eval.add_argument("--levels", default="file,function", help="comma-separated levels")
    p_eval.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    p_eval.add_argument("--hit4", action="store_true", help="also report Hit4File/Hit4Func")
    p_eval.add_argument("--out", help="machine-readable report file")
    p_eval.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RepositoryError, KnowledgeBaseError, TaskLoadError, GatewayError, OSError,
            ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
