"""Localization tasks, Hit@k/Recall@k scoring, and the concern-quality oracle.

Function identity is exact string equality on "file_path:function_name" after
path normalization; duplicate predictions are deduplicated before scoring so
padding cannot inflate Recall@k.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10)
LEVEL_FILE = "file"
LEVEL_FUNCTION = "function"


class TaskLoadError(Exception):
    """A task record violates the schema invariants."""


@dataclass(frozen=True)
class LocalizationTask:
    id: str
    issue_description: str
    repository: str
    commit_id: str
    gold_files: tuple[str, ...]
    gold_functions: tuple[str, ...]


@dataclass
class MetricsReport:
    """hit/recall per level per k, averaged over tasks."""

    task_count: int
    values: dict[str, dict[str, dict[int, float]]] = field(default_factory=dict)

    def get(self, level: str, metric: str, k: int) -> float:
        return self.values[level][metric][k]


def normalize_path(path: str) -> str:
    path = path.replace("\\", "/")
    while path.startswith("./"):
        path = path[2:]
    return path


def normalize_function(location: str) -> str:
    path, sep, name = location.rpartition(":")
    if not sep:
        return normalize_path(location)
    return f"{normalize_path(path)}:{name}"


def dedup_predictions(predictions: list[str]) -> list[str]:
    """First occurrence keeps its rank."""
    seen: set[str] = set()
    out = []
    for p in predictions:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def hit_at_k(predictions: list[str], gold: set[str], k: int) -> int:
    """1 iff at least one gold item appears in the top-k predictions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = dedup_predictions(predictions)[:k]
    return int(any(p in gold for p in top))


def recall_at_k(predictions: list[str], gold: set[str], k: int) -> float:
    """Fraction of gold items appearing in the top-k predictions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        raise ValueError("gold set must be nonempty")
    top = dedup_predictions(predictions)[:k]
    return len(set(top) & gold) / len(gold)


def hit4(concern_locations: set[str], gold: set[str]) -> int:
    """1 iff the concern-cited locations intersect the gold set."""
    return int(bool(concern_locations & gold))


def load_tasks(path: str | Path) -> list[LocalizationTask]:
    """Load JSONL tasks, checking the schema invariants per record."""
    path = Path(path)
    if not path.is_file():
        raise TaskLoadError(f"no such task file: {path}")
    tasks = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskLoadError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            task_id = str(data.get("id", line_no))
            gold_files = tuple(normalize_path(p) for p in data.get("gold_files", []))
            gold_functions = tuple(normalize_function(f) for f in data.get("gold_functions", []))
            if not gold_files:
                raise TaskLoadError(f"task {task_id}: gold_files must be nonempty")
            file_set = set(gold_files)
            for func in gold_functions:
                parsed_path = func.rpartition(":")[0]
                if parsed_path not in file_set:
                    raise TaskLoadError(
                        f"task {task_id}: gold_function {func!r} names a path "
                        "absent from gold_files"
                    )
            tasks.append(
                LocalizationTask(
                    id=task_id,
                    issue_description=data.get("issue_description", ""),
                    repository=data.get("repository", ""),
                    commit_id=data.get("commit_id", ""),
                    gold_files=gold_files,
                    gold_functions=gold_functions,
                )
            )
    return tasks


def load_predictions(path: str | Path) -> list[dict]:
    """JSONL prediction records: {"id"?: ..., "files": [...], "functions": [...]}."""
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _pair_predictions(
    tasks: list[LocalizationTask], predictions: list[dict]
) -> list[tuple[LocalizationTask, dict]]:
    by_id = {str(p["id"]): p for p in predictions if "id" in p}
    if len(by_id) == len(predictions) and by_id:
        pairs = []
        for task in tasks:
            if task.id not in by_id:
                raise TaskLoadError(f"no prediction record for task {task.id}")
            pairs.append((task, by_id[task.id]))
        return pairs
    if len(predictions) != len(tasks):
        raise TaskLoadError(
            f"{len(predictions)} prediction records for {len(tasks)} tasks "
            "(add id fields or align the files)"
        )
    return list(zip(tasks, predictions))


def evaluate_tasks(
    tasks: list[LocalizationTask],
    predictions: list[dict],
    levels: tuple[str, ...] = (LEVEL_FILE, LEVEL_FUNCTION),
    ks: tuple[int, ...] = DEFAULT_KS,
) -> MetricsReport:
    """Average Hit@k and Recall@k over tasks at each level and k."""
    if not tasks:
        raise ValueError("no tasks to evaluate")
    pairs = _pair_predictions(tasks, predictions)
    report = MetricsReport(task_count=len(tasks))
    for level in levels:
        hits = {k: 0.0 for k in ks}
        recalls = {k: 0.0 for k in ks}
        counted = 0
        for task, prediction in pairs:
            if level == LEVEL_FILE:
                gold = set(task.gold_files)
                preds = [normalize_path(p) for p in prediction.get("files", [])]
            else:
                gold = set(task.gold_functions)
                preds = [normalize_function(p) for p in prediction.get("functions", [])]
            if not gold:
                continue
            counted += 1
            for k in ks:
                hits[k] += hit_at_k(preds, gold, k)
                recalls[k] += recall_at_k(preds, gold, k)
        denom = max(counted, 1)
        report.values[level] = {
            "hit": {k: hits[k] / denom for k in ks},
            "recall": {k: recalls[k] / denom for k in ks},
        }
    return report


def hit4_report(
    tasks: list[LocalizationTask],
    locations_by_task: dict[str, set[str]],
) -> dict[str, float]:
    """Average Hit4File/Hit4Func over tasks.

    ``locations_by_task`` maps a task id to the code locations cited by the
    task's top-ranked concerns; files are the path projections.
    """
    if not tasks:
        raise ValueError("no tasks to evaluate")
    file_hits = 0
    func_hits = 0
    for task in tasks:
        locations = {normalize_function(l) for l in locations_by_task.get(task.id, set())}
        location_files = {l.rpartition(":")[0] for l in locations if ":" in l}
        file_hits += hit4(location_files, set(task.gold_files))
        func_hits += hit4(locations, set(task.gold_functions))
    return {
        "Hit4File": file_hits / len(tasks),
        "Hit4Func": func_hits / len(tasks),
    }


def format_report_table(report: MetricsReport, ks: tuple[int, ...] = DEFAULT_KS) -> str:
    """Human-readable metrics table."""
    header = ["level     metric  " + "".join(f"k={k:<8}" for k in ks)]
    rows = []
    for level, metrics in report.values.items():
        for metric in ("hit", "recall"):
            cells = "".join(f"{metrics[metric][k]:<10.4f}" for k in ks)
            rows.append(f"{level:<10}{metric:<8}{cells}")
    rows.append(f"tasks: {report.task_count}")
    return "\n".join(header + rows)


def report_to_json(report: MetricsReport) -> dict:
    return {
        "task_count": report.task_count,
        "metrics": {
            level: {metric: {str(k): v for k, v in per_k.items()}
                    for metric, per_k in metrics.items()}
            for level, metrics in report.values.items()
        },
    }
