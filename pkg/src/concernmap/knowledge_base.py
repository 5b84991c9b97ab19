"""Persist and index term records plus call edges for one repository snapshot.

Storage is line-delimited JSON: a header line carrying the snapshot id and
format version, then one line per term record and one per call edge. Indices
are rebuilt at load time so they can never skew from the records.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .repo_model import CallEdgeSet
from .term_explain import TermExplanation, TermRecord
from .term_extract import ExtractedTerm, lemmatize_phrase

logger = logging.getLogger(__name__)

KB_FORMAT_VERSION = "1"


class KnowledgeBaseError(Exception):
    """Invalid build input or an unreadable/corrupt knowledge-base file."""


@dataclass
class KnowledgeBase:
    repository: str
    commit_id: str
    records: tuple[TermRecord, ...]
    call_edges: CallEdgeSet
    token_index: dict[str, tuple[int, ...]] = field(default_factory=dict)
    lemma_index: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def snapshot_id(self) -> tuple[str, str]:
        return (self.repository, self.commit_id)


def _build_indices(records: tuple[TermRecord, ...]) -> tuple[dict, dict]:
    token_index: dict[str, list[int]] = {}
    lemma_index: dict[str, list[int]] = {}
    for i, record in enumerate(records):
        lemma = record.term.lemma
        lemma_index.setdefault(lemma, []).append(i)
        for word in lemma.split():
            token_index.setdefault(word, []).append(i)
    return (
        {w: tuple(ix) for w, ix in token_index.items()},
        {l: tuple(ix) for l, ix in lemma_index.items()},
    )


def build_kb(
    records: list[TermRecord],
    edges: CallEdgeSet,
    repository: str,
    commit_id: str,
) -> KnowledgeBase:
    """Index the records; duplicates per (lemma, function_id) are a bug upstream."""
    ordered = tuple(sorted(records, key=lambda r: (r.term.lemma, r.term.function_id)))
    seen = set()
    for record in ordered:
        key = (record.term.lemma, record.term.function_id)
        if key in seen:
            raise KnowledgeBaseError(f"duplicate record for {key}")
        seen.add(key)
    token_index, lemma_index = _build_indices(ordered)
    return KnowledgeBase(
        repository=repository,
        commit_id=commit_id,
        records=ordered,
        call_edges=edges,
        token_index=token_index,
        lemma_index=lemma_index,
    )


def lookup_exact(kb: KnowledgeBase, lemma: str) -> list[TermRecord]:
    """Exact lemma-string lookup; the query must already be lemmatized."""
    if lemmatize_phrase(lemma) != lemma:
        logger.warning("lookup_exact called with non-lemma %r; lookups require lemmas", lemma)
    return [kb.records[i] for i in kb.lemma_index.get(lemma, ())]


def _record_to_json(record: TermRecord) -> dict:
    return {
        "kind": "record",
        "lemma": record.term.lemma,
        "function_id": record.term.function_id,
        "surface_forms": sorted(record.term.surface_forms),
        "expanded_name": record.explanation.expanded_name,
        "definition": record.explanation.definition,
        "functionality": record.explanation.functionality,
        "reference_snippets": list(record.explanation.reference_snippets),
        "degraded": record.degraded,
    }


def _record_from_json(data: dict) -> TermRecord:
    return TermRecord(
        term=ExtractedTerm(
            lemma=data["lemma"],
            function_id=data["function_id"],
            surface_forms=frozenset(data["surface_forms"]),
        ),
        explanation=TermExplanation(
            expanded_name=data["expanded_name"],
            definition=data["definition"],
            functionality=data["functionality"],
            reference_snippets=tuple(data["reference_snippets"]),
        ),
        degraded=bool(data["degraded"]),
    )


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the snapshot as line-delimited JSON (`<repo>@<commit>.kb`)."""
    lines = [
        json.dumps(
            {
                "kind": "header",
                "format_version": KB_FORMAT_VERSION,
                "repository": kb.repository,
                "commit_id": kb.commit_id,
            },
            sort_keys=True,
        )
    ]
    for record in kb.records:
        lines.append(json.dumps(_record_to_json(record), sort_keys=True))
    for caller, callee in sorted(kb.call_edges.edges):
        lines.append(json.dumps({"kind": "edge", "caller": caller, "callee": callee}, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a snapshot; a corrupt file raises, never yields a partial KB."""
    path = Path(path)
    if not path.is_file():
        raise KnowledgeBaseError(f"no such knowledge base: {path}")
    records: list[TermRecord] = []
    edges: set[tuple[str, str]] = set()
    header: dict | None = None
    try:
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                kind = data.get("kind")
                if line_no == 1:
                    if kind != "header":
                        raise KnowledgeBaseError(f"{path}: first line is not a header")
                    header = data
                    version = data.get("format_version")
                    if version != KB_FORMAT_VERSION:
                        raise KnowledgeBaseError(
                            f"{path}: format version {version!r} is not supported "
                            f"(expected {KB_FORMAT_VERSION!r})"
                        )
                elif kind == "record":
                    records.append(_record_from_json(data))
                elif kind == "edge":
                    edges.add((data["caller"], data["callee"]))
                else:
                    raise KnowledgeBaseError(f"{path}:{line_no}: unknown line kind {kind!r}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise KnowledgeBaseError(f"corrupt knowledge base {path}: {exc}") from exc
    if header is None:
        raise KnowledgeBaseError(f"{path}: empty file")
    return build_kb(records, CallEdgeSet(edges=frozenset(edges)),
                    header["repository"], header["commit_id"])


def default_kb_path(repository: str, commit_id: str) -> str:
    return f"{repository}@{commit_id}.kb"
