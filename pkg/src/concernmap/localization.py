"""Render ranked concerns into prompt enhancements and candidate lists.

The concern block is prepended as a preamble and the mode instruction is
appended as a suffix, so the base prompt always survives as one contiguous,
byte-identical substring of the enhanced prompt.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .concern_engine import (
    Concern,
    RankedConcern,
    RankedConcerns,
    RelatedCode,
)

logger = logging.getLogger(__name__)

MODE_WORKFLOW = "workflow"
MODE_AGENT = "agent"

MODE_INSTRUCTIONS = {
    MODE_WORKFLOW: prompts.WORKFLOW_INSTRUCTION,
    MODE_AGENT: prompts.AGENT_INSTRUCTION,
}


@dataclass(frozen=True)
class PromptAdapter:
    """How one localization tool's base prompt receives the concern block."""

    name: str
    mode: str
    block_header: str = ""
    separator: str = "\n\n"


DEFAULT_ADAPTERS = {
    "hierarchical-workflow": PromptAdapter(name="hierarchical-workflow", mode=MODE_WORKFLOW),
    "autonomous-agent": PromptAdapter(name="autonomous-agent", mode=MODE_AGENT),
    "generic": PromptAdapter(name="generic", mode=MODE_WORKFLOW),
}


def serialize_concern(concern: Concern, rank: int) -> str:
    lines = [
        f"{rank}. related_term: {concern.related_term}",
        f"   concern_summary: {concern.concern_summary}",
        "   related_code:",
    ]
    for rc in concern.related_code:
        lines.append(f"   - code_location: {rc.code_location}")
        lines.append("     reference_code:")
        for code_line in rc.reference_code.splitlines() or [""]:
            lines.append(f"       {code_line}")
    return "\n".join(lines)


def render_concern_block(ranked: RankedConcerns) -> str:
    """Concern Definition + Concern Format + the ranked Concern List."""
    if not ranked.entries:
        return ""
    entries = "\n".join(serialize_concern(e.concern, e.rank) for e in ranked.entries)
    return (
        f"{prompts.CONCERN_DEFINITION}\n\n"
        f"{prompts.CONCERN_FORMAT}\n\n"
        f"Concern List:\n{entries}"
    )


def enhance_prompt(
    base_prompt: str,
    mode: str,
    block: str,
    adapter: PromptAdapter | None = None,
) -> str:
    """Minimally intrusive enhancement of a localization tool's prompt.

    Empty block (no concerns found) returns the base prompt unchanged.
    """
    if mode not in MODE_INSTRUCTIONS:
        raise ValueError(f"mode must be one of {sorted(MODE_INSTRUCTIONS)}, got {mode!r}")
    if not block:
        return base_prompt
    separator = adapter.separator if adapter else "\n\n"
    header = adapter.block_header if adapter else ""
    prefix = f"{header}{separator}" if header else ""
    return f"{prefix}{block}{separator}{base_prompt}{separator}{MODE_INSTRUCTIONS[mode]}"


def parse_code_location(location: str) -> tuple[str, str] | None:
    """Split "file_path:function_name"; None when malformed."""
    path, sep, name = location.rpartition(":")
    if not sep or not path or not name:
        return None
    return path, name


def candidates_from_concerns(ranked: RankedConcerns) -> tuple[list[str], list[str]]:
    """Ranked candidate (files, functions) lists from the concern citations.

    Functions are code locations in rank order, first occurrence wins; files
    are the path projections of the same sequence, deduplicated likewise.
    """
    functions: list[str] = []
    files: list[str] = []
    seen_functions: set[str] = set()
    seen_files: set[str] = set()
    for entry in ranked.entries:
        for rc in entry.concern.related_code:
            parsed = parse_code_location(rc.code_location)
            if parsed is None:
                logger.warning("skipping malformed code_location %r", rc.code_location)
                continue
            if rc.code_location not in seen_functions:
                seen_functions.add(rc.code_location)
                functions.append(rc.code_location)
            path = parsed[0]
            if path not in seen_files:
                seen_files.add(path)
                files.append(path)
    return files, functions


def save_ranked_concerns(ranked: RankedConcerns, path: str | Path) -> None:
    """Export the per-issue ranked-concern file (Concern Format field names)."""
    data = {
        "issue_id": ranked.issue_id,
        "fallback": ranked.fallback,
        "concerns": [
            {
                "rank": entry.rank,
                "stage": entry.stage,
                "related_term": entry.concern.related_term,
                "concern_summary": entry.concern.concern_summary,
                "related_code": [
                    {"code_location": rc.code_location, "reference_code": rc.reference_code}
                    for rc in entry.concern.related_code
                ],
            }
            for entry in ranked.entries
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_ranked_concerns(path: str | Path) -> RankedConcerns:
    data = json.loads(Path(path).read_text("utf-8"))
    entries = []
    for item in data["concerns"]:
        concern = Concern(
            related_term=item["related_term"],
            concern_summary=item["concern_summary"],
            related_code=tuple(
                RelatedCode(rc["code_location"], rc["reference_code"])
                for rc in item["related_code"]
            ),
            source_records=(),
        )
        entries.append(RankedConcern(concern=concern, stage=item["stage"], rank=item["rank"]))
    return RankedConcerns(
        issue_id=data["issue_id"],
        entries=entries,
        fallback=bool(data.get("fallback", False)),
    )
