"""Enrich extracted terms with four explanation facets via one LLM call each.

The response is a tagged-field plain-text protocol (NAME:/DEFINITION:/
FUNCTIONALITY:/SNIPPET: lines). Invariant violations trigger one bounded
repair retry; if the response still cannot be used, a degraded record is
produced and the pipeline continues. Degraded records are excluded from
clustering downstream.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import prompts
from .llm_gateway import TIER_LIGHT
from .repo_model import FunctionUnit
from .term_extract import ExtractedTerm

logger = logging.getLogger(__name__)

MAX_SNIPPETS = 3
MAX_SNIPPET_LINES = 5


class ExplanationFormatError(Exception):
    """The response does not follow the tagged-field protocol."""


@dataclass(frozen=True)
class TermExplanation:
    expanded_name: str
    definition: str
    functionality: str
    reference_snippets: tuple[str, ...]


@dataclass(frozen=True)
class TermRecord:
    term: ExtractedTerm
    explanation: TermExplanation
    degraded: bool = False


def build_explanation_prompt(term: ExtractedTerm, unit: FunctionUnit) -> str:
    """Assemble the explanation prompt: instruction blocks, term, source."""
    return (
        f"{prompts.EXPLANATION_TASK_HEADER}\n\n"
        "You are given a noun term extracted from an identifier in a source "
        "code function, together with the full function. Explain the term by "
        "following the four instruction sets below.\n\n"
        f"{prompts.TERM_NAME_EXPANSION_INSTRUCTIONS}\n\n"
        f"{prompts.TERM_DEFINITION_INSTRUCTIONS}\n\n"
        f"{prompts.TERM_FUNCTIONALITY_INSTRUCTIONS}\n\n"
        f"{prompts.REFERENCE_CODE_INSTRUCTIONS}\n\n"
        f"Term: {term.lemma}\n\n"
        "Function source:\n"
        f"```\n{unit.source_text}\n```\n\n"
        f"{prompts.EXPLANATION_RESPONSE_FORMAT}"
    )


_TAG_RE = re.compile(r"^(REASONING|NAME|DEFINITION|FUNCTIONALITY|SNIPPET):\s?(.*)$")


def parse_explanation_response(text: str) -> TermExplanation:
    """Parse the tagged-field protocol into a TermExplanation."""
    fields: dict[str, list[str]] = {}
    snippets: list[list[str]] = []
    current: list[str] | None = None
    for line in text.splitlines():
        match = _TAG_RE.match(line)
        if match:
            tag, rest = match.group(1), match.group(2)
            if tag == "SNIPPET":
                current = [rest] if rest.strip() else []
                snippets.append(current)
            else:
                current = [rest]
                fields[tag] = current
        elif current is not None:
            current.append(line)

    def joined(tag: str) -> str:
        if tag not in fields:
            raise ExplanationFormatError(f"missing {tag} field")
        return "\n".join(fields[tag]).strip()

    name = joined("NAME")
    definition = joined("DEFINITION")
    functionality = joined("FUNCTIONALITY")
    snippet_texts = tuple("\n".join(s).strip("\n").rstrip() for s in snippets)
    snippet_texts = tuple(s for s in snippet_texts if s.strip())
    if not name:
        raise ExplanationFormatError("empty NAME field")
    if not snippet_texts:
        raise ExplanationFormatError("no SNIPPET blocks")
    return TermExplanation(
        expanded_name=name,
        definition=definition,
        functionality=functionality,
        reference_snippets=snippet_texts,
    )


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def snippet_in_source(snippet: str, source: str) -> bool:
    """Whitespace-normalized substring check (LLMs reflow indentation)."""
    return _normalize_ws(snippet) in _normalize_ws(source)


def validate_explanation(explanation: TermExplanation, unit: FunctionUnit) -> list[str]:
    """Return the list of invariant violations (empty when valid)."""
    problems = []
    if "\n" in explanation.expanded_name:
        problems.append("NAME must be a single-line noun term")
    count = len(explanation.reference_snippets)
    if not 1 <= count <= MAX_SNIPPETS:
        problems.append(f"expected 1-{MAX_SNIPPETS} snippets, got {count}")
    for i, snippet in enumerate(explanation.reference_snippets, 1):
        lines = snippet.splitlines()
        if not 1 <= len(lines) <= MAX_SNIPPET_LINES:
            problems.append(f"snippet {i} has {len(lines)} lines (expected 1-{MAX_SNIPPET_LINES})")
        if not snippet_in_source(snippet, unit.source_text):
            problems.append(f"snippet {i} does not occur in the function source")
    return problems


def degraded_record(term: ExtractedTerm) -> TermRecord:
    return TermRecord(
        term=term,
        explanation=TermExplanation(
            expanded_name=term.lemma,
            definition="",
            functionality="",
            reference_snippets=(),
        ),
        degraded=True,
    )


def _repair_prompt(original: str, response: str, problems: list[str]) -> str:
    notes = "; ".join(problems)
    return (
        f"{original}\n\n"
        f"Your previous response was invalid: {notes}.\n"
        f"Previous response:\n{response}\n\n"
        "Respond again, following the required format exactly. Snippets must "
        "be copied verbatim from the function source."
    )


def explain_term(term: ExtractedTerm, unit: FunctionUnit, gateway) -> TermRecord:
    """Run the explanation call for one (term, function) pair.

    A response violating the explanation invariants is retried once with a
    repair prompt; a second failure yields a degraded record rather than an
    error, so a single bad response never aborts an indexing run.
    """
    prompt = build_explanation_prompt(term, unit)
    response = gateway.chat(prompt, tier=TIER_LIGHT)
    for attempt in range(2):
        try:
            explanation = parse_explanation_response(response)
            problems = validate_explanation(explanation, unit)
        except ExplanationFormatError as exc:
            explanation, problems = None, [str(exc)]
        if explanation is not None and not problems:
            return TermRecord(term=term, explanation=explanation)
        if attempt == 0:
            logger.warning(
                "invalid explanation for %r in %s (%s); retrying",
                term.lemma, unit.qualified_id, "; ".join(problems),
            )
            response = gateway.chat(_repair_prompt(prompt, response, problems), tier=TIER_LIGHT)
    logger.warning("degraded record for %r in %s", term.lemma, unit.qualified_id)
    return degraded_record(term)


def explain_all(
    pairs: list[tuple[ExtractedTerm, FunctionUnit]],
    gateway,
    concurrency: int = 1,
) -> list[TermRecord]:
    """Explain many (term, unit) pairs, preserving input order."""
    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            return list(pool.map(lambda p: explain_term(p[0], p[1], gateway), pairs))
    return [explain_term(term, unit, gateway) for term, unit in pairs]
