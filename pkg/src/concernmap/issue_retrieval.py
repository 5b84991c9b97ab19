"""Extract noun keywords from an issue title and retrieve matching term sets.

Retrieval is purely lexical: keywords are decomposed into n-gram variants and
matched against knowledge-base lemmas by exact equality. Terms matched via
any variant of the same keyword are grouped into one term set.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .knowledge_base import KnowledgeBase, lookup_exact
from .llm_gateway import TIER_LIGHT
from .term_explain import TermRecord
from .term_extract import lemmatize_phrase

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Issue:
    id: str
    title: str
    body: str
    repository: str
    commit_id: str

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("issue title must be nonempty")


@dataclass
class TermSet:
    keyword: str
    records: list[TermRecord] = field(default_factory=list)


def load_issue(path: str | Path) -> Issue:
    data = json.loads(Path(path).read_text("utf-8"))
    return Issue(
        id=str(data.get("id", Path(path).stem)),
        title=data["title"],
        body=data.get("body", ""),
        repository=data.get("repository", ""),
        commit_id=data.get("commit_id", ""),
    )


def build_keyword_prompt(title: str) -> str:
    return prompts.KEYWORD_EXTRACTION_PROMPT.format(
        header=prompts.KEYWORD_TASK_HEADER, title=title
    )


_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def extract_keywords(issue: Issue, gateway) -> list[str]:
    """LLM keyword extraction over the title, lemmatized and deduplicated."""
    response = gateway.chat(build_keyword_prompt(issue.title), tier=TIER_LIGHT)
    keywords: list[str] = []
    seen: set[str] = set()
    for line in response.splitlines():
        for piece in _BULLET_RE.sub("", line).split(","):
            keyword = lemmatize_phrase(piece.strip())
            if keyword and keyword not in seen:
                seen.add(keyword)
                keywords.append(keyword)
    return keywords


def ngram_variants(keyword: str) -> list[str]:
    """All contiguous sub-phrases, longest first then left to right."""
    words = keyword.split()
    variants: list[str] = []
    seen: set[str] = set()
    for length in range(len(words), 0, -1):
        for start in range(0, len(words) - length + 1):
            variant = lemmatize_phrase(" ".join(words[start : start + length]))
            if variant not in seen:
                seen.add(variant)
                variants.append(variant)
    return variants


def match_terms(keywords: list[str], kb: KnowledgeBase) -> list[TermSet]:
    """One term set per keyword: the union of exact matches over its n-grams.

    A record may appear in multiple term sets (one per matching keyword);
    keywords that match nothing produce no term set.
    """
    term_sets = []
    for keyword in keywords:
        records: list[TermRecord] = []
        seen: set[tuple[str, str]] = set()
        for variant in ngram_variants(keyword):
            for record in lookup_exact(kb, variant):
                key = (record.term.lemma, record.term.function_id)
                if key not in seen:
                    seen.add(key)
                    records.append(record)
        if records:
            term_sets.append(TermSet(keyword=keyword, records=records))
        else:
            logger.debug("keyword %r matched no terms", keyword)
    return term_sets
