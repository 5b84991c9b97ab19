from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from concernmap.llm_gateway import StubGateway, StubRule, StubScript
from concernmap.repo_model import FunctionUnit
from concernmap.term_explain import TermExplanation, TermRecord
from concernmap.term_extract import ExtractedTerm

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def make_unit(
    function_name: str = "getUserNameById",
    file_path: str = "src/users.ts",
    source_text: str = "function getUserNameById(id) {\n  return id;\n}",
    identifiers: tuple[str, ...] = ("getUserNameById", "id", "id"),
    callee_names: frozenset[str] = frozenset(),
    start_line: int = 1,
    end_line: int = 3,
    qualified_id: str | None = None,
) -> FunctionUnit:
    return FunctionUnit(
        file_path=file_path,
        function_name=function_name,
        qualified_id=qualified_id or f"{file_path}:{function_name}",
        start_line=start_line,
        end_line=end_line,
        source_text=source_text,
        identifiers=identifiers,
        callee_names=callee_names,
    )


def make_record(
    lemma: str = "id",
    function_id: str = "src/users.ts:getUserNameById",
    expanded_name: str | None = None,
    definition: str = "An identifier.",
    functionality: str = "Reads the id.",
    snippets: tuple[str, ...] = ("return id;",),
    degraded: bool = False,
) -> TermRecord:
    return TermRecord(
        term=ExtractedTerm(lemma=lemma, function_id=function_id, surface_forms=frozenset({lemma})),
        explanation=TermExplanation(
            expanded_name=expanded_name if expanded_name is not None else lemma,
            definition=definition,
            functionality=functionality,
            reference_snippets=snippets,
        ),
        degraded=degraded,
    )


def stub_gateway(
    exact: dict[str, str] | None = None,
    rules: list[tuple[tuple[str, ...], str]] | None = None,
    responders: list[tuple[tuple[str, ...], str]] | None = None,
    embeddings: dict[str, list[float]] | None = None,
    dim: int = 32,
) -> StubGateway:
    stub_rules = [StubRule(contains=needles, response=response) for needles, response in (rules or [])]
    stub_rules += [StubRule(contains=needles, responder=name) for needles, name in (responders or [])]
    script = StubScript(
        exact=exact or {},
        rules=stub_rules,
        embedding_overrides=embeddings or {},
        embed_dim=dim,
    )
    return StubGateway(script)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN
