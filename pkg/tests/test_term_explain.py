from __future__ import annotations

import pytest

from concernmap.term_explain import (
    ExplanationFormatError,
    build_explanation_prompt,
    explain_all,
    explain_term,
    parse_explanation_response,
    snippet_in_source,
    validate_explanation,
)
from concernmap.term_extract import ExtractedTerm
from concernmap import prompts

from conftest import make_unit, stub_gateway

VALID_RESPONSE = (
    "REASONING: thinking\n"
    "NAME: transaction id\n"
    "DEFINITION: A unique identifier of a transaction.\n"
    "FUNCTIONALITY: Looks the record up by its id.\n"
    "SNIPPET:\n"
    "return id;\n"
)


def _term(unit, lemma="id"):
    return ExtractedTerm(lemma=lemma, function_id=unit.qualified_id, surface_forms=frozenset({lemma}))


def test_prompt_contains_blocks_in_order():
    unit = make_unit()
    prompt = build_explanation_prompt(_term(unit), unit)
    positions = [
        prompt.index(prompts.TERM_NAME_EXPANSION_INSTRUCTIONS),
        prompt.index(prompts.TERM_DEFINITION_INSTRUCTIONS),
        prompt.index(prompts.TERM_FUNCTIONALITY_INSTRUCTIONS),
        prompt.index(prompts.REFERENCE_CODE_INSTRUCTIONS),
        prompt.index("Term: id"),
        prompt.index(unit.source_text),
    ]
    assert positions == sorted(positions)


def test_prompt_mentions_term_once_in_slot():
    unit = make_unit()
    prompt = build_explanation_prompt(_term(unit), unit)
    assert prompt.count("Term: id") == 1


def test_prompt_contains_expansion_instruction_text():
    unit = make_unit(function_name="handleRequest", identifiers=("req",))
    prompt = build_explanation_prompt(_term(unit, "req"), unit)
    assert "expand it into its full form" in prompt


def test_prompt_golden(golden_dir):
    unit = make_unit()
    prompt = build_explanation_prompt(_term(unit), unit)
    assert prompt == (golden_dir / "explanation_prompt.txt").read_text()


def test_parse_valid_response():
    explanation = parse_explanation_response(VALID_RESPONSE)
    assert explanation.expanded_name == "transaction id"
    assert explanation.definition == "A unique identifier of a transaction."
    assert explanation.reference_snippets == ("return id;",)


def test_parse_multiple_snippets():
    text = VALID_RESPONSE + "SNIPPET:\nconst x = 1;\nconst y = 2;\n"
    explanation = parse_explanation_response(text)
    assert len(explanation.reference_snippets) == 2
    assert explanation.reference_snippets[1] == "const x = 1;\nconst y = 2;"


def test_parse_missing_field_raises():
    with pytest.raises(ExplanationFormatError):
        parse_explanation_response("NAME: x\nDEFINITION: y\n")  # no functionality/snippet


def test_snippet_matching_is_whitespace_normalized():
    assert snippet_in_source("return    id;", "function f() {\n  return id;\n}")
    assert not snippet_in_source("return other;", "function f() {\n  return id;\n}")


def test_validate_rejects_fabricated_snippet():
    unit = make_unit()
    explanation = parse_explanation_response(
        VALID_RESPONSE.replace("return id;", "totally invented line")
    )
    problems = validate_explanation(explanation, unit)
    assert any("does not occur" in p for p in problems)


def test_validate_rejects_oversized_snippet():
    unit = make_unit(source_text="function f() {\n" + "  a();\n" * 8 + "}")
    explanation = parse_explanation_response(
        "NAME: n\nDEFINITION: d\nFUNCTIONALITY: f\nSNIPPET:\n" + "  a();\n" * 6
    )
    problems = validate_explanation(explanation, unit)
    assert any("lines" in p for p in problems)


def test_explain_term_with_stub_is_deterministic():
    unit = make_unit()
    term = _term(unit)
    prompt = build_explanation_prompt(term, unit)
    stub = stub_gateway(exact={prompt: VALID_RESPONSE})
    first = explain_term(term, unit, stub)
    second = explain_term(term, unit, stub)
    assert first == second
    assert not first.degraded
    assert first.explanation.expanded_name == "transaction id"


def test_explain_term_repairs_once_then_succeeds():
    unit = make_unit()
    term = _term(unit)
    prompt = build_explanation_prompt(term, unit)
    stub = stub_gateway(
        exact={prompt: "garbage with no tags"},
        rules=[(("Your previous response was invalid",), VALID_RESPONSE)],
    )
    record = explain_term(term, unit, stub)
    assert not record.degraded
    assert len(stub.chat_calls) == 2


def test_explain_term_degrades_after_failed_repair():
    unit = make_unit()
    term = _term(unit)
    prompt = build_explanation_prompt(term, unit)
    stub = stub_gateway(
        exact={prompt: "garbage"},
        rules=[(("Your previous response was invalid",), "still garbage")],
    )
    record = explain_term(term, unit, stub)
    assert record.degraded
    assert record.explanation.expanded_name == term.lemma
    assert record.explanation.reference_snippets == ()


def test_fabricated_snippet_never_silently_accepted():
    unit = make_unit()
    term = _term(unit)
    prompt = build_explanation_prompt(term, unit)
    bad = VALID_RESPONSE.replace("return id;", "fabricated();")
    stub = stub_gateway(
        exact={prompt: bad},
        rules=[(("Your previous response was invalid",), bad)],
    )
    record = explain_term(term, unit, stub)
    assert record.degraded


def test_explain_all_preserves_order_and_count():
    unit_a = make_unit(function_name="first", source_text="function first() { return id; }")
    unit_b = make_unit(function_name="second", source_text="function second() { return id; }")
    pairs = [(_term(unit_a), unit_a), (_term(unit_b), unit_b)]
    responders = [((prompts.EXPLANATION_TASK_HEADER,), "echo_explanation")]
    stub = stub_gateway(responders=responders)
    records = explain_all(pairs, stub, concurrency=2)
    assert len(records) == 2
    assert records[0].term.function_id == unit_a.qualified_id
    assert records[1].term.function_id == unit_b.qualified_id


def test_echo_responder_expands_request_abbreviation():
    unit = make_unit(
        function_name="handleRequest",
        source_text="function handleRequest(req) {\n  return req.body;\n}",
        identifiers=("handleRequest", "req"),
    )
    term = _term(unit, "request")
    stub = stub_gateway(responders=[((prompts.EXPLANATION_TASK_HEADER,), "echo_explanation")])
    record = explain_term(term, unit, stub)
    assert record.explanation.expanded_name == "request"


def test_req_expands_to_request_in_handler_context():
    unit = make_unit(
        function_name="handleRequest",
        source_text="function handleRequest(req) {\n  return req.body;\n}",
        identifiers=("handleRequest", "req"),
    )
    term = _term(unit, "req")
    response = (
        "NAME: request\nDEFINITION: An incoming HTTP request.\n"
        "FUNCTIONALITY: Reads the request body.\nSNIPPET:\nreturn req.body;\n"
    )
    stub = stub_gateway(exact={build_explanation_prompt(term, unit): response})
    record = explain_term(term, unit, stub)
    assert record.explanation.expanded_name == "request"


def test_id_expands_to_transaction_id_in_transaction_context():
    unit = make_unit(
        function_name="commitTransaction",
        source_text="function commitTransaction(id) {\n  return ledger.commit(id);\n}",
        identifiers=("commitTransaction", "id", "ledger", "id"),
    )
    term = _term(unit, "id")
    response = (
        "NAME: transaction id\nDEFINITION: The identifier of a ledger transaction.\n"
        "FUNCTIONALITY: Selects which transaction to commit.\n"
        "SNIPPET:\nreturn ledger.commit(id);\n"
    )
    stub = stub_gateway(exact={build_explanation_prompt(term, unit): response})
    record = explain_term(term, unit, stub)
    assert record.explanation.expanded_name == "transaction id"
