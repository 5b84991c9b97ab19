"""Prompt templates and instruction blocks used across the pipeline."""

from __future__ import annotations

TERM_NAME_EXPANSION_INSTRUCTIONS = """\
Term Name Expansion Instructions:
- Determine whether the given noun term is an abbreviation.
- If it is, expand it into its full form based on the code context.
- After obtaining the full form, add necessary modifiers or qualifiers based on the context to make the noun term more specific and precise.
- The final result must remain a concrete noun term (not a descriptive sentence), and use spaces between words within the term."""

TERM_DEFINITION_INSTRUCTIONS = """\
Term Definition Generation Instructions:
- Provide a concise natural language sentence that defines what the given term **is**.
- The definition should capture the intrinsic meaning of the noun term, independent of how it is used in the code."""

TERM_FUNCTIONALITY_INSTRUCTIONS = """\
Term-Centric Functionality Summarization Instructions:
- Analyze the functional semantics/responsiblities or business logic in the given function that specifically relates to the noun term.
- Focus only on the part of the logic that is relevant to the noun term, **not the overall functionality of the entire function**."""

REFERENCE_CODE_INSTRUCTIONS = """\
Reference Code Extraction Instructions:
- Identify and extract 1-3 concise code snippets (each 1-5 lines) that illustrate the term-centric functionality.
- Ensure the extracted snippets **directly** support understanding of the term-centric functionality, and exclude trivial or non-essential code (e.g., style spreading or simple JSX wrappers)."""

CONCERN_DEFINITION = """\
Concern Definition:
A concern is a cohesive set of functionalities in code that are conceptually related to a specific term (entity, object, or domain concept).
- These functionalities may be scattered across different parts of the codebase, but together they are concerned with a single responsibility or area of interest.
- A Concern can be composed of atomic operations and low-level details, which, when aggregated, form a higher-level functional semantics or business logic tied to that term."""

CONCERN_FORMAT = """\
Concern Format:
- related_term: the noun term that these concerns are associated with.
- concern_summary: a description of the concern, summarizing the functional semantics or business logic it represents.
- related_code: a list of code snippets related to this concern, where each item contains:
  - code_location: the file path and function name where the code is located (format: file_path:function_name).
  - reference_code: the actual code snippets relevant to this concern."""

WORKFLOW_INSTRUCTION = (
    "Pay special attention to files that appear in the Concern list and are "
    "semantically connected to the problem description."
)

AGENT_INSTRUCTION = (
    "Locate the code elements relevant to the issue using the provided "
    "concerns (descriptions, files, and functions) as guiding context."
)

EXPLANATION_TASK_HEADER = "## Task: term explanation"

EXPLANATION_RESPONSE_FORMAT = """\
Work through the four instruction sets above step by step, in order, reasoning
about the term in its function context before writing each field. Then respond
in exactly this format (keep the uppercase tags at line starts):

REASONING: <your step-by-step reasoning>
NAME: <the expanded noun term>
DEFINITION: <one sentence defining the term>
FUNCTIONALITY: <the term-centric functionality>
SNIPPET:
<a code snippet copied verbatim from the function>

Repeat the SNIPPET block for each snippet (1 to 3 snippets, 1 to 5 lines each)."""

KEYWORD_TASK_HEADER = "## Task: issue keyword extraction"

KEYWORD_EXTRACTION_PROMPT = """\
{header}

Extract the noun words and noun phrases from the issue title below. They
should name the key entities and concepts the issue is about. Respond with
one keyword per line and nothing else.

Issue title: {title}"""

CLUSTERING_TASK_HEADER = "## Task: concern clustering"

CLUSTERING_PROMPT = """\
{header}

{concern_definition}

First interpret the Concern Definition above. Then examine the atomic
functionalities listed below, each associated with a noun term and identified
by its index. Identify their conceptual and semantic relationships and
aggregate them into concerns that reflect specific responsibilities or areas
of interest. Give each concern a summary that captures its conceptual
semantics.

An atomic functionality may belong to multiple concerns. Only group
functionalities whose relationship is directly supported by the listed
information; do not speculate beyond it, and never invent indices that are
not listed.

Atomic functionalities:
{records}

Respond with one block per concern, in exactly this format:

CONCERN: <the noun term the concern is associated with>
SUMMARY: <a description of the concern>
RECORDS: <comma-separated indices of the functionalities it contains>"""

RERANK_TASK_HEADER = "## Task: concern ranking"

RERANK_PROMPT = """\
{header}

Evaluate how relevant each candidate concern below is to the issue, identify
the concerns most likely to represent the root cause, and produce a reranked
list.

Issue title: {title}

Issue body:
{body}

Candidate concerns:
{candidates}

Respond with a single line in exactly this format, most relevant first:

RANKING: <comma-separated candidate indices>"""

SUMMARY_TASK_HEADER = "## Task: function summary"

FUNCTION_SUMMARY_PROMPT = """\
{header}

Summarize the overall functionality of the function below in one short
paragraph. Respond with the summary text and nothing else.

Function {qualified_id}:
```
{source}
```"""
