"""Parse a repository snapshot into function units and call edges.

Source files are tokenized with the lexical grammar of their language
(Pygments lexers: comments, strings, template literals, and regex-vs-division
are all handled by the grammar), then a structural pass recognizes the node
kinds listed in :data:`FUNCTION_NODE_KINDS`: function declarations, class
methods, and arrow/function expressions bound to a named variable. Anonymous
inline callbacks are excluded; they have no stable name for the
``file_path:function_name`` scheme.
"""

from __future__ import annotations

import bisect
import logging
import posixpath
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from pygments.lexers.javascript import JavascriptLexer, TypeScriptLexer
from pygments.token import (
    Comment,
    Keyword,
    Name,
    Number,
    Operator,
    Punctuation,
    String,
)

logger = logging.getLogger(__name__)

# Version 1 of the per-language structural config.
LANGUAGE_TABLE_VERSION = "1"

LANGUAGE_EXTENSIONS: dict[str, tuple[str, ...]] = {
    "javascript": (".js", ".jsx", ".mjs", ".cjs"),
    "typescript": (".ts", ".tsx"),
}

# Node kinds recognized as function units, per language.
FUNCTION_NODE_KINDS: dict[str, tuple[str, ...]] = {
    "javascript": (
        "function_declaration",
        "method_definition",
        "named_arrow_binding",
        "named_function_expression_binding",
    ),
    "typescript": (
        "function_declaration",
        "method_definition",
        "named_arrow_binding",
        "named_function_expression_binding",
    ),
}

DEFAULT_LANGUAGES = frozenset(LANGUAGE_EXTENSIONS)
DEFAULT_IGNORED_DIRS = frozenset({".git", "node_modules"})

_LEXERS = {
    "javascript": JavascriptLexer,
    "typescript": TypeScriptLexer,
}

# Keyword-ish tokens that may precede a declaration and belong to its span.
_HEADER_MODIFIERS = {"export", "default", "async", "declare", "public", "private",
                     "protected", "static", "abstract", "readonly", "override",
                     "get", "set"}


class RepositoryError(Exception):
    """Fatal repository-level failure (unreadable root, no such path)."""


@dataclass(frozen=True)
class FunctionUnit:
    """One parsed function-like definition."""

    file_path: str
    function_name: str
    qualified_id: str
    start_line: int
    end_line: int
    source_text: str
    identifiers: tuple[str, ...]
    callee_names: frozenset[str]


@dataclass(frozen=True)
class CallEdgeSet:
    """Resolved (caller qualified_id, callee qualified_id) pairs."""

    edges: frozenset[tuple[str, str]]


@dataclass
class ParseStats:
    files_seen: int = 0
    files_skipped: int = 0
    units_found: int = 0
    warnings: list[str] = field(default_factory=list)


@dataclass
class EdgeStats:
    resolved_edges: int = 0
    unresolved_names: int = 0


@dataclass(frozen=True)
class _Tok:
    kind: str  # name | keyword | punct | op | string | number | comment | other
    text: str
    offset: int


def _token_kind(ttype) -> str:
    if ttype in Keyword or ttype in Keyword.Declaration:
        return "keyword"
    if ttype in Name:
        return "name"
    if ttype in Punctuation:
        return "punct"
    if ttype in Operator:
        return "op"
    if ttype in String:
        return "string"
    if ttype in Number:
        return "number"
    if ttype in Comment:
        return "comment"
    return "other"


def _tokenize(text: str, language: str) -> list[_Tok]:
    lexer = _LEXERS[language]()
    toks = []
    for offset, ttype, value in lexer.get_tokens_unprocessed(text):
        if not value.strip():
            continue
        kind = _token_kind(ttype)
        if kind == "comment":
            continue
        toks.append(_Tok(kind, value, offset))
    return toks


@dataclass
class _RawUnit:
    name: str
    start_offset: int
    end_offset: int  # exclusive
    header_name_index: int  # token index of the defining name


class _Scanner:
    """Single linear pass recognizing function-unit spans in a token list."""

    def __init__(self, tokens: list[_Tok]):
        self.tokens = tokens
        self.units: list[_RawUnit] = []
        self.definition_name_indexes: set[int] = set()
        # Brace contexts: "class" for class bodies, "block" otherwise.
        self.context: list[str] = []
        self.unterminated = 0

    def _match_forward(self, i: int, open_text: str, close_text: str) -> int:
        """Index of the token closing the bracket opened at ``i``; -1 if none."""
        depth = 0
        for j in range(i, len(self.tokens)):
            t = self.tokens[j]
            if t.kind in ("punct", "op"):
                if t.text == open_text:
                    depth += 1
                elif t.text == close_text:
                    depth -= 1
                    if depth == 0:
                        return j
        return -1

    def _body_end(self, brace_index: int) -> int:
        end = self._match_forward(brace_index, "{", "}")
        if end == -1:
            self.unterminated += 1
        return end

    def _skip_type_params(self, i: int) -> int:
        """Index just past a balanced ``<...>`` type-parameter list at ``i``.

        Nested closers lex as ``>>``/``>>>`` operator tokens, so balance is
        tracked per angle character. Returns ``i`` unchanged when the list
        never closes.
        """
        if not (self.tokens[i].kind == "op" and self.tokens[i].text.startswith("<")):
            return i
        depth = 0
        for j in range(i, len(self.tokens)):
            t = self.tokens[j]
            if t.kind == "op":
                depth += t.text.count("<") - t.text.count(">")
                if depth <= 0:
                    return j + 1
            elif t.kind == "punct" and t.text == ";":
                break
        return i

    def _statement_end(self, i: int) -> int:
        """End of an expression-bodied arrow: ``;`` or ``,`` at depth 0."""
        depth = 0
        j = i
        while j < len(self.tokens):
            t = self.tokens[j]
            if t.kind in ("punct", "op"):
                if t.text in "([{":
                    depth += 1
                elif t.text in ")]}":
                    if depth == 0:
                        return j - 1
                    depth -= 1
                elif t.text in (";", ",") and depth == 0:
                    return j
            j += 1
        return len(self.tokens) - 1

    def _emit(self, name: str, name_index: int, start_index: int, end_index: int) -> None:
        toks = self.tokens
        self.definition_name_indexes.add(name_index)
        self.units.append(
            _RawUnit(
                name=name,
                start_offset=toks[start_index].offset,
                end_offset=toks[end_index].offset + len(toks[end_index].text),
                header_name_index=name_index,
            )
        )

    def _header_start(self, i: int) -> int:
        """Walk back over modifier keywords so spans include them."""
        j = i
        while j > 0:
            prev = self.tokens[j - 1]
            if prev.text in _HEADER_MODIFIERS and prev.kind in ("keyword", "name"):
                j -= 1
            elif prev.kind == "op" and prev.text == "@":
                j -= 1
            else:
                break
        return j

    def _at_member_position(self, i: int) -> bool:
        """True when token i can begin a class member.

        Member starts follow the class-body brace, a previous member's
        closing brace or semicolon, or modifier keywords.
        """
        if i == 0:
            return True
        prev = self.tokens[i - 1]
        if prev.kind in ("punct", "op") and prev.text in ("{", "}", ";"):
            return True
        return prev.text in _HEADER_MODIFIERS

    def scan(self) -> None:
        toks = self.tokens
        i = 0
        while i < len(toks):
            t = toks[i]

            if t.kind in ("punct", "op") and t.text == "{":
                self.context.append("block")
                i += 1
                continue
            if t.kind in ("punct", "op") and t.text == "}":
                if self.context:
                    self.context.pop()
                i += 1
                continue

            if t.kind == "keyword" and t.text == "class":
                # Mark the upcoming brace as a class body.
                j = i + 1
                while j < len(toks) and not (toks[j].kind in ("punct", "op") and toks[j].text in ("{", ";")):
                    j += 1
                if j < len(toks) and toks[j].text == "{":
                    self.context.append("class")
                    i = j + 1
                    continue
                i = j
                continue

            if t.kind == "keyword" and t.text == "function":
                i = self._scan_function_declaration(i)
                continue

            if t.kind == "keyword" and t.text in ("const", "let", "var"):
                i = self._scan_variable_binding(i)
                continue

            if (
                (t.kind == "name" or (t.kind == "keyword" and t.text == "constructor"))
                and self.context
                and self.context[-1] == "class"
                and self._at_member_position(i)
            ):
                advanced = self._scan_class_member(i)
                if advanced != i:
                    i = advanced
                    continue

            i += 1

    def _scan_function_declaration(self, i: int) -> int:
        """``function`` [``*``] name ``(`` ... ``)`` ``{`` ... ``}``"""
        toks = self.tokens
        j = i + 1
        if j < len(toks) and toks[j].kind == "op" and toks[j].text == "*":
            j += 1
        if j >= len(toks) or toks[j].kind != "name":
            return i + 1  # anonymous function expression: not a unit
        name_index = j
        j = self._skip_type_params(j + 1)
        if j >= len(toks) or toks[j].text != "(":
            return i + 1
        close = self._match_forward(j, "(", ")")
        if close == -1:
            return i + 1
        body = close + 1
        # Skip a TS return-type annotation between ) and {.
        while body < len(toks) and toks[body].text != "{":
            if toks[body].text in (";", ")"):
                return close + 1  # declaration without body (overload)
            body += 1
        if body >= len(toks):
            return close + 1
        end = self._body_end(body)
        if end == -1:
            return len(toks)
        self._emit(toks[name_index].text, name_index, self._header_start(i), end)
        return body  # resume at the brace so nesting contexts stay balanced

    def _scan_variable_binding(self, i: int) -> int:
        """``const name = [async] (args) => ...`` and function expressions."""
        toks = self.tokens
        j = i + 1
        if j >= len(toks) or toks[j].kind != "name":
            return i + 1
        name_index = j
        j += 1
        # Skip a type annotation up to `=` at the same nesting depth. The
        # arrow `=>` lexes as one punctuation token, so it cannot be confused
        # with the assignment operator.
        depth = 0
        while j < len(toks):
            t = toks[j]
            if t.kind in ("punct", "op"):
                if t.text in "([{":
                    depth += 1
                elif t.text in ")]}":
                    if depth == 0:
                        return i + 1
                    depth -= 1
                elif t.text == "=" and depth == 0:
                    break
                elif t.text in (";", ",") and depth == 0:
                    return i + 1  # plain declaration, no initializer
            j += 1
        if j >= len(toks):
            return i + 1
        value = j + 1
        if value < len(toks) and toks[value].text == "async":
            value += 1
        value = self._skip_type_params(value)
        if value >= len(toks):
            return i + 1
        v = toks[value]
        if v.kind == "keyword" and v.text == "function":
            return self._scan_bound_function_expression(i, name_index, value)
        if v.text == "(":
            close = self._match_forward(value, "(", ")")
            if close == -1 or close + 1 >= len(toks):
                return i + 1
            arrow = close + 1
            # Optional return-type annotation between ) and =>.
            while arrow < len(toks) and toks[arrow].text not in ("=>", ";", ","):
                arrow += 1
            if arrow >= len(toks) or toks[arrow].text != "=>":
                return i + 1
            return self._scan_arrow_body(i, name_index, arrow)
        if v.kind == "name" and value + 1 < len(toks) and toks[value + 1].text == "=>":
            return self._scan_arrow_body(i, name_index, value + 1)
        return i + 1

    def _scan_arrow_body(self, decl_index: int, name_index: int, arrow_index: int) -> int:
        toks = self.tokens
        body = arrow_index + 1
        if body >= len(toks):
            return decl_index + 1
        if toks[body].text == "{":
            end = self._body_end(body)
            if end == -1:
                return len(toks)
            self._emit(toks[name_index].text, name_index, self._header_start(decl_index), end)
            return body
        end = self._statement_end(body)
        self._emit(toks[name_index].text, name_index, self._header_start(decl_index), end)
        return body

    def _scan_bound_function_expression(self, decl_index: int, name_index: int, func_index: int) -> int:
        toks = self.tokens
        j = func_index + 1
        if j < len(toks) and toks[j].kind == "op" and toks[j].text == "*":
            j += 1
        if j < len(toks) and toks[j].kind == "name":
            j += 1  # inner name of a named function expression
        if j >= len(toks) or toks[j].text != "(":
            return decl_index + 1
        close = self._match_forward(j, "(", ")")
        if close == -1:
            return decl_index + 1
        body = close + 1
        while body < len(toks) and toks[body].text != "{":
            body += 1
        if body >= len(toks):
            return decl_index + 1
        end = self._body_end(body)
        if end == -1:
            return len(toks)
        self._emit(toks[name_index].text, name_index, self._header_start(decl_index), end)
        return body

    def _scan_class_member(self, i: int) -> int:
        """Method definitions and arrow-valued class properties."""
        toks = self.tokens
        name_index = i
        j = self._skip_type_params(i + 1)
        if j >= len(toks):
            return i
        if toks[j].text == "(":
            close = self._match_forward(j, "(", ")")
            if close == -1:
                return i
            body = close + 1
            while body < len(toks) and toks[body].text not in ("{", ";", "}"):
                body += 1
            if body >= len(toks) or toks[body].text != "{":
                return i  # abstract/overload signature
            end = self._body_end(body)
            if end == -1:
                return len(toks)
            self._emit(toks[name_index].text, name_index, self._header_start(i), end)
            return body
        if toks[j].text == "=":
            value = j + 1
            if value < len(toks) and toks[value].text == "async":
                value += 1
            value = self._skip_type_params(value)
            if value < len(toks) and toks[value].text == "(":
                close = self._match_forward(value, "(", ")")
                if close == -1:
                    return i
                arrow = close + 1
                while arrow < len(toks) and toks[arrow].text not in ("=>", ";", ","):
                    arrow += 1
                if arrow < len(toks) and toks[arrow].text == "=>":
                    return self._scan_arrow_body(i, name_index, arrow)
                return i
            if (
                value + 1 < len(toks)
                and toks[value].kind == "name"
                and toks[value + 1].text == "=>"
            ):
                return self._scan_arrow_body(i, name_index, value + 1)
        return i


def _line_starts(text: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def parse_source(text: str, file_path: str, language: str) -> list[FunctionUnit]:
    """Parse one file's text into function units (no qualified-id suffixing)."""
    tokens = _tokenize(text, language)
    scanner = _Scanner(tokens)
    scanner.scan()
    if scanner.unterminated:
        raise ValueError(f"{scanner.unterminated} unterminated function body(ies)")

    starts = _line_starts(text)
    offsets = [t.offset for t in tokens]
    units = []
    for raw in sorted(scanner.units, key=lambda u: (u.start_offset, u.end_offset)):
        lo = bisect.bisect_left(offsets, raw.start_offset)
        hi = bisect.bisect_left(offsets, raw.end_offset)
        span = range(lo, hi)
        identifiers = tuple(tokens[k].text for k in span if tokens[k].kind == "name")
        callees = set()
        for k in span:
            if (
                tokens[k].kind == "name"
                and k not in scanner.definition_name_indexes
                and k + 1 < len(tokens)
                and tokens[k + 1].text == "("
            ):
                callees.add(tokens[k].text)
        units.append(
            FunctionUnit(
                file_path=file_path,
                function_name=raw.name,
                qualified_id=f"{file_path}:{raw.name}",
                start_line=bisect.bisect_right(starts, raw.start_offset),
                end_line=bisect.bisect_right(starts, raw.end_offset - 1),
                source_text=text[raw.start_offset : raw.end_offset],
                identifiers=identifiers,
                callee_names=frozenset(callees),
            )
        )
    return units


def _language_for(path: Path, languages: frozenset[str]) -> str | None:
    suffix = path.suffix.lower()
    for lang in languages:
        if suffix in LANGUAGE_EXTENSIONS.get(lang, ()):
            return lang
    return None


def _dedupe_qualified_ids(units: list[FunctionUnit]) -> list[FunctionUnit]:
    """Suffix later same-named functions with #<start_line> to stay unique."""
    seen: dict[str, int] = {}
    out = []
    for unit in units:
        qid = unit.qualified_id
        if qid in seen:
            qid = f"{unit.qualified_id}#{unit.start_line}"
            while qid in seen:
                qid += "'"
            unit = FunctionUnit(
                file_path=unit.file_path,
                function_name=unit.function_name,
                qualified_id=qid,
                start_line=unit.start_line,
                end_line=unit.end_line,
                source_text=unit.source_text,
                identifiers=unit.identifiers,
                callee_names=unit.callee_names,
            )
        seen[qid] = 1
        out.append(unit)
    return out


def parse_repository(
    root_path: str | Path,
    language_filter: frozenset[str] | set[str] | None = None,
    workers: int = 1,
    ignored_dirs: frozenset[str] = DEFAULT_IGNORED_DIRS,
) -> tuple[list[FunctionUnit], ParseStats]:
    """Parse every matching file under ``root_path``.

    Files that fail to parse are skipped and reported in the stats record;
    they never abort the run. Output is deterministic (path, then line).
    """
    root = Path(root_path)
    if not root.is_dir():
        raise RepositoryError(f"repository root not readable: {root}")
    languages = frozenset(language_filter) if language_filter else DEFAULT_LANGUAGES
    unknown = languages - set(LANGUAGE_EXTENSIONS)
    if unknown:
        raise RepositoryError(f"unsupported language(s): {', '.join(sorted(unknown))}")

    targets = []
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        if any(part in ignored_dirs for part in path.relative_to(root).parts):
            continue
        lang = _language_for(path, languages)
        if lang is not None:
            targets.append((path, lang))

    stats = ParseStats(files_seen=len(targets))

    def parse_one(entry: tuple[Path, str]) -> tuple[str, list[FunctionUnit] | None, str | None]:
        path, lang = entry
        rel = posixpath.join(*path.relative_to(root).parts)
        try:
            text = path.read_bytes().decode("utf-8", errors="replace")
            return rel, parse_source(text, rel, lang), None
        except Exception as exc:  # per-file isolation
            return rel, None, f"{rel}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(parse_one, targets))
    else:
        results = [parse_one(t) for t in targets]

    units: list[FunctionUnit] = []
    for rel, parsed, warning in results:
        if warning is not None:
            stats.files_skipped += 1
            stats.warnings.append(warning)
            logger.warning("skipping unparseable file %s", warning)
            continue
        units.extend(parsed)

    units.sort(key=lambda u: (u.file_path, u.start_line, u.end_line))
    units = _dedupe_qualified_ids(units)
    stats.units_found = len(units)
    return units, stats


def build_call_edges(units: list[FunctionUnit]) -> tuple[CallEdgeSet, EdgeStats]:
    """Resolve callee names by bare function name across the snapshot.

    A name shared by several units resolves to all of them; unresolvable
    names are dropped and counted. Self-calls are kept.
    """
    by_name: dict[str, list[str]] = {}
    for unit in units:
        by_name.setdefault(unit.function_name, []).append(unit.qualified_id)

    stats = EdgeStats()
    edges = set()
    for unit in units:
        for callee in unit.callee_names:
            targets = by_name.get(callee)
            if not targets:
                stats.unresolved_names += 1
                continue
            for target in targets:
                edges.add((unit.qualified_id, target))
    stats.resolved_edges = len(edges)
    return CallEdgeSet(edges=frozenset(edges)), stats


def has_call_relationship(edges: CallEdgeSet, a: str, b: str) -> bool:
    """Undirected call-relationship test between two qualified ids."""
    return (a, b) in edges.edges or (b, a) in edges.edges
