"""Mine lemmatized noun terms from the identifiers of a function unit.

Identifiers are split on camelCase/snake_case boundaries, tagged with a
rule-plus-lexicon part-of-speech tagger (unknown words default to noun,
matching the noun-heavy nature of identifiers), chunked into noun phrases,
and singular-normalized with a rule table.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .lexicon import Lexicon, default_lexicon
from .repo_model import FunctionUnit

TAG_VERB = "V"
TAG_NOUN = "N"
TAG_PREP = "P"
TAG_ADJ = "ADJ"
TAG_OTHER = "OTHER"

# Ordered alternatives: pluralized acronym runs ("IDs"), acronym runs (not
# followed by a lowercase letter), capitalized words, lowercase runs, digits.
_WORD_RE = re.compile(r"[A-Z]{2,}s(?![a-z])|[A-Z]+(?![a-z])|[A-Z][a-z]+|[a-z]+|\d+")

DEFAULT_STOPLIST = frozenset({"value"})


@dataclass(frozen=True)
class TaggedChunk:
    """One chunk of the tagged identifier, e.g. (N, "user name")."""

    tag: str
    text: str


@dataclass(frozen=True)
class ExtractedTerm:
    """A lemmatized noun term tied to the function it was mined from."""

    lemma: str
    function_id: str
    surface_forms: frozenset[str]


def split_identifier(identifier: str) -> list[str]:
    """Split an identifier into lowercase words.

    Splits at case transitions, underscores/separators, and digit-letter
    boundaries; acronym runs stay one word ("HTTPRequest" -> http, request).
    """
    return [w.lower() for w in _WORD_RE.findall(identifier)]


def singularize(word: str, lexicon: Lexicon | None = None) -> str:
    """Normalize a plural noun to its singular form via the rule table."""
    lex = lexicon or default_lexicon()
    word = word.lower()
    if word in lex.invariant_nouns:
        return word
    if word in lex.irregular_plurals:
        return lex.irregular_plurals[word]
    if len(word) >= 5 and word.endswith("ies"):
        return word[:-3] + "y"
    for suffix in ("sses", "xes", "ches", "shes", "zzes", "oes"):
        if word.endswith(suffix):
            return word[:-2]
    if word.endswith("s") and len(word) >= 2 and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    return word


def lemmatize_phrase(phrase: str, lexicon: Lexicon | None = None) -> str:
    """Lowercase a phrase and singularize each word; single-space joined."""
    words = phrase.lower().split()
    return " ".join(singularize(w, lexicon) for w in words)


def tag_word(word: str, lexicon: Lexicon | None = None) -> str:
    lex = lexicon or default_lexicon()
    if word.isdigit():
        return TAG_OTHER
    if word in lex.verbs:
        return TAG_VERB
    if word in lex.prepositions:
        return TAG_PREP
    if word in lex.adjectives:
        return TAG_ADJ
    return TAG_NOUN


def tag_and_chunk(words: list[str], lexicon: Lexicon | None = None) -> list[TaggedChunk]:
    """Tag each word and group the sequence into chunks.

    Adjacent nouns merge into one N chunk; adjectives directly preceding a
    noun chunk merge into it; verbs and prepositions stay singleton chunks;
    pure-digit words are OTHER and never join a noun chunk.
    """
    lex = lexicon or default_lexicon()
    chunks: list[tuple[str, list[str]]] = []
    for word in words:
        tag = tag_word(word, lex)
        if tag == TAG_NOUN and chunks and chunks[-1][0] == TAG_NOUN:
            chunks[-1][1].append(word)
        else:
            chunks.append((tag, [word]))
    # Fold adjective chunks into the noun chunk they precede, right to left
    # so adjective runs ("personal big account") collapse into one chunk.
    for i in range(len(chunks) - 2, -1, -1):
        if chunks[i][0] == TAG_ADJ and chunks[i + 1][0] == TAG_NOUN:
            merged = chunks[i][1] + chunks[i + 1][1]
            chunks[i + 1 : i + 2] = []
            chunks[i] = (TAG_NOUN, merged)
    return [TaggedChunk(tag, " ".join(ws)) for tag, ws in chunks]


def extract_terms(
    unit: FunctionUnit,
    lexicon: Lexicon | None = None,
    filter_stop_terms: bool = False,
    stoplist: frozenset[str] = DEFAULT_STOPLIST,
    counters: Counter | None = None,
) -> list[ExtractedTerm]:
    """Extract the deduplicated noun terms of one function unit.

    Every identifier is split, tagged and chunked; the N chunks become
    candidate terms, lemmatized and deduplicated per function. Order is
    deterministic (first occurrence). Stop-term filtering (single-letter
    lemmas plus ``stoplist``) is opt-in; nothing is filtered by default.
    """
    lex = lexicon or default_lexicon()
    by_lemma: dict[str, set[str]] = {}
    for identifier in unit.identifiers:
        words = split_identifier(identifier)
        if not words:
            continue
        for chunk in tag_and_chunk(words, lex):
            if chunk.tag != TAG_NOUN:
                if counters is not None:
                    counters["noun_free_chunks"] += 1
                continue
            lemma = lemmatize_phrase(chunk.text, lex)
            if filter_stop_terms and (len(lemma) == 1 or lemma in stoplist):
                continue
            by_lemma.setdefault(lemma, set()).add(chunk.text)
    return [
        ExtractedTerm(lemma=lemma, function_id=unit.qualified_id, surface_forms=frozenset(forms))
        for lemma, forms in by_lemma.items()
    ]
