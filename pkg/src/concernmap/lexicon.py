"""Bundled word lexicon: POS word lists and the plural->singular table.

The data files live in ``concernmap/data`` and carry a version header.
Alternative files can be supplied through :func:`load_lexicon` for projects
whose identifier vocabulary needs different tagging.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


def _read_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        lines.append(line.lower())
    return lines


def _load_data_file(name: str) -> list[str]:
    data = resources.files("concernmap").joinpath("data", name).read_text("utf-8")
    return _read_lines(data)


@dataclass(frozen=True)
class Lexicon:
    """Word classes used by the identifier tagger and the lemmatizer."""

    verbs: frozenset[str]
    prepositions: frozenset[str]
    adjectives: frozenset[str]
    irregular_plurals: dict[str, str] = field(default_factory=dict)
    invariant_nouns: frozenset[str] = frozenset()


def _parse_pairs(lines: list[str]) -> dict[str, str]:
    pairs = {}
    for line in lines:
        plural, _, singular = line.partition(" ")
        if plural and singular:
            pairs[plural] = singular.strip()
    return pairs


@functools.lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    """The bundled lexicon, loaded once per process."""
    return Lexicon(
        verbs=frozenset(_load_data_file("verbs.txt")),
        prepositions=frozenset(_load_data_file("prepositions.txt")),
        adjectives=frozenset(_load_data_file("adjectives.txt")),
        irregular_plurals=_parse_pairs(_load_data_file("plural_irregular.txt")),
        invariant_nouns=frozenset(_load_data_file("plural_invariant.txt")),
    )


def load_lexicon(
    verbs_path: str | Path | None = None,
    prepositions_path: str | Path | None = None,
    adjectives_path: str | Path | None = None,
    irregular_path: str | Path | None = None,
    invariant_path: str | Path | None = None,
) -> Lexicon:
    """Build a lexicon, overriding any of the bundled data files."""
    base = default_lexicon()

    def words(path: str | Path | None, fallback: frozenset[str]) -> frozenset[str]:
        if path is None:
            return fallback
        return frozenset(_read_lines(Path(path).read_text("utf-8")))

    irregular = base.irregular_plurals
    if irregular_path is not None:
        irregular = _parse_pairs(_read_lines(Path(irregular_path).read_text("utf-8")))
    return Lexicon(
        verbs=words(verbs_path, base.verbs),
        prepositions=words(prepositions_path, base.prepositions),
        adjectives=words(adjectives_path, base.adjectives),
        irregular_plurals=irregular,
        invariant_nouns=words(invariant_path, base.invariant_nouns),
    )
