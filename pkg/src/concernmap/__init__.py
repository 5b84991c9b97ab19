"""Repository concept mining and concern-ranked prompt enhancement.

The pipeline has an offline stage (parse a repository into function units,
mine noun terms from identifiers, enrich them with LLM explanations, persist
everything as a knowledge base) and an online stage (retrieve issue-specific
terms, cluster them into concerns, rank the concerns, and render them into
prompt enhancements for downstream localization tools), plus an evaluation
harness for file- and function-level localization accuracy.
"""

__version__ = "0.1.0"
