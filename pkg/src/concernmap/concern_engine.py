"""Cluster retrieved term records into concerns and rank them for an issue.

Large term sets are pre-clustered with size-capped average-linkage
agglomeration over a hybrid similarity (three embedding cosines plus a call
bonus, averaged). Each capped subset is clustered into concerns by the LLM;
concerns are then filtered by embedding similarity to the issue title and
reranked by the LLM.

Group sums use ``math.fsum`` so cross-group averages are independent of
summation order; a brute-force oracle recomputing them from scratch produces
bit-identical merge sequences.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import prompts
from .issue_retrieval import Issue, TermSet
from .llm_gateway import TIER_LIGHT, TIER_STRONG
from .repo_model import CallEdgeSet, has_call_relationship
from .term_explain import TermRecord

logger = logging.getLogger(__name__)

DEFAULT_PRECLUSTER_LIMIT = 100
DEFAULT_SELECT_K = 50
DEFAULT_TOP_N = 10

STAGE_SELECTED = "selected"
STAGE_RERANKED = "reranked"


@dataclass(frozen=True)
class SimilarityScore:
    name_sim: float
    def_sim: float
    func_sim: float
    call_bonus: int

    @property
    def total(self) -> float:
        return (self.name_sim + self.def_sim + self.func_sim + self.call_bonus) / 4.0


@dataclass(frozen=True)
class RelatedCode:
    code_location: str
    reference_code: str


@dataclass(frozen=True)
class Concern:
    related_term: str
    concern_summary: str
    related_code: tuple[RelatedCode, ...]
    source_records: tuple[int, ...]  # provenance; not exported


@dataclass(frozen=True)
class RankedConcern:
    concern: Concern
    stage: str  # STAGE_SELECTED or STAGE_RERANKED
    rank: int


@dataclass
class RankedConcerns:
    issue_id: str
    entries: list[RankedConcern] = field(default_factory=list)
    fallback: bool = False


def _clamp01(values: np.ndarray) -> np.ndarray:
    return np.clip(values, 0.0, 1.0)


def _facet_texts(records: list[TermRecord]) -> tuple[list[str], list[str], list[str]]:
    names, defs, funcs = [], [], []
    for record in records:
        names.append(record.explanation.expanded_name or " ")
        defs.append(record.explanation.definition or " ")
        funcs.append(record.explanation.functionality or " ")
    return names, defs, funcs


def _require_non_degraded(records: list[TermRecord]) -> None:
    for record in records:
        if record.degraded:
            raise ValueError(
                f"degraded record for {record.term.lemma!r} in "
                f"{record.term.function_id} cannot be clustered"
            )


def _facet_cosine(text_a: str, text_b: str, vec_a: np.ndarray, vec_b: np.ndarray) -> float:
    # Identical texts have cosine 1 by definition; snapping avoids the
    # float-rounding drift of a unit vector's self dot product.
    if text_a == text_b:
        return 1.0
    return float(np.clip(vec_a @ vec_b, 0.0, 1.0))


def pairwise_similarity(a: TermRecord, b: TermRecord, edges: CallEdgeSet, gateway) -> SimilarityScore:
    """Hybrid similarity between two records.

    The three facet similarities are cosines of the expanded-name, definition
    and functionality embeddings, clamped to [0, 1]; the call bonus is 1 when
    the containing functions have a call relationship in either direction.
    """
    _require_non_degraded([a, b])
    names, defs, funcs = _facet_texts([a, b])
    vectors = gateway.embed(names + defs + funcs)
    sims = [
        _facet_cosine(texts[0], texts[1], vectors[i], vectors[i + 1])
        for texts, i in ((names, 0), (defs, 2), (funcs, 4))
    ]
    bonus = int(has_call_relationship(edges, a.term.function_id, b.term.function_id))
    return SimilarityScore(name_sim=sims[0], def_sim=sims[1], func_sim=sims[2], call_bonus=bonus)


def similarity_matrix(records: list[TermRecord], edges: CallEdgeSet, gateway) -> np.ndarray:
    """All-pairs total similarity; embeddings computed once per record per facet."""
    _require_non_degraded(records)
    names, defs, funcs = _facet_texts(records)
    n = len(records)
    total = np.zeros((n, n))
    for texts in (names, defs, funcs):
        vectors = gateway.embed(texts)
        cos = _clamp01(vectors @ vectors.T)
        codes: dict[str, int] = {}
        ids = np.array([codes.setdefault(t, len(codes)) for t in texts])
        cos[np.equal.outer(ids, ids)] = 1.0
        total += cos
    bonus = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            if has_call_relationship(edges, records[i].term.function_id, records[j].term.function_id):
                bonus[i, j] = bonus[j, i] = 1.0
    return (total + bonus) / 4.0


@dataclass
class ClusterTree:
    """Agglomeration result: merge log plus parent->children structure."""

    root: tuple[int, ...]
    children: dict[tuple[int, ...], tuple[tuple[int, ...], tuple[int, ...]]]
    merges: list[tuple[tuple[int, ...], tuple[int, ...]]]


def agglomerate(sim: np.ndarray) -> ClusterTree:
    """Average-linkage agglomeration over a similarity matrix.

    Group similarity is the unweighted mean of cross-group pair similarities,
    summed with math.fsum so the value does not depend on summation order.
    Ties merge the pair whose combined sorted index tuple is smallest, so the
    sequence is fully deterministic. Tie-break tuples are only materialized
    on exact score ties; cross sums are cached per group-id pair.
    """
    n = sim.shape[0]
    members: dict[int, tuple[int, ...]] = {i: (i,) for i in range(n)}
    active: list[int] = list(range(n))
    next_gid = n
    children: dict[tuple[int, ...], tuple[tuple[int, ...], tuple[int, ...]]] = {}
    merges: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    sums: dict[tuple[int, int], float] = {}

    def cross_sum(ga: int, gb: int) -> float:
        key = (ga, gb) if ga < gb else (gb, ga)
        cached = sums.get(key)
        if cached is None:
            a, b = members[ga], members[gb]
            cached = math.fsum(sim[i, j] for i in a for j in b)
            sums[key] = cached
        return cached

    while len(active) > 1:
        best_avg = -math.inf
        best_pair: tuple[int, int] | None = None
        best_union: tuple[int, ...] | None = None
        for x in range(len(active)):
            for y in range(x + 1, len(active)):
                ga, gb = active[x], active[y]
                a, b = members[ga], members[gb]
                avg = cross_sum(ga, gb) / (len(a) * len(b))
                if avg > best_avg:
                    best_avg, best_pair, best_union = avg, (ga, gb), None
                elif avg == best_avg:
                    union = tuple(sorted(a + b))
                    if best_union is None:
                        pa, pb = best_pair
                        best_union = tuple(sorted(members[pa] + members[pb]))
                    if union < best_union:
                        best_pair, best_union = (ga, gb), union
        ga, gb = best_pair
        a, b = members[ga], members[gb]
        merged = tuple(sorted(a + b))
        left, right = (a, b) if a <= b else (b, a)
        children[merged] = (left, right)
        merges.append((left, right))
        active = [g for g in active if g not in (ga, gb)]
        members[next_gid] = merged
        active.append(next_gid)
        next_gid += 1
    return ClusterTree(root=members[active[0]], children=children, merges=merges)


def capped_subtrees(tree: ClusterTree, limit: int) -> list[tuple[int, ...]]:
    """Top-down traversal emitting every maximal subtree with <= limit leaves."""
    subsets: list[tuple[int, ...]] = []

    def visit(node: tuple[int, ...]) -> None:
        if len(node) <= limit:
            subsets.append(node)
            return
        left, right = tree.children[node]
        visit(left)
        visit(right)

    visit(tree.root)
    return subsets


def pre_cluster(
    term_set: TermSet,
    limit: int = DEFAULT_PRECLUSTER_LIMIT,
    edges: CallEdgeSet | None = None,
    gateway=None,
) -> list[list[TermRecord]]:
    """Partition a term set into subsets no larger than ``limit``.

    Sets within the limit pass through whole; larger sets are agglomerated
    and split along the hierarchy.
    """
    records = term_set.records
    if not records:
        raise ValueError("term set must be nonempty")
    if len(records) <= limit:
        return [list(records)]
    sim = similarity_matrix(records, edges or CallEdgeSet(frozenset()), gateway)
    tree = agglomerate(sim)
    return [[records[i] for i in subset] for subset in capped_subtrees(tree, limit)]


def build_clustering_prompt(records: list[TermRecord]) -> str:
    blocks = []
    for i, record in enumerate(records, 1):
        blocks.append(
            f"[{i}] term: {record.term.lemma}\n"
            f"    function: {record.term.function_id}\n"
            f"    functionality: {record.explanation.functionality}"
        )
    return prompts.CLUSTERING_PROMPT.format(
        header=prompts.CLUSTERING_TASK_HEADER,
        concern_definition=prompts.CONCERN_DEFINITION,
        records="\n".join(blocks),
    )


_CLUSTER_TAG_RE = re.compile(r"^(CONCERN|SUMMARY|RECORDS):\s?(.*)$")
_INT_RE = re.compile(r"\d+")


def parse_clustering_response(text: str) -> list[tuple[str, str, list[int]]]:
    """Parse CONCERN/SUMMARY/RECORDS blocks into (term, summary, indices)."""
    blocks: list[dict[str, list[str]]] = []
    current_field: list[str] | None = None
    for line in text.splitlines():
        match = _CLUSTER_TAG_RE.match(line)
        if match:
            tag, rest = match.group(1), match.group(2)
            if tag == "CONCERN":
                blocks.append({})
            if not blocks:
                continue
            current_field = [rest]
            blocks[-1][tag] = current_field
        elif current_field is not None:
            current_field.append(line)
    parsed = []
    for block in blocks:
        term = "\n".join(block.get("CONCERN", [""])).strip()
        summary = "\n".join(block.get("SUMMARY", [""])).strip()
        indices_text = "\n".join(block.get("RECORDS", [""]))
        indices = [int(m) for m in _INT_RE.findall(indices_text)]
        parsed.append((term, summary, indices))
    return parsed


def _concern_from_citation(
    term: str, summary: str, indices: list[int], records: list[TermRecord]
) -> Concern | None:
    """Reconstruct a concern from cited record indices, never from LLM text.

    Concerns citing any unknown index are dropped (anti-hallucination); the
    related code is rebuilt from the cited records' qualified ids and
    reference snippets.
    """
    if not indices:
        logger.warning("dropping concern %r: cites no records", term)
        return None
    deduped: list[int] = []
    for index in indices:
        if index not in deduped:
            deduped.append(index)
    if any(not 1 <= index <= len(records) for index in deduped):
        bad = [i for i in deduped if not 1 <= i <= len(records)]
        logger.warning("dropping concern %r: cites unknown record indices %s", term, bad)
        return None
    related = tuple(
        RelatedCode(
            code_location=records[i - 1].term.function_id,
            reference_code="\n".join(records[i - 1].explanation.reference_snippets),
        )
        for i in deduped
    )
    return Concern(
        related_term=term,
        concern_summary=summary,
        related_code=related,
        source_records=tuple(deduped),
    )


def cluster_concerns(records: list[TermRecord], gateway) -> list[Concern]:
    """LLM concern clustering for one pre-clustered subset."""
    if not records:
        return []
    _require_non_degraded(records)
    prompt = build_clustering_prompt(records)
    response = gateway.chat(prompt, tier=TIER_STRONG)
    parsed = parse_clustering_response(response)
    if not parsed:
        logger.warning("unparseable clustering response; retrying once")
        repair = (
            f"{prompt}\n\nYour previous response could not be parsed. Respond "
            "again using only CONCERN/SUMMARY/RECORDS blocks."
        )
        parsed = parse_clustering_response(gateway.chat(repair, tier=TIER_STRONG))
        if not parsed:
            logger.warning("clustering failed for a subset of %d records", len(records))
            return []
    concerns = []
    for term, summary, indices in parsed:
        concern = _concern_from_citation(term, summary, indices, records)
        if concern is not None:
            concerns.append(concern)
    return concerns


def select_top_concerns(
    issue: Issue,
    concerns: list[Concern],
    k: int = DEFAULT_SELECT_K,
    gateway=None,
) -> list[Concern]:
    """Embedding pre-filter: top-k concerns by title/summary cosine.

    Ties keep the input order; with k or fewer concerns everything passes.
    """
    if not concerns:
        return []
    vectors = gateway.embed([issue.title] + [c.concern_summary or " " for c in concerns])
    scores = vectors[1:] @ vectors[0]
    order = np.argsort(-scores, kind="stable")[:k]
    return [concerns[i] for i in order]


def build_rerank_prompt(issue: Issue, candidates: list[Concern]) -> str:
    blocks = []
    for i, concern in enumerate(candidates, 1):
        locations = "; ".join(rc.code_location for rc in concern.related_code)
        blocks.append(
            f"[{i}] related_term: {concern.related_term}\n"
            f"    summary: {concern.concern_summary}\n"
            f"    locations: {locations}"
        )
    return prompts.RERANK_PROMPT.format(
        header=prompts.RERANK_TASK_HEADER,
        title=issue.title,
        body=issue.body or "(no body)",
        candidates="\n".join(blocks),
    )


def parse_rerank_response(text: str, candidate_count: int) -> list[int]:
    """Candidate ordering from the RANKING line (or any integers, failing that)."""
    ranking_lines = [line for line in text.splitlines() if "RANKING" in line.upper()]
    source = ranking_lines[0] if ranking_lines else text
    order: list[int] = []
    for match in _INT_RE.findall(source):
        index = int(match)
        if 1 <= index <= candidate_count and index not in order:
            order.append(index)
    return order


def rerank_concerns(
    issue: Issue,
    candidates: list[Concern],
    n: int = DEFAULT_TOP_N,
    gateway=None,
) -> RankedConcerns:
    """LLM reranking of selected candidates; top-n retained.

    Candidates the response does not mention are appended in selection order
    after the ranked ones. An unparseable response (after one repair retry)
    falls back to the selection order, flagged.
    """
    ranked = RankedConcerns(issue_id=issue.id)
    if not candidates:
        return ranked
    prompt = build_rerank_prompt(issue, candidates)
    response = gateway.chat(prompt, tier=TIER_LIGHT)
    order = parse_rerank_response(response, len(candidates))
    if not order:
        logger.warning("unparseable ranking response; retrying once")
        repair = (
            f"{prompt}\n\nYour previous response contained no candidate "
            "indices. Respond with a single RANKING line."
        )
        order = parse_rerank_response(gateway.chat(repair, tier=TIER_LIGHT), len(candidates))
    if not order:
        logger.warning("ranking failed; falling back to selection order")
        ranked.fallback = True
        for rank, concern in enumerate(candidates[:n], 1):
            ranked.entries.append(RankedConcern(concern=concern, stage=STAGE_SELECTED, rank=rank))
        return ranked
    stages = [(index, STAGE_RERANKED) for index in order]
    stages.extend(
        (index, STAGE_SELECTED)
        for index in range(1, len(candidates) + 1)
        if index not in order
    )
    for rank, (index, stage) in enumerate(stages[:n], 1):
        ranked.entries.append(RankedConcern(concern=candidates[index - 1], stage=stage, rank=rank))
    return ranked


def run_concern_pipeline(
    issue: Issue,
    kb,
    gateway,
    limit: int = DEFAULT_PRECLUSTER_LIMIT,
    select_k: int = DEFAULT_SELECT_K,
    top_n: int = DEFAULT_TOP_N,
) -> RankedConcerns:
    """The online stage: retrieval, pre-clustering, clustering, ranking."""
    from .issue_retrieval import extract_keywords, match_terms

    keywords = extract_keywords(issue, gateway)
    if not keywords:
        logger.warning("no keywords extracted from issue %s", issue.id)
        return RankedConcerns(issue_id=issue.id)
    term_sets = match_terms(keywords, kb)
    concerns: list[Concern] = []
    for term_set in term_sets:
        live = [r for r in term_set.records if not r.degraded]
        if not live:
            continue
        filtered = TermSet(keyword=term_set.keyword, records=live)
        for subset in pre_cluster(filtered, limit=limit, edges=kb.call_edges, gateway=gateway):
            concerns.extend(cluster_concerns(subset, gateway))
    if not concerns:
        logger.warning("no concerns produced for issue %s", issue.id)
        return RankedConcerns(issue_id=issue.id)
    candidates = select_top_concerns(issue, concerns, k=select_k, gateway=gateway)
    return rerank_concerns(issue, candidates, n=top_n, gateway=gateway)
