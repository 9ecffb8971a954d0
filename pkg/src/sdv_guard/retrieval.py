"""Two-stage retrieval over catalog entries, plus token-budgeted chunking.

Stage 1 ranks entries lexically with BM25 (k1 = 1.2, b = 0.75; idf(t) =
ln(1 + (N - df + 0.5) / (df + 0.5)); the score sums over distinct query
terms). Stage 2 reranks the candidate pool by the fraction of distinct query
tokens present in the entry text, breaking ties by stage-1 score and then by
key. Both stages can be swapped for HTTP-backed scorers (an embedding
endpoint for stage 1, a cross-encoder endpoint for stage 2) without changing
the caller-visible contract.

The default pipeline is entirely deterministic: same entries + same query
give the same ranking, byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .catalog import CatalogEntry
from .errors import ChunkingError, ConfigurationError, RetrievalError
from .util import token_estimate, tokenize

BM25_K1 = 1.2
BM25_B = 0.75

DEFAULT_TOP_K = 20
DEFAULT_TOKEN_BUDGET = 4096

# stage-1 candidate pool size, as a multiple of the requested k
POOL_FACTOR = 4


@dataclass(frozen=True)
class RankedEntry:
    entry: CatalogEntry
    stage1_score: float
    stage2_score: float = 0.0

    @property
    def key(self) -> str:
        return self.entry.key


@dataclass(frozen=True)
class ShortList:
    query: str
    ranked: tuple[RankedEntry, ...]
    k: int


@dataclass(frozen=True)
class Chunk:
    entries: tuple[CatalogEntry, ...]
    token_estimate: int

    def text(self) -> str:
        return "\n".join(entry.text for entry in self.entries)


class RetrievalIndex:
    """Inverted index over catalog entries; immutable once built."""

    def __init__(self, entries: tuple[CatalogEntry, ...]):
        self.entries = entries
        self.doc_tokens = tuple(tuple(tokenize(e.text)) for e in entries)
        self.doc_lengths = tuple(len(toks) for toks in self.doc_tokens)
        total = sum(self.doc_lengths)
        self.avg_doc_length = total / len(entries) if entries else 0.0
        postings: dict[str, dict[int, int]] = {}
        for pos, toks in enumerate(self.doc_tokens):
            for tok in toks:
                postings.setdefault(tok, {})
                postings[tok][pos] = postings[tok].get(pos, 0) + 1
        self.postings = postings

    def __len__(self) -> int:
        return len(self.entries)


def build_index(entries) -> RetrievalIndex:
    entries = tuple(entries)
    if not entries:
        raise ConfigurationError("cannot build a retrieval index over zero entries")
    seen: set[str] = set()
    for entry in entries:
        if entry.key in seen:
            raise ConfigurationError(f"duplicate entry key '{entry.key}' in index")
        seen.add(entry.key)
    return RetrievalIndex(entries)


def bm25_score(index: RetrievalIndex, query_tokens: list[str], position: int) -> float:
    """BM25 score of one entry for the given query tokens (distinct terms)."""
    n_docs = len(index.entries)
    dl = index.doc_lengths[position]
    norm = BM25_K1 * (1 - BM25_B + BM25_B * dl / index.avg_doc_length)
    score = 0.0
    for term in sorted(set(query_tokens)):
        posting = index.postings.get(term)
        if not posting:
            continue
        tf = posting.get(position, 0)
        if tf == 0:
            continue
        df = len(posting)
        idf = math.log(1 + (n_docs - df + 0.5) / (df + 0.5))
        score += idf * tf * (BM25_K1 + 1) / (tf + norm)
    return score


def score_stage1(index: RetrievalIndex, query: str, scorer=None) -> list[RankedEntry]:
    """Rank every entry for the query; empty-token queries rank nothing."""
    query_tokens = tokenize(query)
    if not query_tokens:
        return []
    if scorer is not None:
        scores = scorer.score(query, index.entries)
        if len(scores) != len(index.entries):
            raise RetrievalError(
                f"scorer returned {len(scores)} scores for {len(index.entries)} entries"
            )
    else:
        scores = [bm25_score(index, query_tokens, pos) for pos in range(len(index.entries))]
    ranked = [
        RankedEntry(entry=index.entries[pos], stage1_score=scores[pos])
        for pos in range(len(index.entries))
    ]
    ranked.sort(key=lambda r: (-r.stage1_score, r.key))
    return ranked


def rerank(candidates: list[RankedEntry], query: str, scorer=None) -> list[RankedEntry]:
    """Stage 2: score candidates by query-token overlap (or a cross-encoder endpoint).

    The default stage-2 score is |query tokens present in the entry| / |query
    tokens|, over distinct tokens. Ordering: stage-2 score descending, then
    stage-1 score descending, then key ascending.
    """
    query_tokens = set(tokenize(query))
    if scorer is not None:
        scores = scorer.score_pairs(query, [c.entry for c in candidates])
        if len(scores) != len(candidates):
            raise RetrievalError(
                f"scorer returned {len(scores)} scores for {len(candidates)} candidates"
            )
        rescored = [
            RankedEntry(entry=c.entry, stage1_score=c.stage1_score, stage2_score=s)
            for c, s in zip(candidates, scores)
        ]
    else:
        rescored = []
        for cand in candidates:
            if query_tokens:
                present = query_tokens.intersection(tokenize(cand.entry.text))
                overlap = len(present) / len(query_tokens)
            else:
                overlap = 0.0
            rescored.append(RankedEntry(
                entry=cand.entry, stage1_score=cand.stage1_score, stage2_score=overlap,
            ))
    rescored.sort(key=lambda r: (-r.stage2_score, -r.stage1_score, r.key))
    return rescored


def retrieve_top_k(index: RetrievalIndex, query: str, k: int = DEFAULT_TOP_K,
                   stage1_scorer=None, rerank_scorer=None) -> ShortList:
    """Stage-1 pool of min(4k, |entries|) candidates, reranked, truncated to k."""
    if k < 1:
        raise ConfigurationError(f"top-k must be at least 1, got {k}")
    ranked = score_stage1(index, query, scorer=stage1_scorer)
    pool = ranked[: min(POOL_FACTOR * k, len(index.entries))]
    reranked = rerank(pool, query, scorer=rerank_scorer)
    return ShortList(query=query, ranked=tuple(reranked[:k]), k=k)


def chunk_entries(shortlist: ShortList, token_budget: int = DEFAULT_TOKEN_BUDGET) -> list[Chunk]:
    """Greedily pack shortlist entries, in rank order, into budget-bounded chunks.

    Each entry's cost is token_estimate(entry.text); a chunk's estimate is the
    sum of its entries' estimates and never exceeds the budget. An entry that
    alone exceeds the budget is an error.
    """
    if token_budget < 1:
        raise ConfigurationError(f"token budget must be at least 1, got {token_budget}")
    chunks: list[Chunk] = []
    current: list[CatalogEntry] = []
    current_cost = 0
    for ranked in shortlist.ranked:
        entry = ranked.entry
        cost = token_estimate(entry.text)
        if cost > token_budget:
            raise ChunkingError(
                f"entry '{entry.key}' needs {cost} tokens, over the budget of {token_budget}"
            )
        if current and current_cost + cost > token_budget:
            chunks.append(Chunk(entries=tuple(current), token_estimate=current_cost))
            current = []
            current_cost = 0
        current.append(entry)
        current_cost += cost
    if current:
        chunks.append(Chunk(entries=tuple(current), token_estimate=current_cost))
    return chunks


# ---------------------------------------------------------------------------
# optional HTTP-backed scorers


class EmbeddingEndpointScorer:
    """Stage-1 scorer backed by an embedding endpoint.

    Contract: POST {"texts": [query, entry_text...]} -> {"vectors": [[...], ...]},
    one vector per text, query first. The score is the cosine similarity
    between the query vector and each entry vector.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, session=None):
        import requests

        self.base_url = base_url
        self.timeout = timeout
        self._session = session or requests

    def score(self, query: str, entries) -> list[float]:
        payload = {"texts": [query] + [e.text for e in entries]}
        vectors = _post_json(self._session, self.base_url, payload, self.timeout, "vectors")
        if len(vectors) != len(entries) + 1:
            raise RetrievalError(
                f"embedding endpoint returned {len(vectors)} vectors for "
                f"{len(entries) + 1} texts"
            )
        qvec = vectors[0]
        return [_cosine(qvec, vec) for vec in vectors[1:]]


class CrossEncoderEndpointScorer:
    """Stage-2 scorer backed by a cross-encoder endpoint.

    Contract: POST {"pairs": [[query, entry_text], ...]} -> {"scores": [...]},
    one relevance score per pair, higher is more relevant.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, session=None):
        import requests

        self.base_url = base_url
        self.timeout = timeout
        self._session = session or requests

    def score_pairs(self, query: str, entries) -> list[float]:
        payload = {"pairs": [[query, e.text] for e in entries]}
        scores = _post_json(self._session, self.base_url, payload, self.timeout, "scores")
        return [float(s) for s in scores]


def _post_json(session, url: str, payload: dict, timeout: float, field: str):
    import requests

    try:
        response = session.post(url, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise RetrievalError(f"scoring endpoint unreachable: {exc}") from exc
    if response.status_code // 100 != 2:
        raise RetrievalError(
            f"scoring endpoint returned status {response.status_code}",
            status=response.status_code,
        )
    try:
        body = response.json()
    except ValueError as exc:
        raise RetrievalError("scoring endpoint returned non-JSON body") from exc
    if field not in body or not isinstance(body[field], list):
        raise RetrievalError(f"scoring endpoint response missing '{field}' array")
    return body[field]


def _cosine(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return dot / (norm_a * norm_b)
