"""Query-driven evidence retrieval over segmented review sentences.

Two strategies: Okapi BM25 over the normalized token stream (see
:mod:`proscons.textnorm`) and dense retrieval via cosine similarity of
provider embeddings over the raw sentences. Both return at most ``top_k``
scored sentences above the score floor, descending by score with ties
broken by corpus position, and both always surface the original
(unnormalized) sentence text.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Sentence, SentenceCorpus
from .textnorm import preprocess_for_bm25

__all__ = [
    "RetrievalError",
    "DegenerateQueryError",
    "RetrievalConfig",
    "EvidenceItem",
    "EvidenceSet",
    "Bm25Index",
    "build_bm25_index",
    "retrieve_bm25",
    "retrieve_dense",
    "cosine_similarity",
]

INDEX_FORMAT_VERSION = 1


class RetrievalError(RuntimeError):
    pass


class DegenerateQueryError(RetrievalError):
    """Query normalizes to nothing; distinct from a query with no matches."""


@dataclass
class RetrievalConfig:
    method: str = "bm25"
    top_k: int = 10
    bm25_k1: float = 1.5
    bm25_b: float = 0.75
    score_floor: float = 0.0  # exclusive: kept items must score strictly above
    protected_tokens: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in ("bm25", "dense"):
            raise ValueError(f"unknown retrieval method: {self.method!r}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError("bm25_b must be in [0, 1]")


@dataclass(frozen=True)
class EvidenceItem:
    text: str  # original sentence, never the normalized form
    score: float
    review_id: int
    sentence_index: int

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "score": self.score,
            "review_id": self.review_id,
            "sentence_index": self.sentence_index,
        }


@dataclass(frozen=True)
class EvidenceSet:
    query: str
    items: tuple[EvidenceItem, ...]

    def __len__(self) -> int:
        return len(self.items)

    def texts(self) -> list[str]:
        return [item.text for item in self.items]


class Bm25Index:
    """Okapi BM25 over preprocessed sentences.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which is strictly
    positive, so any sentence sharing a query term scores above 0. The
    term contribution is idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl/avgdl)),
    summed over query tokens with multiplicity.
    """

    def __init__(self, sentences: tuple[Sentence, ...], k1: float, b: float,
                 protected: dict[str, str] | None = None):
        if not sentences:
            raise RetrievalError("cannot build a BM25 index over an empty corpus")
        self.sentences = sentences
        self.k1 = k1
        self.b = b
        self.protected = dict(protected or {})
        self.doc_tokens = [preprocess_for_bm25(s.text, self.protected).split() for s in sentences]
        self.doc_len = [len(toks) for toks in self.doc_tokens]
        self.doc_freqs = [Counter(toks) for toks in self.doc_tokens]
        self.n_docs = len(sentences)
        # all-empty normalized docs leave no terms to match; any positive
        # value keeps the length norm well-defined
        self.avgdl = sum(self.doc_len) / self.n_docs or 1.0
        df: Counter[str] = Counter()
        for toks in self.doc_tokens:
            df.update(set(toks))
        self.idf = {
            term: math.log(1.0 + (self.n_docs - count + 0.5) / (count + 0.5))
            for term, count in df.items()
        }

    def score(self, query_tokens: list[str], doc_index: int) -> float:
        freqs = self.doc_freqs[doc_index]
        dl = self.doc_len[doc_index]
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl)
        total = 0.0
        for term in query_tokens:
            idf = self.idf.get(term)
            if idf is None:
                continue
            tf = freqs.get(term, 0)
            if tf == 0:
                continue
            total += idf * tf * (self.k1 + 1.0) / (tf + norm)
        return total

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "k1": self.k1,
            "b": self.b,
            "protected": self.protected,
            "sentences": [
                {"text": s.text, "review_id": s.review_id, "index": s.index}
                for s in self.sentences
            ],
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise RetrievalError(f"unsupported index format version: {version!r}")
        sentences = tuple(
            Sentence(text=s["text"], review_id=s["review_id"], index=s["index"])
            for s in payload["sentences"]
        )
        return cls(sentences, k1=payload["k1"], b=payload["b"], protected=payload["protected"])


def build_bm25_index(corpus: SentenceCorpus, config: RetrievalConfig) -> Bm25Index:
    return Bm25Index(
        corpus.sentences,
        k1=config.bm25_k1,
        b=config.bm25_b,
        protected=config.protected_tokens,
    )


def _take_top(scored: list[tuple[int, float]], sentences: tuple[Sentence, ...],
              config: RetrievalConfig, query: str) -> EvidenceSet:
    kept = [(i, s) for i, s in scored if s > config.score_floor]
    kept.sort(key=lambda pair: (-pair[1], pair[0]))
    items = tuple(
        EvidenceItem(
            text=sentences[i].text,
            score=score,
            review_id=sentences[i].review_id,
            sentence_index=sentences[i].index,
        )
        for i, score in kept[: config.top_k]
    )
    return EvidenceSet(query=query, items=items)


def retrieve_bm25(index: Bm25Index, query: str, config: RetrievalConfig) -> EvidenceSet:
    """Rank indexed sentences for a query; the query goes through the same
    normalization pipeline as the index."""
    if not query.strip():
        raise DegenerateQueryError("query is empty")
    tokens = preprocess_for_bm25(query, index.protected).split()
    if not tokens:
        raise DegenerateQueryError(f"query normalizes to nothing: {query!r}")
    scored = [(i, index.score(tokens, i)) for i in range(index.n_docs)]
    return _take_top(scored, index.sentences, config, query)


def cosine_similarity(u: list[float], v: list[float]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def retrieve_dense(corpus: SentenceCorpus, query: str, config: RetrievalConfig,
                   embedder) -> EvidenceSet:
    """Cosine ranking of raw sentences against the query embedding.

    No text normalization is applied on this path. Zero-norm embeddings
    score 0; embedding provider failures propagate with query context.
    """
    if not query.strip():
        raise DegenerateQueryError("query is empty")
    if not corpus.sentences:
        raise RetrievalError("cannot retrieve from an empty corpus")
    try:
        vectors = embedder.embed([query] + corpus.texts())
    except Exception as exc:
        raise RetrievalError(f"embedding provider failed for query {query!r}: {exc}") from exc
    query_vec, sent_vecs = vectors[0], vectors[1:]
    scored = [(i, cosine_similarity(query_vec, vec)) for i, vec in enumerate(sent_vecs)]
    return _take_top(scored, corpus.sentences, config, query)
