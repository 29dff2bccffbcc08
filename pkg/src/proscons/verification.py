"""Reference-free factual-alignment metrics over (evidence, highlight) pairs.

Every evidence sentence and every generated highlight is decomposed into
aspect/opinion/sentiment triplets; three metrics compare the two sides:

- aspect relevance: does the most frequent evidence aspect appear among
  the highlight's aspects (1/0);
- sentiment factuality: does the highlight's sentiment match the dominant
  non-neutral evidence sentiment for that aspect (1/0);
- opinion faithfulness: expected similarity between the highlight opinion
  and the evidence opinions sharing its aspect and sentiment, with exact
  (normalized) matches scoring 1.

Each metric can also be skipped (``None``) when its inputs are undefined,
e.g. no triplets on one side or a sentiment tie; aggregates average only
the non-skipped highlights and report ``None`` when nothing counted.
"""

from __future__ import annotations

import hashlib
import threading
from collections import Counter
from dataclasses import dataclass, field

from .providers import AosTriplet, normalize_term
from .retrieval import cosine_similarity
from .synthesizer import Summary

__all__ = [
    "VerificationError",
    "VerificationConfig",
    "TripletBundle",
    "HighlightVerification",
    "VerificationAggregate",
    "VerificationReport",
    "TripletCache",
    "dominant_aspect",
    "aspect_relevance",
    "dominant_sentiment",
    "sentiment_factuality",
    "opinion_faithfulness",
    "verify_summary",
]

SKIP_NO_EVIDENCE_TRIPLETS = "no evidence triplets"
SKIP_NO_HIGHLIGHT_TRIPLETS = "no highlight triplets"
SKIP_NO_NONNEUTRAL_SENTIMENT = "no non-neutral evidence sentiment"
SKIP_SENTIMENT_TIE = "evidence sentiment tie"
SKIP_NO_MATCHING_OPINIONS = "no aspect/sentiment-matched evidence opinions"


class VerificationError(RuntimeError):
    pass


@dataclass
class VerificationConfig:
    # "matched": judge the highlight triplet whose aspect equals the
    # dominant evidence aspect (falling back to the first triplet);
    # "any": accept a sentiment match from any highlight triplet.
    sf_scope: str = "matched"

    def __post_init__(self) -> None:
        if self.sf_scope not in ("matched", "any"):
            raise ValueError(f"sf_scope must be 'matched' or 'any', got {self.sf_scope!r}")


@dataclass(frozen=True)
class TripletBundle:
    """Triplets for one highlight: evidence side in retrieval rank order
    (each with the index of its source evidence sentence) and the
    highlight side."""

    evidence: tuple[tuple[int, AosTriplet], ...]
    highlight: tuple[AosTriplet, ...]

    @property
    def evidence_triplets(self) -> list[AosTriplet]:
        return [t for _, t in self.evidence]


def _norm_aspect(triplet: AosTriplet) -> str:
    return _strip_articles(normalize_term(triplet.aspect))


def _norm_opinion(triplet: AosTriplet) -> str:
    return _strip_articles(normalize_term(triplet.opinion))


def _strip_articles(term: str) -> str:
    tokens = term.split()
    while len(tokens) > 1 and tokens[0] in ("the", "a", "an"):
        tokens = tokens[1:]
    return " ".join(tokens) if tokens else term


def dominant_aspect(evidence_triplets: list[AosTriplet]) -> str | None:
    """Most frequent (normalized) evidence aspect; frequency ties resolve
    to the aspect occurring earliest in rank order. ``None`` when there
    are no triplets."""
    if not evidence_triplets:
        return None
    aspects = [_norm_aspect(t) for t in evidence_triplets]
    counts = Counter(aspects)
    best = max(counts.values())
    for aspect in aspects:
        if counts[aspect] == best:
            return aspect
    return None  # unreachable


def aspect_relevance(bundle: TripletBundle) -> int | None:
    """1 iff the dominant evidence aspect matches any highlight aspect."""
    star = dominant_aspect(bundle.evidence_triplets)
    if star is None or not bundle.highlight:
        return None
    highlight_aspects = {_norm_aspect(t) for t in bundle.highlight}
    return 1 if star in highlight_aspects else 0


def dominant_sentiment(evidence_triplets: list[AosTriplet], aspect: str) -> int | None:
    """Majority non-neutral sentiment among evidence triplets for an
    aspect; neutral entries are excluded, and a tie (or no non-neutral
    entries) is a skip."""
    target = _strip_articles(normalize_term(aspect))
    votes = Counter(
        t.sentiment for t in evidence_triplets
        if t.sentiment != 0 and _norm_aspect(t) == target
    )
    pos, neg = votes.get(1, 0), votes.get(-1, 0)
    if pos == neg:
        return None
    return 1 if pos > neg else -1


def _select_highlight_triplet(bundle: TripletBundle, star: str | None) -> AosTriplet | None:
    if not bundle.highlight:
        return None
    if star is not None:
        for triplet in bundle.highlight:
            if _norm_aspect(triplet) == star:
                return triplet
    return bundle.highlight[0]


def sentiment_factuality(bundle: TripletBundle,
                         config: VerificationConfig | None = None) -> int | None:
    config = config or VerificationConfig()
    star = dominant_aspect(bundle.evidence_triplets)
    if star is None or not bundle.highlight:
        return None
    s_star = dominant_sentiment(bundle.evidence_triplets, star)
    if s_star is None:
        return None
    if config.sf_scope == "any":
        return 1 if any(t.sentiment == s_star for t in bundle.highlight) else 0
    chosen = _select_highlight_triplet(bundle, star)
    assert chosen is not None
    return 1 if chosen.sentiment == s_star else 0


def opinion_faithfulness(bundle: TripletBundle, embedder,
                         config: VerificationConfig | None = None) -> float | None:
    """Expected similarity of the highlight opinion against evidence
    opinions sharing its aspect and sentiment.

    An exact normalized match short-circuits to 1.0; otherwise each cosine
    is clamped to [0, 1] and averaged in evidence order. An empty matched
    set is a skip."""
    star = dominant_aspect(bundle.evidence_triplets)
    chosen = _select_highlight_triplet(bundle, star)
    if chosen is None:
        return None
    aspect = _norm_aspect(chosen)
    opinion = _norm_opinion(chosen)
    matched = [
        _norm_opinion(t) for t in bundle.evidence_triplets
        if _norm_aspect(t) == aspect and t.sentiment == chosen.sentiment
    ]
    if not matched:
        return None
    if opinion in matched:
        return 1.0
    vectors = embedder.embed([opinion] + matched)
    target, rest = vectors[0], vectors[1:]
    total = 0.0
    for vec in rest:
        sim = cosine_similarity(target, vec)
        total += min(1.0, max(0.0, sim))
    return total / len(rest)


@dataclass(frozen=True)
class HighlightVerification:
    query: str
    polarity: str
    ar: int | None
    sf: int | None
    of: float | None
    skip_reasons: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "polarity": self.polarity,
            "ar": self.ar,
            "sf": self.sf,
            "of": self.of,
            "skip_reasons": dict(self.skip_reasons),
        }


@dataclass(frozen=True)
class VerificationAggregate:
    mean_ar: float | None
    mean_sf: float | None
    mean_of: float | None
    counted: dict[str, int]
    skipped: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "mean_ar": self.mean_ar,
            "mean_sf": self.mean_sf,
            "mean_of": self.mean_of,
            "counted": dict(self.counted),
            "skipped": dict(self.skipped),
        }


@dataclass(frozen=True)
class VerificationReport:
    entity_id: int
    rows: tuple[HighlightVerification, ...]
    aggregate: VerificationAggregate

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "rows": [r.to_dict() for r in self.rows],
            "aggregate": self.aggregate.to_dict(),
        }


class TripletCache:
    """Extraction cache keyed by sentence hash; single insertion per key."""

    def __init__(self, extractor):
        self.extractor = extractor
        self._cache: dict[str, list[AosTriplet]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(sentence: str) -> str:
        return hashlib.sha256(sentence.encode("utf-8")).hexdigest()

    def extract(self, sentence: str) -> list[AosTriplet]:
        key = self._key(sentence)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        triplets = self.extractor.extract(sentence)
        with self._lock:
            return self._cache.setdefault(key, triplets)

    def __len__(self) -> int:
        return len(self._cache)


def aggregate_rows(rows: list[HighlightVerification]) -> VerificationAggregate:
    """Mean of each metric over non-skipped rows; all-skipped metrics are
    reported as absent, never as 0."""
    counted = {"ar": 0, "sf": 0, "of": 0}
    skipped = {"ar": 0, "sf": 0, "of": 0}
    sums = {"ar": 0.0, "sf": 0.0, "of": 0.0}
    for row in rows:
        for metric, value in (("ar", row.ar), ("sf", row.sf), ("of", row.of)):
            if value is None:
                skipped[metric] += 1
            else:
                counted[metric] += 1
                sums[metric] += value
    def mean(metric: str) -> float | None:
        return sums[metric] / counted[metric] if counted[metric] else None
    return VerificationAggregate(
        mean_ar=mean("ar"), mean_sf=mean("sf"), mean_of=mean("of"),
        counted=counted, skipped=skipped,
    )


def _bundle_for(highlight_text: str, evidence_texts: list[str], cache: TripletCache) -> TripletBundle:
    evidence: list[tuple[int, AosTriplet]] = []
    for idx, sentence in enumerate(evidence_texts):
        for triplet in cache.extract(sentence):
            evidence.append((idx, triplet))
    highlight = tuple(cache.extract(highlight_text))
    return TripletBundle(evidence=tuple(evidence), highlight=highlight)


def _skip_reasons(bundle: TripletBundle, ar, sf, of) -> dict[str, str]:
    reasons: dict[str, str] = {}
    no_evidence = not bundle.evidence
    no_highlight = not bundle.highlight
    if ar is None:
        reasons["ar"] = SKIP_NO_EVIDENCE_TRIPLETS if no_evidence else SKIP_NO_HIGHLIGHT_TRIPLETS
    if sf is None:
        if no_evidence:
            reasons["sf"] = SKIP_NO_EVIDENCE_TRIPLETS
        elif no_highlight:
            reasons["sf"] = SKIP_NO_HIGHLIGHT_TRIPLETS
        else:
            star = dominant_aspect(bundle.evidence_triplets)
            votes = Counter(
                t.sentiment for t in bundle.evidence_triplets
                if t.sentiment != 0 and star is not None and _norm_aspect(t) == star
            )
            reasons["sf"] = SKIP_SENTIMENT_TIE if votes else SKIP_NO_NONNEUTRAL_SENTIMENT
    if of is None:
        if no_highlight:
            reasons["of"] = SKIP_NO_HIGHLIGHT_TRIPLETS
        else:
            reasons["of"] = SKIP_NO_MATCHING_OPINIONS
    return reasons


def verify_summary(summary: Summary, embedder, extractor,
                   config: VerificationConfig | None = None) -> VerificationReport:
    """Score every highlight in a summary against its own evidence.

    Triplet extraction runs exactly once per distinct sentence (cached);
    a highlight without provenance is an error naming the query.
    """
    config = config or VerificationConfig()
    cache = extractor if isinstance(extractor, TripletCache) else TripletCache(extractor)
    rows: list[HighlightVerification] = []
    for polarity, query, text in summary.highlights():
        items = summary.provenance.get(query)
        if items is None:
            raise VerificationError(
                f"entity {summary.entity_id}: no provenance for query {query!r}")
        bundle = _bundle_for(text, [item.text for item in items], cache)
        ar = aspect_relevance(bundle)
        sf = sentiment_factuality(bundle, config)
        of = opinion_faithfulness(bundle, embedder, config)
        rows.append(HighlightVerification(
            query=query, polarity=polarity, ar=ar, sf=sf, of=of,
            skip_reasons=_skip_reasons(bundle, ar, sf, of)))
    return VerificationReport(
        entity_id=summary.entity_id, rows=tuple(rows), aggregate=aggregate_rows(rows))
