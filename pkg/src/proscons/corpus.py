"""Data model, loading, and sentence segmentation for reviewed entities.

An entity pairs a set of expert pros/cons highlights, keyed by annotated
query strings, with its full collection of user reviews. Input records
are JSON: one object per entity, a list of objects, or a directory of
``*.json`` files.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

__all__ = [
    "CorpusError",
    "UserReview",
    "ExpertReview",
    "Entity",
    "Sentence",
    "SentenceCorpus",
    "AlignmentReport",
    "CorpusStats",
    "load_corpus",
    "save_corpus",
    "entity_to_dict",
    "split_sentences",
    "segment_sentences",
    "verify_query_alignment",
    "corpus_stats",
]


class CorpusError(ValueError):
    """Raised for unreadable input or an entity violating an invariant."""


@dataclass(frozen=True)
class UserReview:
    review_id: int
    text: str
    rating: int
    helpful_votes: int
    publication_date: dt.date
    user_reviews_posted: int
    user_cities_visited: int
    user_helpful_votes: int


@dataclass(frozen=True)
class ExpertReview:
    """Query-keyed highlight sentences; mapping order follows the file."""

    pros: dict[str, str]
    cons: dict[str, str]

    @property
    def queries(self) -> list[str]:
        return list(self.pros) + list(self.cons)


@dataclass(frozen=True)
class Entity:
    entity_id: int
    entity_name: str
    expert_review: ExpertReview
    user_reviews: tuple[UserReview, ...]


@dataclass(frozen=True)
class Sentence:
    """One review sentence with its provenance."""

    text: str
    review_id: int
    index: int  # position within the source review


@dataclass(frozen=True)
class SentenceCorpus:
    sentences: tuple[Sentence, ...]

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass(frozen=True)
class AlignmentReport:
    """Which annotated queries have at least one exact sentence match."""

    entity_id: int
    aligned: tuple[str, ...]
    unmatched: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "aligned": list(self.aligned),
            "unmatched": list(self.unmatched),
        }


@dataclass(frozen=True)
class CorpusStats:
    entity_count: int
    avg_reviews_per_entity: float
    avg_sentences_per_entity: float
    avg_words_per_entity: float
    avg_pros_per_entity: float
    avg_cons_per_entity: float
    total_queries: int
    unique_queries: int
    query_length_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "entity_count": self.entity_count,
            "avg_reviews_per_entity": self.avg_reviews_per_entity,
            "avg_sentences_per_entity": self.avg_sentences_per_entity,
            "avg_words_per_entity": self.avg_words_per_entity,
            "avg_pros_per_entity": self.avg_pros_per_entity,
            "avg_cons_per_entity": self.avg_cons_per_entity,
            "total_queries": self.total_queries,
            "unique_queries": self.unique_queries,
            "query_length_histogram": dict(self.query_length_histogram),
        }


_REVIEW_INT_FIELDS = (
    "review_id",
    "rating",
    "helpful_votes",
    "user_reviews_posted",
    "user_cities_visited",
    "user_helpful_votes",
)
_NON_NEGATIVE_FIELDS = (
    "helpful_votes",
    "user_reviews_posted",
    "user_cities_visited",
    "user_helpful_votes",
)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise CorpusError(f"{where}: missing required field '{key}'")
    return obj[key]


def _parse_review(obj: dict, where: str) -> UserReview:
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: review record must be an object")
    values = {}
    for key in _REVIEW_INT_FIELDS:
        raw = _require(obj, key, where)
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise CorpusError(f"{where}: field '{key}' must be an integer, got {raw!r}")
        values[key] = raw
    text = _require(obj, "text", where)
    if not isinstance(text, str):
        raise CorpusError(f"{where}: field 'text' must be a string")
    raw_date = _require(obj, "publication_date", where)
    try:
        pub_date = dt.date.fromisoformat(str(raw_date))
    except ValueError as exc:
        raise CorpusError(f"{where}: field 'publication_date' is not a valid YYYY-MM-DD date: {raw_date!r}") from exc
    if not 1 <= values["rating"] <= 5:
        raise CorpusError(f"{where}: field 'rating' must be in [1, 5], got {values['rating']}")
    for key in _NON_NEGATIVE_FIELDS:
        if values[key] < 0:
            raise CorpusError(f"{where}: field '{key}' must be non-negative, got {values[key]}")
    return UserReview(
        review_id=values["review_id"],
        text=text,
        rating=values["rating"],
        helpful_votes=values["helpful_votes"],
        publication_date=pub_date,
        user_reviews_posted=values["user_reviews_posted"],
        user_cities_visited=values["user_cities_visited"],
        user_helpful_votes=values["user_helpful_votes"],
    )


def _parse_section(obj: dict, name: str, where: str) -> dict[str, str]:
    section = obj.get(name, {})
    if not isinstance(section, dict):
        raise CorpusError(f"{where}: expert_review.{name} must be an object")
    out: dict[str, str] = {}
    for query, sentence in section.items():
        if not isinstance(sentence, str) or not sentence.strip():
            raise CorpusError(f"{where}: expert_review.{name}[{query!r}] must be a non-empty sentence")
        out[str(query)] = sentence
    return out


def _parse_entity(obj: dict, source: str) -> Entity:
    if not isinstance(obj, dict):
        raise CorpusError(f"{source}: entity record must be an object")
    entity_id = _require(obj, "entity_id", source)
    if not isinstance(entity_id, int) or isinstance(entity_id, bool):
        raise CorpusError(f"{source}: field 'entity_id' must be an integer")
    where = f"entity {entity_id}"
    name = _require(obj, "entity_name", where)
    if not isinstance(name, str) or not name.strip():
        raise CorpusError(f"{where}: field 'entity_name' must be a non-empty string")
    expert = _require(obj, "expert_review", where)
    if not isinstance(expert, dict):
        raise CorpusError(f"{where}: field 'expert_review' must be an object")
    pros = _parse_section(expert, "pros", where)
    cons = _parse_section(expert, "cons", where)
    overlap = sorted(set(pros) & set(cons))
    if overlap:
        raise CorpusError(f"{where}: queries present in both pros and cons: {overlap}")
    raw_reviews = _require(obj, "user_reviews", where)
    if not isinstance(raw_reviews, list) or not raw_reviews:
        raise CorpusError(f"{where}: field 'user_reviews' must be a non-empty list")
    reviews = tuple(
        _parse_review(rev, f"{where}: user review {i}") for i, rev in enumerate(raw_reviews)
    )
    return Entity(
        entity_id=entity_id,
        entity_name=name,
        expert_review=ExpertReview(pros=pros, cons=cons),
        user_reviews=reviews,
    )


def _read_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_corpus(path: str | Path) -> list[Entity]:
    """Load a file or directory of entity records, enforcing invariants.

    Unknown extra fields are ignored so the format can grow; ordering of
    entities, reviews, and expert queries follows the input.
    """
    root = Path(path)
    if root.is_dir():
        files = sorted(root.glob("*.json"))
        if not files:
            raise CorpusError(f"{root}: directory contains no .json files")
    elif root.is_file():
        files = [root]
    else:
        raise CorpusError(f"{root}: no such file or directory")

    entities: list[Entity] = []
    for file in files:
        payload = _read_json(file)
        records = payload if isinstance(payload, list) else [payload]
        for record in records:
            entities.append(_parse_entity(record, str(file)))
    seen: dict[int, int] = {}
    for entity in entities:
        if entity.entity_id in seen:
            raise CorpusError(f"duplicate entity_id {entity.entity_id}")
        seen[entity.entity_id] = 1
    return entities


def entity_to_dict(entity: Entity) -> dict:
    return {
        "entity_id": entity.entity_id,
        "entity_name": entity.entity_name,
        "expert_review": {
            "pros": dict(entity.expert_review.pros),
            "cons": dict(entity.expert_review.cons),
        },
        "user_reviews": [
            {
                "review_id": r.review_id,
                "text": r.text,
                "rating": r.rating,
                "helpful_votes": r.helpful_votes,
                "publication_date": r.publication_date.isoformat(),
                "user_reviews_posted": r.user_reviews_posted,
                "user_cities_visited": r.user_cities_visited,
                "user_helpful_votes": r.user_helpful_votes,
            }
            for r in entity.user_reviews
        ],
    }


def save_corpus(entities: Iterable[Entity], path: str | Path) -> None:
    payload = [entity_to_dict(e) for e in entities]
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# Tokens that end with a period without ending a sentence. Single capital
# letters (initials) are handled separately.
_ABBREVIATIONS = frozenset(
    """
    dr mr mrs ms prof sr jr st ave blvd rd apt no vs etc approx dept est
    fig min max inc ltd co corp jan feb mar apr jun jul aug sep sept oct
    nov dec mon tue wed thu fri sat sun e.g i.e a.m p.m u.s p.s
    """.split()
)
_TERMINATORS = ".?!"
_CLOSERS = "\"')]”’"


def _preceding_word(text: str, pos: int) -> str:
    end = pos
    start = end
    while start > 0 and (text[start - 1].isalpha() or text[start - 1] == "."):
        start -= 1
    return text[start:end]


def _is_abbreviation(text: str, dot_pos: int) -> bool:
    word = _preceding_word(text, dot_pos).strip(".")
    if not word:
        return False
    if len(word) == 1 and word.isupper():
        return True
    return word.lower() in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Deterministic rule-based sentence splitter.

    A boundary is a run of ``.?!`` (optionally followed by closing quotes
    or brackets), then whitespace, then an uppercase letter or digit. A
    lone period after a known abbreviation or a single-letter initial is
    not a boundary. All non-whitespace characters are preserved, so the
    split reconstructs the input up to inter-sentence whitespace.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] not in _TERMINATORS:
            i += 1
            continue
        run_start = i
        j = i + 1
        while j < n and text[j] in _TERMINATORS:
            j += 1
        k = j
        while k < n and text[k] in _CLOSERS:
            k += 1
        m = k
        while m < n and text[m].isspace():
            m += 1
        boundary = m > k and m < n and (text[m].isupper() or text[m].isdigit())
        if boundary and j - run_start == 1 and text[run_start] == "." and _is_abbreviation(text, run_start):
            boundary = False
        if boundary:
            spans.append((start, k))
            start = m
            i = m
        else:
            i = k if k > i else i + 1
    if start < n:
        spans.append((start, n))
    out = []
    for a, b in spans:
        chunk = text[a:b].strip()
        if chunk:
            out.append(chunk)
    return out


def segment_sentences(entity: Entity) -> SentenceCorpus:
    """Split every review into sentences, keeping source review ids."""
    sentences: list[Sentence] = []
    for review in entity.user_reviews:
        for idx, sent in enumerate(split_sentences(review.text)):
            sentences.append(Sentence(text=sent, review_id=review.review_id, index=idx))
    return SentenceCorpus(sentences=tuple(sentences))


def _normalize_ws(text: str) -> str:
    return " ".join(text.lower().split())


def verify_query_alignment(entity: Entity, corpus: SentenceCorpus | None = None) -> AlignmentReport:
    """Check each annotated query for an exact sentence-level match.

    A query is aligned iff some review sentence contains it as a
    case-insensitive substring after whitespace normalization.
    """
    if corpus is None:
        corpus = segment_sentences(entity)
    normalized = [_normalize_ws(s.text) for s in corpus]
    aligned: list[str] = []
    unmatched: list[str] = []
    for query in entity.expert_review.queries:
        needle = _normalize_ws(query)
        if needle and any(needle in sent for sent in normalized):
            aligned.append(query)
        else:
            unmatched.append(query)
    return AlignmentReport(entity_id=entity.entity_id, aligned=tuple(aligned), unmatched=tuple(unmatched))


def corpus_stats(entities: list[Entity]) -> CorpusStats:
    """Counts and per-entity averages over a loaded corpus."""
    if not entities:
        raise CorpusError("corpus_stats requires a non-empty entity list")
    n = len(entities)
    total_reviews = sum(len(e.user_reviews) for e in entities)
    total_sentences = sum(len(segment_sentences(e)) for e in entities)
    total_words = sum(len(r.text.split()) for e in entities for r in e.user_reviews)
    total_pros = sum(len(e.expert_review.pros) for e in entities)
    total_cons = sum(len(e.expert_review.cons) for e in entities)
    queries = [q for e in entities for q in e.expert_review.queries]
    histogram = {"1": 0, "2": 0, "3": 0, "4+": 0}
    for query in queries:
        length = len(query.split())
        histogram["4+" if length > 3 else str(length)] += 1
    return CorpusStats(
        entity_count=n,
        avg_reviews_per_entity=total_reviews / n,
        avg_sentences_per_entity=total_sentences / n,
        avg_words_per_entity=total_words / n,
        avg_pros_per_entity=total_pros / n,
        avg_cons_per_entity=total_cons / n,
        total_queries=len(queries),
        unique_queries=len(set(queries)),
        query_length_histogram=histogram,
    )
