"""Turn retrieved evidence into one key-point highlight per query.

Also home to the structured-output recovery pipeline (direct JSON parse,
balanced-block extraction, per-key pattern match), the per-entity summary
artifact, and the long-context baseline prompt that feeds all reviews to
a single model call with recency-first truncation.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Entity, split_sentences
from .providers import ChatRequest, GenerationConfig
from .retrieval import EvidenceItem, EvidenceSet

logger = logging.getLogger(__name__)

__all__ = [
    "SynthesisError",
    "EmptyEvidenceError",
    "StructuredOutputError",
    "PromptSpec",
    "Highlight",
    "Summary",
    "LongContextPrompt",
    "DEFAULT_MAX_HIGHLIGHT_WORDS",
    "build_prompt",
    "extract_structured",
    "synthesize_highlight",
    "build_long_context_prompt",
    "save_summary",
    "load_summary",
]

DEFAULT_MAX_HIGHLIGHT_WORDS = 40
TOKENS_PER_WORD = 1.3

DEFAULT_STYLE_GUIDELINES = """\
Write one key-point highlight for the query:
- a single concise statement, at most 40 words;
- state only what the evidence sentences support, no outside knowledge;
- plain declarative phrasing, no hedging and no filler;
- cover the one aspect named by the query."""

DEFAULT_EXEMPLARS: tuple[tuple[str, tuple[str, ...], str], ...] = (
    (
        "breakfast",
        ("The breakfast buffet had fresh fruit and hot options every morning.",
         "Breakfast was included and started early enough for our tours."),
        "Included breakfast buffet with fresh fruit, hot dishes, and an early start.",
    ),
    (
        "street noise",
        ("Traffic noise from the street kept us up past midnight.",
         "Our room faced the road and it was loud even with windows shut."),
        "Street-facing rooms suffer from late-night traffic noise.",
    ),
    (
        "front desk",
        ("Front desk staff sorted out our booking mix-up in minutes.",
         "Check-in was quick and the receptionist gave us great local tips."),
        "Quick check-in with a helpful front desk that resolves problems fast.",
    ),
)

DEFAULT_TEMPLATE = """\
{guidelines}

{exemplars}Query: {query}
Evidence sentences, most relevant first:
{evidence}

Respond with a JSON object containing a single "highlight" field, e.g.
{{"highlight": "..."}}. Output nothing except that JSON object."""

_RETRY_REMINDER = (
    '\n\nReminder: respond with exactly one JSON object of the form '
    '{"highlight": "..."} and no other text.'
)


class SynthesisError(RuntimeError):
    pass


class EmptyEvidenceError(SynthesisError):
    """No evidence was retrieved; the caller should skip this query."""


class StructuredOutputError(SynthesisError):
    """All extraction stages failed; carries the raw model output."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class PromptSpec:
    """Stylistic constraints, exemplars, and the interpolation template."""

    style_guidelines: str = DEFAULT_STYLE_GUIDELINES
    exemplars: tuple[tuple[str, tuple[str, ...], str], ...] = DEFAULT_EXEMPLARS
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self) -> None:
        for slot in ("{query}", "{evidence}"):
            if self.template.count(slot) != 1:
                raise ValueError(f"template must contain exactly one {slot} slot")


@dataclass(frozen=True)
class Highlight:
    query: str
    text: str
    polarity: str  # "pro" | "con"
    raw_model_output: str
    evidence_ref: str  # provenance key in the owning summary

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("highlight text must be non-empty")
        if self.polarity not in ("pro", "con"):
            raise ValueError(f"polarity must be 'pro' or 'con', got {self.polarity!r}")


def _render_exemplars(exemplars: Sequence[tuple[str, Sequence[str], str]]) -> str:
    if not exemplars:
        return ""
    blocks = []
    for query, evidence, highlight in exemplars:
        lines = "\n".join(f"{i + 1}. {sent}" for i, sent in enumerate(evidence))
        blocks.append(
            f"Example query: {query}\nExample evidence:\n{lines}\n"
            f'Example output: {{"highlight": "{highlight}"}}'
        )
    return "\n\n".join(blocks) + "\n\n"


def build_prompt(query: str, evidence: EvidenceSet, spec: PromptSpec) -> str:
    """Deterministic prompt with evidence numbered in rank order."""
    if not evidence.items:
        raise EmptyEvidenceError(f"no evidence for query {query!r}; skip this query")
    numbered = "\n".join(f"{i + 1}. {item.text}" for i, item in enumerate(evidence.items))
    return spec.template.format(
        guidelines=spec.style_guidelines,
        exemplars=_render_exemplars(spec.exemplars),
        query=query,
        evidence=numbered,
    )


def _first_balanced_block(text: str) -> str | None:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start: i + 1]
    return None


def _string_value_pattern(key: str) -> re.Pattern:
    return re.compile(r'"' + re.escape(key) + r'"\s*:\s*"((?:[^"\\]|\\.)*)"')


def _scalar_value_pattern(key: str) -> re.Pattern:
    return re.compile(r'"' + re.escape(key) + r'"\s*:\s*(-?\d+(?:\.\d+)?|true|false|null)')


def _try_object(obj, expected_keys: Sequence[str]) -> dict | None:
    if isinstance(obj, dict) and all(key in obj for key in expected_keys):
        return obj
    return None


def extract_structured(raw: str, expected_keys: Sequence[str]) -> dict:
    """Recover a key/value map from imperfectly structured model output.

    Stage 1 parses the whole text as JSON; stage 2 parses the first
    balanced ``{...}`` block; stage 3 pattern-matches each expected key
    individually. The first stage that yields every expected key wins.
    """
    try:
        parsed = _try_object(json.loads(raw), expected_keys)
        if parsed is not None:
            return parsed
    except (json.JSONDecodeError, TypeError):
        pass

    block = _first_balanced_block(raw)
    if block is not None:
        try:
            parsed = _try_object(json.loads(block), expected_keys)
            if parsed is not None:
                return parsed
        except json.JSONDecodeError:
            pass

    recovered: dict = {}
    for key in expected_keys:
        match = _string_value_pattern(key).search(raw)
        if match:
            recovered[key] = json.loads(f'"{match.group(1)}"')
            continue
        match = _scalar_value_pattern(key).search(raw)
        if match:
            recovered[key] = json.loads(match.group(1))
    if len(recovered) == len(expected_keys):
        return recovered
    missing = [k for k in expected_keys if k not in recovered]
    raise StructuredOutputError(f"could not extract keys {missing} from model output", raw=raw)


def _cap_words(text: str, max_words: int, query: str) -> str:
    words = text.split()
    if len(words) <= max_words:
        return text
    kept: list[str] = []
    used = 0
    for sentence in split_sentences(text):
        n = len(sentence.split())
        if kept and used + n > max_words:
            break
        kept.append(sentence)
        used += n
        if used >= max_words:
            break
    capped = " ".join(kept) if kept else " ".join(words[:max_words])
    if len(capped.split()) > max_words:
        capped = " ".join(capped.split()[:max_words])
    logger.warning("highlight for %r truncated from %d to %d words",
                   query, len(words), len(capped.split()))
    return capped


def synthesize_highlight(query: str, evidence: EvidenceSet, spec: PromptSpec,
                         gen: GenerationConfig, chat, *, polarity: str | None = None,
                         sentiment=None, max_words: int = DEFAULT_MAX_HIGHLIGHT_WORDS) -> Highlight:
    """Generate one highlight for a query from its evidence.

    ``polarity`` is passed through when the expert section is known;
    otherwise a sentiment provider labels the generated text. A failed
    extraction is retried once with a format reminder before erroring.
    """
    if polarity is None and sentiment is None:
        raise ValueError("either polarity or a sentiment provider is required")
    prompt = build_prompt(query, evidence, spec)
    response = chat.complete(ChatRequest(prompt=prompt, config=gen))
    raw = response.text
    try:
        fields = extract_structured(raw, ["highlight"])
    except StructuredOutputError:
        response = chat.complete(ChatRequest(prompt=prompt + _RETRY_REMINDER, config=gen))
        raw = response.text
        fields = extract_structured(raw, ["highlight"])
    text = str(fields["highlight"]).strip()
    if not text:
        raise StructuredOutputError("model returned an empty highlight", raw=raw)
    text = _cap_words(text, max_words, query)
    if polarity is None:
        polarity = "pro" if sentiment.classify(text) == "positive" else "con"
    return Highlight(query=query, text=text, polarity=polarity,
                     raw_model_output=raw, evidence_ref=query)


LONG_CONTEXT_TEMPLATE = """\
Summarize the user reviews below into query-keyed highlights.

Queries: {queries}
Produce exactly {n_pros} PROS and {n_cons} CONS, one highlight per query,
assigning each query to the section its evidence supports. Each highlight
is a single concise statement of at most 40 words grounded in the reviews.

Respond with a JSON object of the form
{{"pros": {{"<query>": "<highlight>"}}, "cons": {{"<query>": "<highlight>"}}}}
and nothing else.

Reviews, most recent first:
{reviews}"""


@dataclass(frozen=True)
class LongContextPrompt:
    text: str
    included_review_ids: tuple[int, ...]


def _token_estimate(text: str, tokens_per_word: float) -> float:
    return len(text.split()) * tokens_per_word


def build_long_context_prompt(entity: Entity, queries: Sequence[str],
                              counts: tuple[int, int], gen: GenerationConfig,
                              token_budget: int,
                              tokens_per_word: float = TOKENS_PER_WORD) -> LongContextPrompt:
    """Single-prompt baseline input over all reviews, newest first.

    Reviews are appended in descending publication date until the token
    budget (word count times ``tokens_per_word``) would be exceeded; the
    first review that does not fit stops the scan, so the inclusion set is
    always a prefix of the recency ordering.
    """
    n_pros, n_cons = counts
    scaffold = LONG_CONTEXT_TEMPLATE.format(
        queries=", ".join(queries), n_pros=n_pros, n_cons=n_cons, reviews="")
    budget_left = token_budget - _token_estimate(scaffold, tokens_per_word)
    if budget_left <= 0:
        raise SynthesisError(
            f"token budget {token_budget} cannot fit the prompt scaffold")
    ordered = sorted(entity.user_reviews, key=lambda r: r.publication_date, reverse=True)
    included = []
    blocks = []
    for review in ordered:
        block = f"[{review.publication_date.isoformat()}] {review.text}"
        cost = _token_estimate(block, tokens_per_word)
        if cost > budget_left:
            break
        budget_left -= cost
        included.append(review.review_id)
        blocks.append(block)
    text = LONG_CONTEXT_TEMPLATE.format(
        queries=", ".join(queries), n_pros=n_pros, n_cons=n_cons,
        reviews="\n".join(blocks))
    return LongContextPrompt(text=text, included_review_ids=tuple(included))


@dataclass
class Summary:
    """Per-entity summary artifact produced by the pipeline and baselines.

    ``provenance`` maps each query to the evidence items its highlight was
    generated from; ``skipped`` records queries with no usable evidence.
    """

    entity_id: int
    entity_name: str = ""
    pros: dict[str, str] = field(default_factory=dict)
    cons: dict[str, str] = field(default_factory=dict)
    provenance: dict[str, list[EvidenceItem]] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def highlights(self) -> list[tuple[str, str, str]]:
        """(polarity, query, text) rows in section order."""
        rows = [("pro", q, t) for q, t in self.pros.items()]
        rows += [("con", q, t) for q, t in self.cons.items()]
        return rows

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "entity_name": self.entity_name,
            "pros": dict(self.pros),
            "cons": dict(self.cons),
            "provenance": {q: [item.to_dict() for item in items]
                           for q, items in self.provenance.items()},
            "skipped": dict(self.skipped),
            "meta": dict(self.meta),
        }


def save_summary(summary: Summary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary.to_dict(), indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def load_summary(path: str | Path) -> Summary:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    provenance = {
        query: [EvidenceItem(text=i["text"], score=i["score"], review_id=i["review_id"],
                             sentence_index=i["sentence_index"]) for i in items]
        for query, items in payload.get("provenance", {}).items()
    }
    return Summary(
        entity_id=payload["entity_id"],
        entity_name=payload.get("entity_name", ""),
        pros=dict(payload.get("pros", {})),
        cons=dict(payload.get("cons", {})),
        provenance=provenance,
        skipped=dict(payload.get("skipped", {})),
        meta=dict(payload.get("meta", {})),
    )
