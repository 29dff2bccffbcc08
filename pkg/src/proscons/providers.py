"""External model services behind a uniform interface.

Four provider roles: chat completion, text embedding, binary sentiment
classification, and aspect/opinion/sentiment triplet extraction. Each
role has an HTTP implementation speaking a generic completions-and-
embeddings JSON API and a deterministic in-repo test double, so every
pipeline stage can run offline and bit-reproducibly.

Endpoints and secrets come from the environment:
``OPINIORAG_CHAT_URL`` / ``OPINIORAG_CHAT_KEY``,
``OPINIORAG_EMBED_URL`` / ``OPINIORAG_EMBED_KEY``,
``OPINIORAG_SENTIMENT_URL`` / ``OPINIORAG_SENTIMENT_KEY``,
``OPINIORAG_TRIPLET_URL`` / ``OPINIORAG_TRIPLET_KEY``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import requests

logger = logging.getLogger(__name__)

__all__ = [
    "ProviderError",
    "ProviderTimeout",
    "ProviderAuthError",
    "ProviderRateLimited",
    "MalformedRequestError",
    "ContextLengthExceeded",
    "EmbeddingDimensionError",
    "GenerationConfig",
    "ChatRequest",
    "ChatResponse",
    "AosTriplet",
    "RetryPolicy",
    "DEFAULT_SYSTEM_MESSAGE",
    "HttpChatProvider",
    "HttpEmbeddingProvider",
    "HttpSentimentProvider",
    "StubChatProvider",
    "KeyPointChatProvider",
    "HashingEmbedder",
    "OneHotEmbedder",
    "TableEmbedder",
    "LexiconSentimentProvider",
    "PatternTripletExtractor",
    "PromptedTripletExtractor",
    "normalize_term",
    "chat_provider_from_env",
    "embedding_provider_from_env",
]

DEFAULT_SYSTEM_MESSAGE = (
    "You are an expert summarizer of user reviews for hotels and restaurants, "
    "specializing in travel!"
)


class ProviderError(RuntimeError):
    """Base class for provider failures; carries the request identifier."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id


class ProviderTimeout(ProviderError):
    pass


class ProviderAuthError(ProviderError):
    pass


class ProviderRateLimited(ProviderError):
    pass


class MalformedRequestError(ProviderError):
    """Client-side request errors; never retried."""


class ContextLengthExceeded(ProviderError):
    """The request does not fit the provider context window."""


class EmbeddingDimensionError(ProviderError):
    pass


@dataclass
class GenerationConfig:
    max_new_tokens: int = 256
    temperature: float = 0.7
    top_p: float = 0.9
    long_context_max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1 or self.long_context_max_tokens < 1:
            raise ValueError("token limits must be >= 1")


@dataclass
class ChatRequest:
    prompt: str
    system_message: str = DEFAULT_SYSTEM_MESSAGE
    config: GenerationConfig = field(default_factory=GenerationConfig)
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class AosTriplet:
    """(aspect, opinion, sentiment) with sentiment in {-1, 0, 1}."""

    aspect: str
    opinion: str
    sentiment: int

    def __post_init__(self) -> None:
        if not self.aspect or not self.opinion:
            raise ValueError("aspect and opinion must be non-empty")
        if self.sentiment not in (-1, 0, 1):
            raise ValueError(f"sentiment must be -1, 0, or 1, got {self.sentiment!r}")

    def to_dict(self) -> dict:
        return {"aspect": self.aspect, "opinion": self.opinion, "sentiment": self.sentiment}


def normalize_term(text: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return " ".join(text.lower().split())


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    factor: float = 2.0
    jitter: float = 0.1

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.base_delay * (self.factor ** attempt)
        return base * (1.0 + rng.uniform(0.0, self.jitter))


def _classify_http_error(status: int, body: str, request_id: str) -> ProviderError:
    if status in (401, 403):
        return ProviderAuthError(f"authentication failed (HTTP {status})", request_id)
    if status == 429:
        return ProviderRateLimited("rate limited (HTTP 429)", request_id)
    if status in (400, 413) and "context" in body.lower():
        return ContextLengthExceeded(f"request exceeds provider context (HTTP {status})", request_id)
    if 400 <= status < 500:
        return MalformedRequestError(f"provider rejected request (HTTP {status}): {body[:200]}", request_id)
    return ProviderError(f"provider error (HTTP {status}): {body[:200]}", request_id)


class _HttpBase:
    """Shared retry loop: transient failures retry with capped exponential
    backoff; malformed requests, auth failures, and context overflows never
    retry. ``transport``/``sleep`` are injectable for tests."""

    def __init__(self, url: str, api_key: str | None = None, model: str | None = None,
                 timeout: float = 30.0, retry: RetryPolicy | None = None,
                 transport: Callable | None = None, sleep: Callable[[float], None] = time.sleep):
        if not url:
            raise ValueError("provider url is required")
        self.url = url
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.retry = retry or RetryPolicy()
        self.transport = transport or self._default_transport
        self.sleep = sleep
        self._rng = random.Random()

    def _default_transport(self, url: str, payload: dict, timeout: float):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return requests.post(url, json=payload, headers=headers, timeout=timeout)

    def _post(self, payload: dict, request_id: str) -> dict:
        last_error: ProviderError | None = None
        for attempt in range(self.retry.attempts):
            try:
                response = self.transport(self.url, payload, self.timeout)
            except requests.Timeout as exc:
                last_error = ProviderTimeout(f"request timed out: {exc}", request_id)
            except requests.RequestException as exc:
                last_error = ProviderError(f"transport failure: {exc}", request_id)
            else:
                status = getattr(response, "status_code", 200)
                if status < 400:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise ProviderError(f"non-JSON provider response: {exc}", request_id) from exc
                error = _classify_http_error(status, getattr(response, "text", ""), request_id)
                if isinstance(error, (MalformedRequestError, ProviderAuthError, ContextLengthExceeded)):
                    raise error
                last_error = error
            if attempt + 1 < self.retry.attempts:
                self.sleep(self.retry.delay(attempt, self._rng))
        assert last_error is not None
        raise last_error


class HttpChatProvider(_HttpBase):
    """Chat completion over a generic messages/choices JSON API."""

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.prompt},
            ],
            "max_tokens": request.config.max_new_tokens,
            "temperature": request.config.temperature,
            "top_p": request.config.top_p,
        }
        if self.model:
            payload["model"] = self.model
        data = self._post(payload, request.request_id)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected chat response shape: {exc}", request.request_id) from exc
        usage = data.get("usage", {})
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


class HttpEmbeddingProvider(_HttpBase):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires a non-empty list of texts")
        request_id = uuid.uuid4().hex
        payload: dict = {"input": list(texts)}
        if self.model:
            payload["model"] = self.model
        data = self._post(payload, request_id)
        try:
            vectors = [list(map(float, row["embedding"])) for row in data["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"unexpected embedding response shape: {exc}", request_id) from exc
        if len(vectors) != len(texts):
            raise EmbeddingDimensionError(
                f"expected {len(texts)} vectors, got {len(vectors)}", request_id)
        _check_dimensions(vectors, request_id)
        return vectors


class HttpSentimentProvider(_HttpBase):
    """Binary sentiment endpoint: {"input": text} -> {"label": "positive"|"negative"}."""

    def classify(self, text: str) -> str:
        if not text.strip():
            raise ValueError("classify requires non-empty text")
        request_id = uuid.uuid4().hex
        payload: dict = {"input": text}
        if self.model:
            payload["model"] = self.model
        data = self._post(payload, request_id)
        label = str(data.get("label", "")).lower()
        if label not in ("positive", "negative"):
            raise ProviderError(f"unexpected sentiment label: {label!r}", request_id)
        return label


def _check_dimensions(vectors: list[list[float]], request_id: str | None = None) -> None:
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise EmbeddingDimensionError(f"mixed embedding dimensions in batch: {sorted(dims)}", request_id)


# ---------------------------------------------------------------------------
# Deterministic test doubles. All are pure functions of their inputs (plus
# fixed construction parameters), so pipelines run against them are
# bit-reproducible.
# ---------------------------------------------------------------------------


class StubChatProvider:
    """Canned chat provider for tests.

    Looks up the user prompt in ``responses``; falls back to ``default``
    (string or callable on the request). ``token_budget`` caps the prompt
    word count and raises ``ContextLengthExceeded`` beyond it, mimicking a
    provider context window instead of silently truncating.
    """

    def __init__(self, responses: Mapping[str, str] | None = None,
                 default: str | Callable[[ChatRequest], str] | None = None,
                 token_budget: int | None = None):
        self.responses = dict(responses or {})
        self.default = default
        self.token_budget = token_budget
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls.append(request)
        prompt_tokens = len(request.prompt.split())
        if self.token_budget is not None and prompt_tokens > self.token_budget:
            raise ContextLengthExceeded(
                f"prompt of {prompt_tokens} tokens exceeds budget {self.token_budget}",
                request.request_id,
            )
        if request.prompt in self.responses:
            text = self.responses[request.prompt]
        elif callable(self.default):
            text = self.default(request)
        elif self.default is not None:
            text = self.default
        else:
            raise ProviderError(f"no canned response for prompt: {request.prompt[:80]!r}",
                                request.request_id)
        return ChatResponse(text=text, prompt_tokens=prompt_tokens,
                            completion_tokens=len(text.split()))


_EVIDENCE_LINE_RE = re.compile(r"^\s*1\.\s+(.*\S)\s*$", re.MULTILINE)


class KeyPointChatProvider:
    """Pipeline double: a pure function of the prompt covering the two
    structured shapes the pipeline requests.

    Highlight prompts get the top-ranked evidence sentence back (the real
    evidence block is the final numbered list in the prompt; exemplars,
    when present, come earlier, so the last "1." line wins). Judge-rubric
    prompts get five 1-5 scores derived from a hash of the prompt.
    """

    def complete(self, request: ChatRequest) -> ChatResponse:
        if '"ou"' in request.prompt and '"highlight"' not in request.prompt:
            digest = hashlib.sha256(request.prompt.encode("utf-8")).digest()
            scores = {key: digest[i] % 5 + 1
                      for i, key in enumerate(("ar", "nr", "sa", "of", "ou"))}
            body = json.dumps(scores)
        else:
            matches = _EVIDENCE_LINE_RE.findall(request.prompt)
            text = matches[-1] if matches else "No evidence provided."
            body = json.dumps({"highlight": text}, ensure_ascii=False)
        return ChatResponse(text=body, prompt_tokens=len(request.prompt.split()),
                            completion_tokens=len(body.split()))


def _stable_bucket(value: str, dim: int, salt: str = "") -> int:
    digest = hashlib.sha256((salt + value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


class HashingEmbedder:
    """Bag-of-tokens vectors via feature hashing; identical strings map to
    identical vectors."""

    def __init__(self, dim: int = 256, salt: str = "hash-embed"):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.salt = salt

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires a non-empty list of texts")
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            for token in text.lower().split():
                vec[_stable_bucket(token, self.dim, self.salt)] += 1.0
            out.append(vec)
        return out


class OneHotEmbedder:
    """Each distinct (whitespace-normalized, lowercased) string maps to its
    own basis direction: cosine is 1.0 for equal strings and 0.0 otherwise
    (up to hash collisions, negligible at the default dimension)."""

    def __init__(self, dim: int = 8192, salt: str = "one-hot"):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.salt = salt

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires a non-empty list of texts")
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            key = normalize_term(text)
            if key:
                vec[_stable_bucket(key, self.dim, self.salt)] = 1.0
            out.append(vec)
        return out


class TableEmbedder:
    """Fixture embedder backed by an explicit text -> vector table."""

    def __init__(self, table: Mapping[str, Sequence[float]]):
        if not table:
            raise ValueError("table must not be empty")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise EmbeddingDimensionError(f"table vectors have mixed dimensions: {sorted(dims)}")
        self.table = {k: list(map(float, v)) for k, v in table.items()}
        self.dim = dims.pop()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires a non-empty list of texts")
        out = []
        for text in texts:
            if text not in self.table:
                raise ProviderError(f"no embedding table entry for {text[:60]!r}")
            out.append(list(self.table[text]))
        return out


_POSITIVE_CUES = frozenset(
    """
    great clean wonderful friendly spacious excellent comfortable nice good
    amazing helpful convenient modern quiet beautiful delicious free fresh
    lovely perfect awesome fantastic pleasant charming cozy stunning superb
    attentive generous reliable fast safe bright welcoming tasty relaxing
    impressive courteous affordable
    """.split()
)

_NEGATIVE_CUES = frozenset(
    """
    dirty terrible broken rude noisy bad small outdated slow expensive poor
    awful dated worn smelly crowded pushy horrible disappointing cold stained
    uncomfortable cramped overpriced unhelpful unreliable filthy grimy loud
    leaky moldy sticky faulty shabby dingy unfriendly dark aggressive
    """.split()
)

_NEUTRAL_CUES = frozenset(
    """
    average basic standard typical ordinary plain regular usual moderate
    adequate
    """.split()
)

_WORD_RE = re.compile(r"[a-z]+(?:-[a-z]+)?")


class LexiconSentimentProvider:
    """Counts positive vs negative cue words; ties (including no cues at
    all) resolve to positive."""

    def classify(self, text: str) -> str:
        if not text.strip():
            raise ValueError("classify requires non-empty text")
        tokens = _WORD_RE.findall(text.lower())
        pos = sum(1 for t in tokens if t in _POSITIVE_CUES)
        neg = sum(1 for t in tokens if t in _NEGATIVE_CUES)
        return "negative" if neg > pos else "positive"


class PatternTripletExtractor:
    """Rule double: an opinion-cue adjective immediately followed by a
    non-cue word yields one triplet (word, adjective, cue polarity)."""

    def extract(self, sentence: str) -> list[AosTriplet]:
        if not sentence.strip():
            raise ValueError("extract requires a non-empty sentence")
        tokens = _WORD_RE.findall(sentence.lower())
        triplets = []
        for i, token in enumerate(tokens[:-1]):
            if token in _POSITIVE_CUES:
                sentiment = 1
            elif token in _NEGATIVE_CUES:
                sentiment = -1
            elif token in _NEUTRAL_CUES:
                sentiment = 0
            else:
                continue
            nxt = tokens[i + 1]
            if nxt in _POSITIVE_CUES or nxt in _NEGATIVE_CUES or nxt in _NEUTRAL_CUES:
                continue
            triplets.append(AosTriplet(aspect=normalize_term(nxt),
                                       opinion=normalize_term(token),
                                       sentiment=sentiment))
        return triplets


_TRIPLET_PROMPT = """Decompose the sentence below into aspect/opinion/sentiment triplets.
Each triplet names the feature being discussed (aspect), the judgment about it
(opinion), and the polarity as -1 (negative), 0 (neutral), or 1 (positive).
Respond with a JSON object of the form
{{"triplets": [{{"aspect": "...", "opinion": "...", "sentiment": 1}}]}}
and nothing else. Use an empty list when the sentence carries no opinion.

Sentence: {sentence}"""

_SENTIMENT_WORDS = {"negative": -1, "neutral": 0, "positive": 1}


class PromptedTripletExtractor:
    """Production extractor: prompts a chat provider and validates the
    structured output. Unparseable output degrades to an empty list with a
    logged diagnostic instead of failing the pipeline."""

    def __init__(self, chat, config: GenerationConfig | None = None):
        self.chat = chat
        self.config = config or GenerationConfig(temperature=0.0)

    def extract(self, sentence: str) -> list[AosTriplet]:
        if not sentence.strip():
            raise ValueError("extract requires a non-empty sentence")
        from .synthesizer import StructuredOutputError, extract_structured

        request = ChatRequest(prompt=_TRIPLET_PROMPT.format(sentence=sentence), config=self.config)
        response = self.chat.complete(request)
        try:
            payload = extract_structured(response.text, ["triplets"])
        except StructuredOutputError:
            logger.warning("unparseable triplet output for %r: %r", sentence[:60], response.text[:120])
            return []
        rows = payload.get("triplets")
        if not isinstance(rows, list):
            logger.warning("triplet output is not a list for %r", sentence[:60])
            return []
        triplets = []
        for row in rows:
            try:
                sentiment = row["sentiment"]
                if isinstance(sentiment, str):
                    word = _SENTIMENT_WORDS.get(sentiment.lower())
                    sentiment = word if word is not None else int(sentiment)
                triplets.append(AosTriplet(
                    aspect=normalize_term(str(row["aspect"])),
                    opinion=normalize_term(str(row["opinion"])),
                    sentiment=int(sentiment),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                logger.warning("skipping malformed triplet row %r: %s", row, exc)
        return triplets


def chat_provider_from_env(**kwargs) -> HttpChatProvider:
    url = os.environ.get("OPINIORAG_CHAT_URL", "")
    key = os.environ.get("OPINIORAG_CHAT_KEY")
    return HttpChatProvider(url, api_key=key, **kwargs)


def embedding_provider_from_env(**kwargs) -> HttpEmbeddingProvider:
    url = os.environ.get("OPINIORAG_EMBED_URL", "")
    key = os.environ.get("OPINIORAG_EMBED_KEY")
    return HttpEmbeddingProvider(url, api_key=key, **kwargs)
