"""Provider contract tests: HTTP error handling and the pure doubles."""

from __future__ import annotations

import pytest
import requests

from proscons.providers import (
    AosTriplet,
    ChatRequest,
    ContextLengthExceeded,
    EmbeddingDimensionError,
    GenerationConfig,
    HashingEmbedder,
    HttpChatProvider,
    HttpEmbeddingProvider,
    LexiconSentimentProvider,
    MalformedRequestError,
    OneHotEmbedder,
    PatternTripletExtractor,
    PromptedTripletExtractor,
    ProviderAuthError,
    ProviderError,
    ProviderTimeout,
    RetryPolicy,
    StubChatProvider,
    TableEmbedder,
)
from proscons.retrieval import cosine_similarity


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text

    def json(self):
        return self._payload


def chat_payload(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 3}}


class TestGenerationConfig:
    def test_defaults(self):
        config = GenerationConfig()
        assert config.max_new_tokens == 256
        assert config.temperature == 0.7
        assert config.top_p == 0.9
        assert config.long_context_max_tokens == 512

    @pytest.mark.parametrize("kwargs", [
        {"temperature": -0.1},
        {"top_p": 0.0},
        {"top_p": 1.2},
        {"max_new_tokens": 0},
        {"long_context_max_tokens": 0},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            GenerationConfig(**kwargs)


class TestHttpChat:
    def test_success_returns_text(self):
        provider = HttpChatProvider("http://chat.test", transport=lambda *a: FakeResponse(
            payload=chat_payload("hello")), sleep=lambda s: None)
        response = provider.complete(ChatRequest(prompt="hi"))
        assert response.text == "hello"
        assert response.prompt_tokens == 5

    def test_timeout_retries_then_raises(self):
        calls = []

        def transport(url, payload, timeout):
            calls.append(1)
            raise requests.Timeout("slow")

        provider = HttpChatProvider("http://chat.test", transport=transport,
                                    retry=RetryPolicy(attempts=3, base_delay=0.0),
                                    sleep=lambda s: None)
        with pytest.raises(ProviderTimeout):
            provider.complete(ChatRequest(prompt="hi"))
        assert len(calls) == 3

    def test_malformed_request_not_retried(self):
        calls = []

        def transport(url, payload, timeout):
            calls.append(1)
            return FakeResponse(status_code=400, text="bad request shape")

        provider = HttpChatProvider("http://chat.test", transport=transport, sleep=lambda s: None)
        with pytest.raises(MalformedRequestError):
            provider.complete(ChatRequest(prompt="hi"))
        assert len(calls) == 1

    def test_auth_error_not_retried(self):
        calls = []

        def transport(url, payload, timeout):
            calls.append(1)
            return FakeResponse(status_code=401, text="no key")

        provider = HttpChatProvider("http://chat.test", transport=transport, sleep=lambda s: None)
        with pytest.raises(ProviderAuthError) as err:
            provider.complete(ChatRequest(prompt="hi"))
        assert err.value.request_id
        assert len(calls) == 1

    def test_rate_limit_retried(self):
        responses = [FakeResponse(status_code=429, text="slow down"),
                     FakeResponse(payload=chat_payload("ok"))]
        provider = HttpChatProvider("http://chat.test",
                                    transport=lambda *a: responses.pop(0),
                                    retry=RetryPolicy(attempts=3, base_delay=0.0),
                                    sleep=lambda s: None)
        assert provider.complete(ChatRequest(prompt="hi")).text == "ok"

    def test_context_length_error_surfaced(self):
        provider = HttpChatProvider(
            "http://chat.test",
            transport=lambda *a: FakeResponse(status_code=400, text="maximum context length exceeded"),
            sleep=lambda s: None)
        with pytest.raises(ContextLengthExceeded):
            provider.complete(ChatRequest(prompt="hi" * 50_000))

    def test_system_message_default_present_in_payload(self):
        seen = {}

        def transport(url, payload, timeout):
            seen.update(payload)
            return FakeResponse(payload=chat_payload("ok"))

        provider = HttpChatProvider("http://chat.test", transport=transport, sleep=lambda s: None)
        provider.complete(ChatRequest(prompt="hi"))
        assert seen["messages"][0]["role"] == "system"
        assert "expert summarizer" in seen["messages"][0]["content"]


class TestHttpEmbedding:
    def test_order_preserved(self):
        payload = {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 1.0]}]}
        provider = HttpEmbeddingProvider("http://embed.test",
                                         transport=lambda *a: FakeResponse(payload=payload),
                                         sleep=lambda s: None)
        vectors = provider.embed(["a", "b"])
        assert vectors == [[1.0, 0.0], [0.0, 1.0]]

    def test_dimension_mismatch_rejected(self):
        payload = {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0]}]}
        provider = HttpEmbeddingProvider("http://embed.test",
                                         transport=lambda *a: FakeResponse(payload=payload),
                                         sleep=lambda s: None)
        with pytest.raises(EmbeddingDimensionError):
            provider.embed(["a", "b"])

    def test_empty_batch_rejected(self):
        provider = HttpEmbeddingProvider("http://embed.test",
                                         transport=lambda *a: FakeResponse(), sleep=lambda s: None)
        with pytest.raises(ValueError):
            provider.embed([])


class TestStubChat:
    def test_canned_response_verbatim(self):
        stub = StubChatProvider(responses={"the prompt": "the canned answer"})
        assert stub.complete(ChatRequest(prompt="the prompt")).text == "the canned answer"

    def test_missing_prompt_errors(self):
        stub = StubChatProvider(responses={})
        with pytest.raises(ProviderError):
            stub.complete(ChatRequest(prompt="unknown"))

    def test_token_budget_enforced(self):
        stub = StubChatProvider(default="ok", token_budget=4)
        assert stub.complete(ChatRequest(prompt="one two three")).text == "ok"
        with pytest.raises(ContextLengthExceeded):
            stub.complete(ChatRequest(prompt="one two three four five"))


class TestEmbedderDoubles:
    def test_identical_strings_identical_vectors(self):
        for embedder in (HashingEmbedder(), OneHotEmbedder()):
            a, b = embedder.embed(["same text", "same text"])
            assert a == b

    def test_one_vector_per_input(self):
        assert len(HashingEmbedder().embed(["a", "b"])) == 2

    def test_self_cosine_is_one(self):
        vec = HashingEmbedder().embed(["clean room"])[0]
        assert cosine_similarity(vec, vec) == pytest.approx(1.0)

    def test_one_hot_orthogonal_for_distinct(self):
        a, b = OneHotEmbedder().embed(["spotless", "clean"])
        assert cosine_similarity(a, b) == 0.0

    def test_table_embedder_missing_key(self):
        embedder = TableEmbedder({"known": [1.0]})
        with pytest.raises(ProviderError):
            embedder.embed(["unknown"])


class TestSentimentDouble:
    def test_positive_cues(self):
        assert LexiconSentimentProvider().classify("great clean wonderful") == "positive"

    def test_negative_cues(self):
        assert LexiconSentimentProvider().classify("dirty terrible broken") == "negative"

    def test_tie_resolves_positive(self):
        provider = LexiconSentimentProvider()
        assert provider.classify("room") == "positive"          # no cues
        assert provider.classify("clean but dirty") == "positive"  # 1-1 tie

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            LexiconSentimentProvider().classify("  ")


class TestTripletDoubles:
    def test_adjective_noun_rule(self):
        triplets = PatternTripletExtractor().extract("clean room")
        assert triplets == [AosTriplet(aspect="room", opinion="clean", sentiment=1)]

    def test_no_cue_yields_empty(self):
        assert PatternTripletExtractor().extract("the hotel") == []

    def test_enumerated_rule_applications(self):
        triplets = PatternTripletExtractor().extract("spacious room but dirty bathroom")
        assert triplets == [
            AosTriplet(aspect="room", opinion="spacious", sentiment=1),
            AosTriplet(aspect="bathroom", opinion="dirty", sentiment=-1),
        ]

    def test_neutral_cue(self):
        triplets = PatternTripletExtractor().extract("average breakfast today")
        assert triplets == [AosTriplet(aspect="breakfast", opinion="average", sentiment=0)]

    def test_prompted_extractor_parses_json(self):
        stub = StubChatProvider(default='{"triplets": [{"aspect": "Room", "opinion": "Clean", "sentiment": "positive"}]}')
        triplets = PromptedTripletExtractor(stub).extract("The room was clean.")
        assert triplets == [AosTriplet(aspect="room", opinion="clean", sentiment=1)]

    def test_prompted_extractor_garbage_is_empty_not_fatal(self, caplog):
        stub = StubChatProvider(default="total nonsense with no braces")
        with caplog.at_level("WARNING"):
            assert PromptedTripletExtractor(stub).extract("anything here") == []
        assert any("unparseable" in rec.message for rec in caplog.records)

    def test_prompted_extractor_drops_out_of_range_sentiment(self, caplog):
        stub = StubChatProvider(
            default='{"triplets": [{"aspect": "room", "opinion": "clean", "sentiment": 5}]}')
        with caplog.at_level("WARNING"):
            assert PromptedTripletExtractor(stub).extract("whatever") == []


class TestAosTriplet:
    def test_sentiment_domain_enforced(self):
        with pytest.raises(ValueError):
            AosTriplet(aspect="room", opinion="clean", sentiment=2)

    def test_non_empty_fields(self):
        with pytest.raises(ValueError):
            AosTriplet(aspect="", opinion="clean", sentiment=1)
