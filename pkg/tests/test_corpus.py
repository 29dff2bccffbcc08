"""Corpus loading, segmentation, alignment, and stats tests."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus, make_entity
from proscons.corpus import (
    CorpusError,
    corpus_stats,
    entity_to_dict,
    load_corpus,
    save_corpus,
    segment_sentences,
    split_sentences,
    verify_query_alignment,
)

MINIMAL_ENTITY = {
    "entity_id": 18,
    "entity_name": "Polo Towers Suites",
    "expert_review": {
        "pros": {"shuttle service": "Free, 24-hour shuttle to the airport, Strip, and the Las Vegas Convention Center."},
        "cons": {"resort fee": "Daily resort fee charged on top."},
    },
    "user_reviews": [
        {
            "review_id": 1,
            "text": "The shuttle service was free. Resort fee was a surprise.",
            "rating": 4,
            "helpful_votes": 3,
            "publication_date": "2021-06-01",
            "user_reviews_posted": 12,
            "user_cities_visited": 8,
            "user_helpful_votes": 44,
        }
    ],
}


def _write(tmp_path, payload, name="corpus.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_single_entity_file(self, tmp_path):
        entities = load_corpus(_write(tmp_path, MINIMAL_ENTITY))
        assert len(entities) == 1
        entity = entities[0]
        assert entity.entity_id == 18
        assert entity.entity_name == "Polo Towers Suites"
        assert entity.expert_review.pros["shuttle service"].startswith("Free, 24-hour shuttle")
        assert entity.user_reviews[0].rating == 4

    def test_missing_rating_names_field(self, tmp_path):
        bad = json.loads(json.dumps(MINIMAL_ENTITY))
        del bad["user_reviews"][0]["rating"]
        with pytest.raises(CorpusError, match="rating"):
            load_corpus(_write(tmp_path, bad))

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"entity_id": 1,\n  "entity_name": }', encoding="utf-8")
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(path)

    def test_rating_out_of_range(self, tmp_path):
        bad = json.loads(json.dumps(MINIMAL_ENTITY))
        bad["user_reviews"][0]["rating"] = 6
        with pytest.raises(CorpusError, match=r"rating.*\[1, 5\]"):
            load_corpus(_write(tmp_path, bad))

    def test_bad_date(self, tmp_path):
        bad = json.loads(json.dumps(MINIMAL_ENTITY))
        bad["user_reviews"][0]["publication_date"] = "06/01/2021"
        with pytest.raises(CorpusError, match="publication_date"):
            load_corpus(_write(tmp_path, bad))

    def test_query_in_both_sections_rejected(self, tmp_path):
        bad = json.loads(json.dumps(MINIMAL_ENTITY))
        bad["expert_review"]["cons"]["shuttle service"] = "Shuttle was crowded."
        with pytest.raises(CorpusError, match="both pros and cons"):
            load_corpus(_write(tmp_path, bad))

    def test_empty_reviews_rejected(self, tmp_path):
        bad = json.loads(json.dumps(MINIMAL_ENTITY))
        bad["user_reviews"] = []
        with pytest.raises(CorpusError, match="non-empty"):
            load_corpus(_write(tmp_path, bad))

    def test_duplicate_entity_ids_rejected(self, tmp_path):
        with pytest.raises(CorpusError, match="duplicate entity_id"):
            load_corpus(_write(tmp_path, [MINIMAL_ENTITY, MINIMAL_ENTITY]))

    def test_unknown_fields_ignored(self, tmp_path):
        extended = json.loads(json.dumps(MINIMAL_ENTITY))
        extended["future_field"] = {"anything": 1}
        extended["user_reviews"][0]["reviewer_badge"] = "gold"
        entities = load_corpus(_write(tmp_path, extended))
        assert entities[0].entity_id == 18

    def test_directory_of_files(self, tmp_path):
        second = json.loads(json.dumps(MINIMAL_ENTITY))
        second["entity_id"] = 19
        _write(tmp_path, MINIMAL_ENTITY, "a.json")
        _write(tmp_path, second, "b.json")
        entities = load_corpus(tmp_path)
        assert [e.entity_id for e in entities] == [18, 19]

    def test_round_trip(self, tmp_path, corpus_entities):
        path = tmp_path / "saved.json"
        save_corpus(corpus_entities, path)
        again = load_corpus(path)
        assert [entity_to_dict(e) for e in again] == [entity_to_dict(e) for e in corpus_entities]


# Each pair is (input text, hand-labeled sentences); 51 sentences total.
SEGMENTATION_FIXTURE = [
    ("Great pool. Bad wifi.", ["Great pool.", "Bad wifi."]),
    ("Dr. Smith loved it.", ["Dr. Smith loved it."]),
    ("", []),
    ("We met Mr. Jones at the bar. He was kind.",
     ["We met Mr. Jones at the bar.", "He was kind."]),
    ("Is it close? Yes! Very close.", ["Is it close?", "Yes!", "Very close."]),
    ("The room no. 5 was ready.", ["The room no. 5 was ready."]),
    ("I paid $20. Then we left.", ["I paid $20.", "Then we left."]),
    ('He said "Wow!" Then he left.', ['He said "Wow!"', "Then he left."]),
    ("St. Paul's Cathedral is near. We walked there.",
     ["St. Paul's Cathedral is near.", "We walked there."]),
    ("Rooms start at 99 USD. 24-hour desk available.",
     ["Rooms start at 99 USD.", "24-hour desk available."]),
    ("It was e.g. a suite. Lovely!", ["It was e.g. a suite.", "Lovely!"]),
    ("J. K. Rowling stayed here. True story.",
     ["J. K. Rowling stayed here.", "True story."]),
    ("Check-in was at 3 p.m. and quick.", ["Check-in was at 3 p.m. and quick."]),
    # policy: an abbreviation period never ends a sentence, even before a capital
    ("Check-in was at 3 p.m. We left at 9.", ["Check-in was at 3 p.m. We left at 9."]),
    ("What a view!! Amazing balcony.", ["What a view!!", "Amazing balcony."]),
    ("Really...? Sure. Fine.", ["Really...?", "Sure.", "Fine."]),
    ("The pool (see photo no. 2) was warm. Kids loved it.",
     ["The pool (see photo no. 2) was warm.", "Kids loved it."]),
    ("Breakfast ends at 10 a.m. sharp. Lunch starts at noon.",
     ["Breakfast ends at 10 a.m. sharp.", "Lunch starts at noon."]),
    ("Ms. Lee checked us in. Mrs. Ray helped too.",
     ["Ms. Lee checked us in.", "Mrs. Ray helped too."]),
    ("Visit www.example.com. Then book direct.",
     ["Visit www.example.com.", "Then book direct."]),
    ("5 stars. 10 out of 10.", ["5 stars.", "10 out of 10."]),
    ("The staff was great - really great. Would return.",
     ["The staff was great - really great.", "Would return."]),
    ("Nice view of St. Mark's Square. Gorgeous at night.",
     ["Nice view of St. Mark's Square.", "Gorgeous at night."]),
    ("Was it worth it? Absolutely. 100 percent.",
     ["Was it worth it?", "Absolutely.", "100 percent."]),
    ("etc. etc. Anyway, fine hotel.", ["etc. etc. Anyway, fine hotel."]),
    ("Amazing stay overall. Best hotel in town. Truly.",
     ["Amazing stay overall.", "Best hotel in town.", "Truly."]),
    ("Ask for Prof. Hall. She knows the area.",
     ["Ask for Prof. Hall.", "She knows the area."]),
]


class TestSegmentation:
    @pytest.mark.parametrize("text,expected", SEGMENTATION_FIXTURE,
                             ids=[f"case{i}" for i in range(len(SEGMENTATION_FIXTURE))])
    def test_hand_labeled_fixture(self, text, expected):
        assert split_sentences(text) == expected

    def test_fixture_covers_fifty_sentences(self):
        assert sum(len(expected) for _, expected in SEGMENTATION_FIXTURE) >= 50

    def test_empty_review_yields_zero_sentences(self):
        assert split_sentences("") == []
        assert split_sentences("   \n  ") == []

    def test_segment_records_review_ids(self, small_entity):
        seg = segment_sentences(small_entity)
        assert len(seg) > 0
        review_ids = {r.review_id for r in small_entity.user_reviews}
        assert {s.review_id for s in seg} <= review_ids
        assert all(s.text for s in seg)

    def test_per_review_counts_sum_to_total(self, small_entity):
        seg = segment_sentences(small_entity)
        per_review = sum(len(split_sentences(r.text)) for r in small_entity.user_reviews)
        assert per_review == len(seg)

    @settings(max_examples=150)
    @given(st.text(alphabet="AaBb dD.?! '\"12,", max_size=100))
    def test_reconstruction_up_to_whitespace(self, text):
        sentences = split_sentences(text)
        assert "".join("".join(s.split()) for s in sentences) == "".join(text.split())

    @settings(max_examples=100)
    @given(st.text(alphabet="AaBb dD.?! '\"12,", max_size=100))
    def test_deterministic(self, text):
        assert split_sentences(text) == split_sentences(text)


class TestAlignment:
    def test_exact_match_aligned(self, small_entity):
        report = verify_query_alignment(small_entity)
        assert set(report.aligned) == set(small_entity.expert_review.queries)
        assert report.unmatched == ()

    def test_unmatched_query_listed(self, small_entity):
        entity = make_entity(2)
        entity.expert_review.pros["heliport"] = "Private heliport on the roof."
        report = verify_query_alignment(entity)
        assert "heliport" in report.unmatched

    def test_case_insensitive_matches_brute_force(self, corpus_entities):
        for entity in corpus_entities:
            seg = segment_sentences(entity)
            report = verify_query_alignment(entity, seg)
            for query in entity.expert_review.queries:
                # independent scan: normalized lowercase substring
                needle = " ".join(query.lower().split())
                hit = any(needle in " ".join(s.text.lower().split()) for s in seg)
                assert (query in report.aligned) == hit

    def test_mixed_case_query(self):
        entity = make_entity(3)
        entity.expert_review.cons["WIFI"] = "Slow wifi connection in every room."
        report = verify_query_alignment(entity)
        assert "WIFI" in report.aligned

    def test_injection_property(self, corpus_entities):
        # every query was injected into some review sentence by the fixture
        for entity in corpus_entities:
            report = verify_query_alignment(entity)
            assert not report.unmatched


class TestStats:
    def test_empty_list_rejected(self):
        with pytest.raises(CorpusError):
            corpus_stats([])

    def test_single_entity_averages(self, small_entity):
        stats = corpus_stats([small_entity])
        assert stats.entity_count == 1
        assert stats.avg_reviews_per_entity == float(len(small_entity.user_reviews))
        assert stats.avg_pros_per_entity == 3.0
        assert stats.avg_cons_per_entity == 2.0

    def test_hand_counted_fixture(self):
        entities = make_corpus(3)
        stats = corpus_stats(entities)
        total_reviews = sum(len(e.user_reviews) for e in entities)
        total_sentences = sum(len(segment_sentences(e)) for e in entities)
        assert stats.avg_reviews_per_entity == total_reviews / 3
        assert stats.avg_sentences_per_entity == total_sentences / 3
        assert stats.total_queries == sum(len(e.expert_review.queries) for e in entities)

    def test_query_length_histogram(self):
        entity = make_entity(1)
        stats = corpus_stats([entity])
        histogram = stats.query_length_histogram
        lengths = [len(q.split()) for q in entity.expert_review.queries]
        assert histogram["1"] == sum(1 for n in lengths if n == 1)
        assert histogram["2"] == sum(1 for n in lengths if n == 2)
        assert sum(histogram.values()) == len(lengths)
