"""Shared fixtures: synthetic corpora sized for the deterministic doubles.

Sentences are phrased cue-first ("Great rooftop pool ...") so the pattern
triplet extractor and the lexicon sentiment double both fire, expert
highlight sentences appear verbatim inside reviews (giving the extractive
oracle an exact match), and every annotated query occurs as a substring
of at least one review sentence.
"""

from __future__ import annotations

import datetime as dt
import json
import random
from pathlib import Path

import pytest

from proscons.corpus import Entity, ExpertReview, UserReview, entity_to_dict

PRO_BANK = [
    ("rooftop pool", "Great rooftop pool with clean water."),
    ("breakfast buffet", "Delicious breakfast buffet with fresh fruit."),
    ("shuttle service", "Free shuttle service to the airport."),
    ("front desk", "Friendly front desk staff at all hours."),
    ("room size", "Spacious room size with modern furniture."),
]

CON_BANK = [
    ("street noise", "Terrible street noise through thin windows."),
    ("wifi", "Slow wifi connection in every room."),
    ("elevator wait", "Broken elevator wait since our arrival."),
    ("parking fee", "Expensive parking fee charged every night."),
]

VARIANTS = {
    "rooftop pool": ["The rooftop pool felt great after a long day.",
                     "Lovely rooftop pool views over the city."],
    "breakfast buffet": ["The breakfast buffet had delicious pastries.",
                         "Fresh breakfast buffet choices every morning."],
    "shuttle service": ["The shuttle service ran free and often.",
                        "Convenient shuttle service into town."],
    "front desk": ["Helpful front desk people fixed our booking.",
                   "The front desk was friendly at midnight too."],
    "room size": ["Generous room size for a family of four.",
                  "The room size surprised us in a good way."],
    "street noise": ["Awful street noise until two in the morning.",
                     "The street noise was noisy beyond belief."],
    "wifi": ["The wifi was slow whenever it rained.",
             "Terrible wifi speed in the lobby as well."],
    "elevator wait": ["The elevator wait stretched past ten minutes.",
                      "An awful elevator wait every single morning."],
    "parking fee": ["The parking fee felt expensive for the area.",
                    "A poor deal given the parking fee on top."],
}

FILLERS = [
    "We stayed for three nights in March.",
    "The city center was a short walk away.",
    "Our flight landed late in the evening.",
    "We booked the trip months in advance.",
    "The weather held up for the whole visit.",
    "Taxis queued outside around the clock.",
]


def make_entity(entity_id: int, n_pros: int = 3, n_cons: int = 2,
                n_reviews: int = 6, seed: int | None = None) -> Entity:
    rng = random.Random(entity_id if seed is None else seed)
    pros = dict(PRO_BANK[:n_pros])
    cons = dict(CON_BANK[:n_cons])
    queries = list(pros) + list(cons)
    reviews = []
    for ridx in range(n_reviews):
        sentences = []
        for query in queries:
            if ridx == 0:
                # first review carries every expert sentence verbatim
                sentences.append((pros | cons)[query])
            elif rng.random() < 0.7:
                sentences.append(rng.choice(VARIANTS[query]))
        sentences.append(rng.choice(FILLERS))
        rng.shuffle(sentences)
        reviews.append(UserReview(
            review_id=ridx + 1,
            text=" ".join(sentences),
            rating=rng.randint(1, 5),
            helpful_votes=rng.randint(0, 20),
            publication_date=dt.date(2020, 1, 1) + dt.timedelta(days=rng.randint(0, 900)),
            user_reviews_posted=rng.randint(0, 50),
            user_cities_visited=rng.randint(0, 30),
            user_helpful_votes=rng.randint(0, 200),
        ))
    return Entity(
        entity_id=entity_id,
        entity_name=f"Sample Hotel {entity_id}",
        expert_review=ExpertReview(pros=pros, cons=cons),
        user_reviews=tuple(reviews),
    )


def make_corpus(n_entities: int = 3) -> list[Entity]:
    return [make_entity(i + 1) for i in range(n_entities)]


def write_corpus_file(entities, path: Path) -> Path:
    path.write_text(json.dumps([entity_to_dict(e) for e in entities], indent=2) + "\n",
                    encoding="utf-8")
    return path


@pytest.fixture
def small_entity() -> Entity:
    return make_entity(1)


@pytest.fixture
def corpus_entities() -> list[Entity]:
    return make_corpus(3)


@pytest.fixture
def corpus_file(tmp_path, corpus_entities) -> Path:
    return write_corpus_file(corpus_entities, tmp_path / "corpus.json")
