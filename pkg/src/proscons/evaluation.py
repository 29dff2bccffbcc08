"""Reference-based scoring and baseline generators.

ROUGE-1/2/L F1 over lowercased whitespace tokens (no stemming, no
stopword removal), sentiment-alignment rates (share of generated PROS
classified positive / CONS classified negative), four extractive
baselines (random, extractive oracle, textrank, lexrank), and the
rubric-driven judge that scores a system summary against the expert one
on five 1-5 dimensions.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Entity, ExpertReview, segment_sentences
from .providers import ChatRequest, GenerationConfig
from .synthesizer import Summary, extract_structured

__all__ = [
    "EvaluationError",
    "RougeScores",
    "AlignmentRates",
    "JudgeScores",
    "rouge",
    "score_summary",
    "score_sections_with",
    "alignment_rates",
    "baseline_random",
    "baseline_oracle",
    "baseline_graph_rank",
    "pagerank",
    "judge_summary",
]

PAGERANK_DAMPING = 0.85
PAGERANK_TOL = 1e-6
PAGERANK_MAX_ITER = 100
LEXRANK_THRESHOLD = 0.1
SECTION_SEPARATOR = ". "


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RougeScores:
    r1: float
    r2: float
    rl: float

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "rl": self.rl}


@dataclass(frozen=True)
class AlignmentRates:
    tpr: float | None  # percent of PROS classified positive
    tnr: float | None  # percent of CONS classified negative
    pros_evaluated: int
    pros_positive: int
    cons_evaluated: int
    cons_negative: int

    def to_dict(self) -> dict:
        return {
            "tpr": self.tpr,
            "tnr": self.tnr,
            "pros_evaluated": self.pros_evaluated,
            "pros_positive": self.pros_positive,
            "cons_evaluated": self.cons_evaluated,
            "cons_negative": self.cons_negative,
        }


@dataclass(frozen=True)
class JudgeScores:
    ar: int
    nr: int
    sa: int
    of: int
    ou: int

    def __post_init__(self) -> None:
        for name in ("ar", "nr", "sa", "of", "ou"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ValueError(f"judge score {name} must be an integer in [1, 5], got {value!r}")

    def to_dict(self) -> dict:
        return {"ar": self.ar, "nr": self.nr, "sa": self.sa, "of": self.of, "ou": self.ou}


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _rouge_n(cand: list[str], ref: list[str], n: int) -> float:
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    total_cand = sum(cand_counts.values())
    total_ref = sum(ref_counts.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return _f1(matches / total_cand, matches / total_ref)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def _rouge_l(cand: list[str], ref: list[str]) -> float:
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    return _f1(lcs / len(cand), lcs / len(ref))


def rouge(candidate: str, reference: str) -> RougeScores:
    """Unigram/bigram overlap F1 and LCS F1; empty-vs-empty scores 0 by
    convention."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    return RougeScores(
        r1=_rouge_n(cand, ref, 1),
        r2=_rouge_n(cand, ref, 2),
        rl=_rouge_l(cand, ref),
    )


def _join_section(system: Mapping[str, str], expert_keys: Sequence[str]) -> str:
    ordered = [system[key] for key in expert_keys if key in system]
    ordered += [text for key, text in system.items() if key not in expert_keys]
    return SECTION_SEPARATOR.join(ordered)


def score_summary(system_pros: Mapping[str, str] | None,
                  system_cons: Mapping[str, str] | None,
                  expert: ExpertReview) -> tuple[RougeScores | None, RougeScores | None]:
    """Section-level ROUGE: highlights are joined in expert key order and
    scored against the joined expert section. A missing (``None``) section
    yields absent scores; an empty one scores 0."""
    def one(system: Mapping[str, str] | None, reference: Mapping[str, str]) -> RougeScores | None:
        if system is None:
            return None
        joined_sys = _join_section(system, list(reference))
        joined_ref = SECTION_SEPARATOR.join(reference.values())
        return rouge(joined_sys, joined_ref)

    return one(system_pros, expert.pros), one(system_cons, expert.cons)


def score_sections_with(scorer, system_pros: Mapping[str, str] | None,
                        system_cons: Mapping[str, str] | None,
                        expert: ExpertReview) -> tuple[float | None, float | None]:
    """Slot for external section scorers (embedding-based metrics and the
    like): ``scorer(candidate_text, reference_text) -> float`` is applied
    to the same joined sections that ROUGE sees."""
    def one(system: Mapping[str, str] | None, reference: Mapping[str, str]) -> float | None:
        if system is None:
            return None
        return float(scorer(_join_section(system, list(reference)),
                            SECTION_SEPARATOR.join(reference.values())))

    return one(system_pros, expert.pros), one(system_cons, expert.cons)


def alignment_rates(summary: Summary, sentiment) -> AlignmentRates:
    """Classify every generated highlight; TPR/TNR as percentages over the
    evaluated PROS/CONS."""
    if not summary.pros and not summary.cons:
        raise EvaluationError("summary has no highlights to classify")
    pros = list(summary.pros.values())
    cons = list(summary.cons.values())
    pros_positive = sum(1 for text in pros if sentiment.classify(text) == "positive")
    cons_negative = sum(1 for text in cons if sentiment.classify(text) == "negative")
    return AlignmentRates(
        tpr=100.0 * pros_positive / len(pros) if pros else None,
        tnr=100.0 * cons_negative / len(cons) if cons else None,
        pros_evaluated=len(pros),
        pros_positive=pros_positive,
        cons_evaluated=len(cons),
        cons_negative=cons_negative,
    )


def _positional_keys(expert_section: Mapping[str, str], count: int, prefix: str) -> list[str]:
    keys = list(expert_section)[:count]
    while len(keys) < count:
        keys.append(f"{prefix} {len(keys) + 1}")
    return keys


def baseline_random(entity: Entity, counts: tuple[int, int], seed: int) -> Summary:
    """Uniformly sample disjoint PROS and CONS sentence sets; PROS are
    drawn first and removed before CONS are drawn."""
    n_pros, n_cons = counts
    sentences = segment_sentences(entity).sentences
    if len(sentences) < n_pros + n_cons:
        raise EvaluationError(
            f"entity {entity.entity_id}: {len(sentences)} sentences cannot fill "
            f"{n_pros} pros + {n_cons} cons")
    rng = random.Random(seed)
    indices = list(range(len(sentences)))
    pros_idx = rng.sample(indices, n_pros)
    remaining = [i for i in indices if i not in set(pros_idx)]
    cons_idx = rng.sample(remaining, n_cons)
    expert = entity.expert_review
    pros_keys = _positional_keys(expert.pros, n_pros, "pro")
    cons_keys = _positional_keys(expert.cons, n_cons, "con")
    return Summary(
        entity_id=entity.entity_id,
        entity_name=entity.entity_name,
        pros={key: sentences[i].text for key, i in zip(pros_keys, pros_idx)},
        cons={key: sentences[i].text for key, i in zip(cons_keys, cons_idx)},
        meta={"system": "random", "seed": seed,
              "pro_sentence_positions": list(pros_idx),
              "con_sentence_positions": list(cons_idx)},
    )


def baseline_oracle(entity: Entity, expert: ExpertReview, sentiment) -> Summary:
    """Upper-bound extractive baseline: per expert sentence, the candidate
    review sentence with the highest ROUGE-L F1 among candidates whose
    classified sentiment matches the section; score ties resolve to the
    earlier corpus position. Sections with no sentiment-admissible
    candidate fall back to the unrestricted argmax and are flagged."""
    sentences = segment_sentences(entity).sentences
    if not sentences:
        raise EvaluationError(f"entity {entity.entity_id}: no sentences to select from")
    labels = [sentiment.classify(s.text) for s in sentences]
    fallbacks: list[str] = []

    def pick(reference: str, wanted: str, query: str) -> str:
        admissible = [i for i, label in enumerate(labels) if label == wanted]
        if not admissible:
            admissible = list(range(len(sentences)))
            fallbacks.append(query)
        best_idx, best_score = admissible[0], -1.0
        for i in admissible:
            score = rouge(sentences[i].text, reference).rl
            if score > best_score:
                best_idx, best_score = i, score
        return sentences[best_idx].text

    pros = {q: pick(ref, "positive", q) for q, ref in expert.pros.items()}
    cons = {q: pick(ref, "negative", q) for q, ref in expert.cons.items()}
    meta: dict = {"system": "oracle"}
    if fallbacks:
        meta["sentiment_fallback_queries"] = fallbacks
    return Summary(entity_id=entity.entity_id, entity_name=entity.entity_name,
                   pros=pros, cons=cons, meta=meta)


def _graph_tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _textrank_matrix(token_sets: list[set[str]]) -> np.ndarray:
    n = len(token_sets)
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            denom = len(token_sets[i]) + len(token_sets[j])
            if denom == 0:
                continue
            overlap = len(token_sets[i] & token_sets[j])
            if overlap:
                weights[i, j] = weights[j, i] = overlap / denom
    return weights


def _lexrank_matrix(token_lists: list[list[str]]) -> np.ndarray:
    n = len(token_lists)
    counts = [Counter(toks) for toks in token_lists]
    norms = [np.sqrt(sum(v * v for v in c.values())) for c in counts]
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if norms[i] == 0 or norms[j] == 0:
                continue
            shared = counts[i].keys() & counts[j].keys()
            dot = sum(counts[i][t] * counts[j][t] for t in shared)
            cos = dot / (norms[i] * norms[j])
            if cos >= LEXRANK_THRESHOLD:
                weights[i, j] = weights[j, i] = cos
    return weights


def similarity_matrix(texts: Sequence[str], variant: str) -> np.ndarray:
    """Sentence-similarity weights: token overlap normalized by combined
    vocabulary size (textrank) or term-frequency cosine thresholded at 0.1
    (lexrank). Diagonal is zero."""
    if variant == "textrank":
        return _textrank_matrix([set(_graph_tokens(t)) for t in texts])
    if variant == "lexrank":
        return _lexrank_matrix([_graph_tokens(t) for t in texts])
    raise ValueError(f"unknown graph-rank variant: {variant!r}")


def google_matrix(weights: np.ndarray, damping: float = PAGERANK_DAMPING) -> np.ndarray:
    """Column-stochastic transition matrix with teleport.

    Rows without out-weight (isolated sentences in a symmetric similarity
    graph) spread their rank over the connected nodes only, so an isolated
    node's stationary score is exactly the teleport floor (1-d)/N while
    the total mass still sums to 1. With no edges at all the spread is
    uniform.
    """
    n = weights.shape[0]
    row_sums = weights.sum(axis=1)
    connected = row_sums > 0
    transition = np.zeros((n, n))
    for j in range(n):
        if connected[j]:
            transition[:, j] = weights[j] / row_sums[j]
        elif connected.any():
            transition[connected, j] = 1.0 / connected.sum()
        else:
            transition[:, j] = 1.0 / n
    return damping * transition + (1.0 - damping) / n


def pagerank(weights: np.ndarray, damping: float = PAGERANK_DAMPING,
             tol: float = PAGERANK_TOL, max_iter: int = PAGERANK_MAX_ITER) -> np.ndarray:
    """Power iteration on the teleported transition matrix; converged
    scores sum to 1."""
    n = weights.shape[0]
    if n == 0:
        return np.zeros(0)
    matrix = google_matrix(weights, damping)
    scores = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        updated = matrix @ scores
        done = np.abs(updated - scores).sum() < tol
        scores = updated
        if done:
            break
    return scores


def baseline_graph_rank(entity: Entity, counts: tuple[int, int], variant: str,
                        sentiment) -> Summary:
    """Centrality baseline: the highest-ranked positive sentences become
    PROS and the highest-ranked negative ones CONS; a section that cannot
    be filled is returned short and flagged."""
    n_pros, n_cons = counts
    sentences = segment_sentences(entity).sentences
    if not sentences:
        raise EvaluationError(f"entity {entity.entity_id}: no sentences to rank")
    weights = similarity_matrix([s.text for s in sentences], variant)
    scores = pagerank(weights)
    order = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    labels = [sentiment.classify(s.text) for s in sentences]
    pros_idx = [i for i in order if labels[i] == "positive"][:n_pros]
    cons_idx = [i for i in order if labels[i] == "negative"][:n_cons]
    expert = entity.expert_review
    pros_keys = _positional_keys(expert.pros, len(pros_idx), "pro")
    cons_keys = _positional_keys(expert.cons, len(cons_idx), "con")
    meta: dict = {"system": variant}
    short = {}
    if len(pros_idx) < n_pros:
        short["pros"] = n_pros - len(pros_idx)
    if len(cons_idx) < n_cons:
        short["cons"] = n_cons - len(cons_idx)
    if short:
        meta["short_sections"] = short
    return Summary(
        entity_id=entity.entity_id,
        entity_name=entity.entity_name,
        pros={key: sentences[i].text for key, i in zip(pros_keys, pros_idx)},
        cons={key: sentences[i].text for key, i in zip(cons_keys, cons_idx)},
        meta=meta,
    )


_JUDGE_RUBRIC = """\
Score the system summary against the expert summary on five dimensions,
each as an integer from 1 (worst) to 5 (best):

ar - topical coverage: how many of the expert summary's aspects the
system summary also covers, in any wording. 5 = essentially all aspects
present; 3 = some covered but important ones missing; 1 = almost none.
nr - non-redundancy: whether each point appears only once. 5 = no
repetition; 3 = occasional repeats; 1 = pervasive repetition.
sa - sentiment agreement: whether the tone per shared aspect matches.
5 = polarity agrees throughout; 3 = mixed agreement; 1 = frequently
inverted polarity.
of - grounding of claims: whether the system summary's claims are
supported by the expert summary. 5 = every claim supported or a fair
restatement; 3 = several weakly grounded claims; 1 = mostly unsupported.
ou - decision usefulness: whether the system summary alone would let a
customer decide. 5 = as informative as the expert version or more;
3 = basic guidance only; 1 = unhelpful or confusing."""

_JUDGE_TEMPLATE = """\
{rubric}

Expert summary:
PROS:
{expert_pros}
CONS:
{expert_cons}

System summary:
PROS:
{system_pros}
CONS:
{system_cons}

Respond with a JSON object with exactly the integer fields
{{"ar": ..., "nr": ..., "sa": ..., "of": ..., "ou": ...}} and nothing else."""


def _bullets(section: Mapping[str, str]) -> str:
    if not section:
        return "- (none)"
    return "\n".join(f"- {text}" for text in section.values())


def judge_summary(summary: Summary, expert: ExpertReview, chat,
                  gen: GenerationConfig | None = None) -> JudgeScores:
    """Rubric scoring of a system summary against the expert summary.

    Decoding is pinned to temperature 0 for reproducibility. Missing or
    out-of-range fields raise with the raw model text attached.
    """
    if not (summary.pros or summary.cons):
        raise EvaluationError("cannot judge an empty system summary")
    if not (expert.pros or expert.cons):
        raise EvaluationError("cannot judge against an empty expert summary")
    gen = gen or GenerationConfig()
    gen = GenerationConfig(
        max_new_tokens=gen.max_new_tokens, temperature=0.0, top_p=gen.top_p,
        long_context_max_tokens=gen.long_context_max_tokens)
    prompt = _JUDGE_TEMPLATE.format(
        rubric=_JUDGE_RUBRIC,
        expert_pros=_bullets(expert.pros),
        expert_cons=_bullets(expert.cons),
        system_pros=_bullets(summary.pros),
        system_cons=_bullets(summary.cons),
    )
    response = chat.complete(ChatRequest(prompt=prompt, config=gen))
    fields = extract_structured(response.text, ["ar", "nr", "sa", "of", "ou"])
    try:
        return JudgeScores(**{k: int(fields[k]) for k in ("ar", "nr", "sa", "of", "ou")})
    except (TypeError, ValueError) as exc:
        raise EvaluationError(
            f"judge returned invalid scores ({exc}); raw output: {response.text!r}") from exc
