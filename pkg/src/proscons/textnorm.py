"""Normalization pipeline for lexical (BM25) retrieval scoring.

Stages, applied in order: lowercase; strip HTML tags, URLs, and email
addresses; drop non-ASCII characters; expand contractions from a fixed
table; protect special tokens (``24-hour`` -> ``twentyfourhour``,
``24/7`` -> ``twentyfourseven``, ``wi-fi`` -> placeholder, reverted to
``wifi`` at the end); replace punctuation, digits, hyphens, and slashes
with spaces; lemmatize tokens with an irregular-form lookup plus a small
POS-free suffix-rule table; drop closed-class function words; collapse
whitespace.

The output is only ever used to compute relevance scores; callers keep
the original sentences for downstream consumers.
"""

from __future__ import annotations

import re
from typing import Mapping

__all__ = ["preprocess_for_bm25", "DEFAULT_PROTECTED_TOKENS", "lemmatize_token"]

_HTML_RE = re.compile(r"<[^>]+>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_EMAIL_RE = re.compile(r"\S+@\S+\.\S+")
_NON_LETTER_RE = re.compile(r"[^a-z\s]")
_WS_RE = re.compile(r"\s+")

# Special tokens mapped to a pure-alphabetic surface form that survives the
# punctuation/digit sweep. Each is replaced by a "spl"-prefixed placeholder
# so no later stage touches it, and the placeholder is rewritten to the
# final form at the very end.
DEFAULT_PROTECTED_TOKENS: Mapping[str, str] = {
    "24-hour": "twentyfourhour",
    "24/7": "twentyfourseven",
    "wi-fi": "wifi",
}

_PLACEHOLDER_PREFIX = "spl"

# Exact-match expansion table; applied on lowercased text before the
# generic suffix fallbacks below.
_CONTRACTIONS = {
    "ain't": "is not",
    "aren't": "are not",
    "can't": "cannot",
    "can't've": "cannot have",
    "could've": "could have",
    "couldn't": "could not",
    "didn't": "did not",
    "doesn't": "does not",
    "don't": "do not",
    "hadn't": "had not",
    "hasn't": "has not",
    "haven't": "have not",
    "he'd": "he would",
    "he'll": "he will",
    "he's": "he is",
    "here's": "here is",
    "how's": "how is",
    "i'd": "i would",
    "i'll": "i will",
    "i'm": "i am",
    "i've": "i have",
    "isn't": "is not",
    "it'd": "it would",
    "it'll": "it will",
    "it's": "it is",
    "let's": "let us",
    "mightn't": "might not",
    "must've": "must have",
    "mustn't": "must not",
    "needn't": "need not",
    "shan't": "shall not",
    "she'd": "she would",
    "she'll": "she will",
    "she's": "she is",
    "should've": "should have",
    "shouldn't": "should not",
    "that's": "that is",
    "there's": "there is",
    "they'd": "they would",
    "they'll": "they will",
    "they're": "they are",
    "they've": "they have",
    "wasn't": "was not",
    "we'd": "we would",
    "we'll": "we will",
    "we're": "we are",
    "we've": "we have",
    "weren't": "were not",
    "what's": "what is",
    "when's": "when is",
    "where's": "where is",
    "who's": "who is",
    "won't": "will not",
    "would've": "would have",
    "wouldn't": "would not",
    "you'd": "you would",
    "you'll": "you will",
    "you're": "you are",
    "you've": "you have",
}

_CONTRACTION_RE = re.compile(
    r"\b(" + "|".join(re.escape(k) for k in sorted(_CONTRACTIONS, key=len, reverse=True)) + r")\b"
)

# Generic fallbacks for forms not in the table (possessives and rare
# contractions); the table wins because it runs first.
_GENERIC_CONTRACTIONS = [
    (re.compile(r"(\w)n't\b"), r"\1 not"),
    (re.compile(r"(\w)'re\b"), r"\1 are"),
    (re.compile(r"(\w)'ve\b"), r"\1 have"),
    (re.compile(r"(\w)'ll\b"), r"\1 will"),
    (re.compile(r"(\w)'m\b"), r"\1 am"),
    (re.compile(r"(\w)'d\b"), r"\1 would"),
    (re.compile(r"(\w)'s\b"), r"\1"),
]

# Closed-class function words removed after lemmatization. Deliberately
# excludes negations ("not", "no"), possessives such as "our", and
# particles such as "out" that carry aspect or polarity signal.
_DROP_WORDS = frozenset(
    """
    i me you he she it we they them him her us
    a an the
    and or but nor
    at in on of to for with from by as into onto over under
    is am are was were be been being
    do does did done doing
    have has had having
    will would shall should may might must
    this that these those there here
    what which who whom whose when where why how
    s t d ll re ve m
    """.split()
)

# Irregular English forms mapped to their base. Covers the common
# irregular verbs (past and participle), irregular plurals, suppletive
# comparatives, and a handful of frequent latinate -e verbs whose inflected
# forms the suffix rules cannot restore.
_IRREGULAR_LEMMAS = {
    # be / auxiliaries
    "am": "be", "is": "be", "are": "be", "was": "be", "were": "be",
    "been": "be", "being": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do", "doing": "do",
    # high-frequency irregular verbs
    "went": "go", "gone": "go", "going": "go", "goes": "go",
    "got": "get", "gotten": "get",
    "made": "make", "making": "make",
    "said": "say", "saying": "say",
    "came": "come", "coming": "come",
    "took": "take", "taken": "take", "taking": "take",
    "saw": "see", "seen": "see", "seeing": "see",
    "knew": "know", "known": "know",
    "gave": "give", "given": "give", "giving": "give",
    "found": "find",
    "thought": "think",
    "told": "tell",
    "became": "become", "becoming": "become",
    "left": "leave", "leaving": "leave",
    "felt": "feel",
    "kept": "keep",
    "met": "meet",
    "meant": "mean",
    "paid": "pay",
    "put": "put",
    "let": "let",
    "set": "set",
    "sat": "sit",
    "stood": "stand",
    "lost": "lose", "losing": "lose",
    "won": "win",
    "ran": "run",
    "ate": "eat", "eaten": "eat", "eating": "eat",
    "drank": "drink", "drunk": "drink",
    "slept": "sleep",
    "spoke": "speak", "spoken": "speak",
    "wrote": "write", "written": "write", "writing": "write",
    "read": "read", "reading": "read",
    "heard": "hear",
    "held": "hold",
    "brought": "bring",
    "bought": "buy",
    "built": "build",
    "sold": "sell",
    "sent": "send",
    "spent": "spend",
    "began": "begin", "begun": "begin",
    "broke": "break", "broken": "break",
    "chose": "choose", "chosen": "choose", "choosing": "choose",
    "drove": "drive", "driven": "drive", "driving": "drive",
    "fell": "fall", "fallen": "fall",
    "flew": "fly", "flown": "fly",
    "forgot": "forget", "forgotten": "forget",
    "grew": "grow", "grown": "grow",
    "hid": "hide", "hidden": "hide", "hiding": "hide",
    "hit": "hit",
    "hung": "hang",
    "laid": "lay",
    "lay": "lie", "lain": "lie",
    "led": "lead",
    "lent": "lend",
    "rang": "ring", "rung": "ring",
    "rose": "rise", "risen": "rise", "rising": "rise",
    "sang": "sing", "sung": "sing",
    "shook": "shake", "shaken": "shake", "shaking": "shake",
    "showed": "show", "shown": "show",
    "shut": "shut",
    "swam": "swim", "swum": "swim",
    "taught": "teach",
    "tore": "tear", "torn": "tear",
    "threw": "throw", "thrown": "throw",
    "understood": "understand",
    "woke": "wake", "woken": "wake", "waking": "wake",
    "wore": "wear", "worn": "wear",
    "caught": "catch",
    "cost": "cost",
    "cut": "cut",
    "dealt": "deal",
    "fed": "feed",
    "fought": "fight",
    "froze": "freeze", "frozen": "freeze",
    "lit": "light",
    "rode": "ride", "ridden": "ride", "riding": "ride",
    "sought": "seek",
    "stole": "steal", "stolen": "steal",
    "stuck": "stick",
    "struck": "strike",
    "swept": "sweep",
    "swung": "swing",
    # frequent -e verbs whose inflections the suffix rules cannot repair
    "used": "use", "using": "use",
    "loved": "love", "loving": "love",
    "liked": "like", "liking": "like",
    "lived": "live", "living": "live",
    "moved": "move", "moving": "move",
    "believed": "believe", "believing": "believe",
    "received": "receive", "receiving": "receive",
    "arrived": "arrive", "arriving": "arrive",
    "decided": "decide", "deciding": "decide",
    "provided": "provide", "providing": "provide",
    "noticed": "notice", "noticing": "notice",
    "included": "include", "including": "include",
    "served": "serve", "serving": "serve",
    "changed": "change", "changing": "change",
    "charged": "charge", "charging": "charge",
    "closed": "close", "closing": "close",
    "updated": "update", "updating": "update",
    "renovated": "renovate", "renovating": "renovate",
    "located": "locate",
    "dated": "date",
    "died": "die", "dying": "die",
    "lied": "lie",
    "tied": "tie",
    # irregular plurals
    "men": "man", "women": "woman", "children": "child",
    "feet": "foot", "teeth": "tooth", "mice": "mouse", "geese": "goose",
    "wives": "wife", "knives": "knife", "lives": "life", "leaves": "leaf",
    "shelves": "shelf", "halves": "half",
    # suppletive comparatives
    "better": "good", "best": "good", "worse": "bad", "worst": "bad",
}

_VOWELS = set("aeiou")


def _has_vowel(word: str) -> bool:
    return any(c in _VOWELS for c in word)


def _vowel_groups(word: str) -> int:
    groups = 0
    prev_vowel = False
    for c in word:
        is_vowel = c in _VOWELS
        if is_vowel and not prev_vowel:
            groups += 1
        prev_vowel = is_vowel
    return groups


def _repair_stem(stem: str) -> str:
    # running -> runn -> run; doubled l/s/z endings are legitimate (roll, miss)
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in "lsz" and stem[-1] not in _VOWELS:
        return stem[:-1]
    # mak -> make, lov -> love; only for single-vowel-group stems ending CVC
    if (
        len(stem) >= 3
        and _vowel_groups(stem) == 1
        and stem[-1] not in _VOWELS
        and stem[-1] not in "wxy"
        and stem[-2] in _VOWELS
        and stem[-3] not in _VOWELS
    ):
        return stem + "e"
    return stem


def lemmatize_token(token: str) -> str:
    """Reduce one lowercase token to its base form.

    Irregular forms come from a fixed lookup; regular inflections go
    through a conservative suffix table. Bare plural "-s" is deliberately
    not stripped: review vocabulary keeps its surface plural so the output
    is a fixed point of the pipeline.
    """
    irregular = _IRREGULAR_LEMMAS.get(token)
    if irregular is not None:
        return irregular
    if token.endswith("sses"):
        return token[:-2]
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith("ied") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith("eed"):
        return token
    for suffix in ("ing", "ed"):
        if token.endswith(suffix):
            stem = token[: -len(suffix)]
            if len(stem) >= 3 and _has_vowel(stem):
                return _repair_stem(stem)
    return token


def _placeholder(surface: str) -> str:
    return _PLACEHOLDER_PREFIX + surface


def preprocess_for_bm25(text: str, protected: Mapping[str, str] | None = None) -> str:
    """Normalize free text into the token string scored by BM25.

    ``protected`` extends/overrides the default special-token map; keys are
    matched case-insensitively on the lowercased text, values must be
    purely alphabetic.
    """
    tokens_map = dict(DEFAULT_PROTECTED_TOKENS)
    if protected:
        tokens_map.update(protected)
    for surface in tokens_map.values():
        if not surface.isalpha():
            raise ValueError(f"protected surface form must be alphabetic: {surface!r}")

    out = text.lower()
    out = _HTML_RE.sub(" ", out)
    out = _URL_RE.sub(" ", out)
    out = _EMAIL_RE.sub(" ", out)
    out = out.encode("ascii", "ignore").decode("ascii")
    out = _CONTRACTION_RE.sub(lambda m: _CONTRACTIONS[m.group(1)], out)
    for pattern, repl in _GENERIC_CONTRACTIONS:
        out = pattern.sub(repl, out)
    for token, surface in tokens_map.items():
        out = re.sub(
            r"(?<![a-z0-9])" + re.escape(token.lower()) + r"(?![a-z0-9])",
            _placeholder(surface),
            out,
        )
    out = _NON_LETTER_RE.sub(" ", out)

    placeholders = {_placeholder(surface): surface for surface in tokens_map.values()}
    words = []
    for raw in out.split():
        if raw in placeholders:
            words.append(placeholders[raw])
            continue
        lemma = lemmatize_token(raw)
        if lemma in _DROP_WORDS:
            continue
        words.append(lemma)
    return " ".join(words)
