"""Word-level sentiment mining of review comments with a FEEL-format lexicon.

Pipeline: sample accommodations, keep each one's most recent comments,
translate (identity by default), normalize and tokenize, remove stopwords,
then count polar words, word frequencies and word associations over binary
occurrence vectors.
"""
from __future__ import annotations

import csv
import logging
import math
import random
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from . import kernels
from .errors import MonitorError, UndefinedCorrelation, ValidationError
from .listing import UNKNOWN_COUNTRY, AccommodationRecord, ReviewRecord

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"
UNASSIGNED_GROUP = "unassigned"
DEFAULT_MIN_CORR = 0.25

_APOSTROPHES = str.maketrans({"’": "'", "ʼ": "'", "‘": "'", "‐": "-", "‑": "-"})
_TOKEN_RE = re.compile(r"[^\W\d_]+(?:['-][^\W\d_]+)*")


def normalize_word(word: str) -> str:
    """NFC + lowercase, with typographic apostrophes and hyphens folded to ASCII."""
    text = unicodedata.normalize("NFC", word).translate(_APOSTROPHES).lower()
    return unicodedata.normalize("NFC", text)


# ---------------------------------------------------------------------------
# Resources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SentimentLexicon:
    polarity: dict[str, str]
    emotions: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        bad = {w: p for w, p in self.polarity.items() if p not in (POSITIVE, NEGATIVE)}
        if bad:
            raise ValidationError(f"unknown polarity values: {bad}")

    def __len__(self) -> int:
        return len(self.polarity)

    def get(self, word: str) -> str | None:
        return self.polarity.get(normalize_word(word))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "SentimentLexicon":
        polarity: dict[str, str] = {}
        for word, pol in pairs:
            key = normalize_word(word.strip())
            pol = _polarity_label(pol)
            if polarity.get(key, pol) != pol:
                raise ValidationError(f"lexicon word {key!r} has both polarities")
            polarity[key] = pol
        return cls(polarity)

    @classmethod
    def load(cls, path: str | Path) -> "SentimentLexicon":
        """Read a semicolon table ``word;polarity[;emotion...]``.

        The FEEL distribution header (``id;word;polarity;joy;fear;...``) is
        recognised; emotion columns holding 1 become tags.
        """
        polarity: dict[str, str] = {}
        emotions: dict[str, tuple[str, ...]] = {}
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = [r for r in csv.reader(fh, delimiter=";") if r and any(c.strip() for c in r)]
        if not rows:
            return cls({})
        header = [c.strip().lower() for c in rows[0]]
        if "word" in header and "polarity" in header:
            wi, pi = header.index("word"), header.index("polarity")
            emo_cols = [(i, h) for i, h in enumerate(header) if i not in (wi, pi) and h != "id"]
            body = rows[1:]
        else:
            wi, pi, emo_cols, body = 0, 1, None, rows
        for lineno, row in enumerate(body, start=2 if emo_cols is not None else 1):
            if len(row) <= max(wi, pi):
                raise ValidationError(f"{path}:{lineno}: expected word;polarity")
            key = normalize_word(row[wi].strip())
            pol = _polarity_label(row[pi])
            if polarity.get(key, pol) != pol:
                raise ValidationError(f"{path}:{lineno}: {key!r} listed with both polarities")
            polarity[key] = pol
            if emo_cols is None:
                tags = tuple(c.strip() for c in row[2:] if c.strip())
            else:
                tags = tuple(h for i, h in emo_cols if i < len(row) and row[i].strip() == "1")
            if tags:
                emotions[key] = tags
        return cls(polarity, emotions)


def _polarity_label(text: str) -> str:
    t = text.strip().lower()
    if t in ("positive", "pos", "+", "1"):
        return POSITIVE
    if t in ("negative", "neg", "-", "−", "-1"):
        return NEGATIVE
    raise ValidationError(f"unknown polarity {text!r}")


class StopList(frozenset):
    """Normalized stopword set."""

    def __new__(cls, words: Iterable[str] = ()):
        return super().__new__(cls, (normalize_word(w.strip()) for w in words if w.strip()))

    @classmethod
    def load(cls, *paths: str | Path) -> "StopList":
        words: list[str] = []
        for path in paths:
            with open(path, encoding="utf-8-sig") as fh:
                words.extend(line.strip() for line in fh if line.strip() and not line.startswith("#"))
        return cls(words)


def default_stopwords_path() -> Path:
    return Path(__file__).with_name("data") / "stopwords-iso-fr.txt"


class Translator(Protocol):
    def translate(self, text: str, source_language: str | None) -> str: ...

    def handles(self, source_language: str | None) -> bool: ...


class IdentityTranslator:
    """Returns text unchanged; only French (or untagged) text counts as translated."""

    def translate(self, text: str, source_language: str | None) -> str:
        return text

    def handles(self, source_language: str | None) -> bool:
        return source_language is None or source_language.lower().split("-")[0] == "fr"


class TranslationError(MonitorError):
    pass


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def sample_size(n: int, fraction) -> int:
    if n == 0:
        return 0
    exact = Fraction(str(fraction)) * n
    return max(1, math.floor(exact + Fraction(1, 2)))


def sample_accommodations(records: Sequence[AccommodationRecord], fraction, seed: int) -> list[AccommodationRecord]:
    """Seeded sample of ``round_half_up(fraction * n)`` records (at least one).

    Input order does not matter: records are sorted by accommodation_id before
    the seeded permutation is drawn. The result keeps that sorted order.
    """
    frac = Fraction(str(fraction))
    if not 0 < frac <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ordered = sorted(records, key=lambda r: (r.accommodation_id, r.snapshot_id))
    k = sample_size(len(ordered), frac)
    picks = sorted(random.Random(seed).sample(range(len(ordered)), k))
    return [ordered[i] for i in picks]


def latest_comments(reviews: Iterable[ReviewRecord], k: int = 10) -> list[ReviewRecord]:
    """The ``k`` newest reviews; equal dates order by review_id descending."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return sorted(reviews, key=lambda r: (r.posted_at, r.review_id), reverse=True)[:k]


# ---------------------------------------------------------------------------
# Text processing
# ---------------------------------------------------------------------------


def clean_tokenize(text: str, stoplist: frozenset = frozenset(),
                   translator: Translator | None = None, language: str | None = None) -> list[str]:
    if translator is not None:
        try:
            text = translator.translate(text, language)
        except Exception as exc:
            raise TranslationError(f"translation failed: {exc}") from exc
    text = normalize_word(text)
    return [t for t in _TOKEN_RE.findall(text) if len(t) > 1 and t not in stoplist]


@dataclass(frozen=True)
class Document:
    review_id: str
    accommodation_id: str
    territory_id: str
    reviewer_country: str
    tokens: tuple[str, ...]
    polar_eligible: bool = True


@dataclass(frozen=True)
class PolarityCounts:
    positive: int
    negative: int
    unlabeled: int

    @property
    def total(self) -> int:
        return self.positive + self.negative + self.unlabeled


def polarity_counts(tokens: Iterable[str], lexicon: SentimentLexicon) -> PolarityCounts:
    p = n = u = 0
    pol = lexicon.polarity
    for tok in tokens:
        label = pol.get(tok)
        if label == POSITIVE:
            p += 1
        elif label == NEGATIVE:
            n += 1
        else:
            u += 1
    return PolarityCounts(p, n, u)


@dataclass(frozen=True)
class RatioResult:
    ratio: float | None
    positive: int
    negative: int

    @property
    def polar(self) -> int:
        return self.positive + self.negative


def positive_ratio(documents: Iterable[Document], lexicon: SentimentLexicon) -> RatioResult:
    """Positive words over all polar words; ``ratio`` is None when no polar word occurs."""
    p = n = 0
    for doc in documents:
        if not doc.polar_eligible:
            continue
        c = polarity_counts(doc.tokens, lexicon)
        p += c.positive
        n += c.negative
    return RatioResult(p / (p + n) if p + n else None, p, n)


GroupFn = Callable[[Document], str]


def group_key(*attrs: str) -> GroupFn:
    """Key function joining document attributes, e.g. ``territory_id=T|reviewer_country=GB``."""
    if not attrs:
        return lambda d: "all"
    return lambda d: "|".join(f"{a}={getattr(d, a)}" for a in attrs)


def positive_ratios(documents: Iterable[Document], lexicon: SentimentLexicon,
                    key: GroupFn) -> dict[str, RatioResult]:
    groups: dict[str, list[Document]] = defaultdict(list)
    for d in documents:
        groups[key(d)].append(d)
    return {g: positive_ratio(groups[g], lexicon) for g in sorted(groups)}


def frequency_table(documents: Iterable[Document], key: GroupFn | None = None):
    """Token counts sorted by (count desc, word asc); grouped dict of lists when ``key`` is given."""
    def ordered(counter: Counter) -> list[tuple[str, int]]:
        return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))

    if key is None:
        total: Counter = Counter()
        for d in documents:
            total.update(d.tokens)
        return ordered(total)
    grouped: dict[str, Counter] = defaultdict(Counter)
    for d in documents:
        grouped[key(d)].update(d.tokens)
    return {g: ordered(grouped[g]) for g in sorted(grouped)}


def origin_structure(documents: Iterable[Document]) -> dict[str, float]:
    counts = Counter((d.reviewer_country or UNKNOWN_COUNTRY) for d in documents)
    total = sum(counts.values())
    return {c: counts[c] / total for c in sorted(counts)} if total else {}


# ---------------------------------------------------------------------------
# Term-document matrix and associations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TermDocumentMatrix:
    vocabulary: tuple[str, ...]
    matrix: np.ndarray
    doc_ids: tuple[str, ...] = ()

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[0]

    def column(self, word: str) -> np.ndarray:
        return self.matrix[:, self.vocabulary.index(word)]


def build_tdm(documents: Sequence[Document] | Sequence[Sequence[str]]) -> TermDocumentMatrix:
    token_lists = [d.tokens if isinstance(d, Document) else tuple(d) for d in documents]
    doc_ids = tuple(d.review_id if isinstance(d, Document) else str(i)
                    for i, d in enumerate(documents))
    vocab = tuple(sorted({t for toks in token_lists for t in toks}))
    index = {w: j for j, w in enumerate(vocab)}
    m = np.zeros((len(token_lists), len(vocab)), dtype=np.uint8)
    for i, toks in enumerate(token_lists):
        for t in toks:
            m[i, index[t]] = 1
    return TermDocumentMatrix(vocab, m, doc_ids)


@dataclass
class Associations:
    word: str
    pairs: list[tuple[str, float]]
    skipped: list[str]


def word_correlation(tdm: TermDocumentMatrix, word: str,
                     min_corr: float = DEFAULT_MIN_CORR) -> Associations:
    """Words whose occurrence vector correlates with ``word``'s at ``r >= min_corr``.

    r is the phi coefficient (Pearson on binary vectors). Words present in every
    document or in none have no variance; they are left out and listed in
    ``skipped``.
    """
    try:
        target = tdm.vocabulary.index(word)
    except ValueError:
        raise KeyError(f"{word!r} not in vocabulary") from None
    r = kernels.phi_against(tdm.matrix, target)
    if math.isnan(r[target]):
        raise UndefinedCorrelation(f"{word!r} occurs in every document or none")
    pairs = []
    skipped = []
    for j, w in enumerate(tdm.vocabulary):
        if j == target:
            continue
        rj = float(r[j])
        if math.isnan(rj):
            skipped.append(w)
        elif rj >= min_corr:
            pairs.append((w, rj))
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return Associations(word, pairs, skipped)


# ---------------------------------------------------------------------------
# Corpus assembly
# ---------------------------------------------------------------------------


@dataclass
class Corpus:
    documents: list[Document]
    sampled: list[str]
    dropped: list[tuple[str, str]]
    untranslated: int


def build_corpus(records: Sequence[AccommodationRecord], reviews: Iterable[ReviewRecord],
                 stoplist: frozenset, *, fraction=0.10, seed: int = 42, top_comments: int = 10,
                 translator: Translator | None = None) -> Corpus:
    translator = translator or IdentityTranslator()
    sample = sample_accommodations(records, fraction, seed) if records else []
    by_acc: dict[str, list[ReviewRecord]] = defaultdict(list)
    for rv in reviews:
        by_acc[rv.accommodation_id].append(rv)
    docs: list[Document] = []
    dropped: list[tuple[str, str]] = []
    untranslated = 0
    for rec in sample:
        for rv in latest_comments(by_acc.get(rec.accommodation_id, []), top_comments):
            eligible = translator.handles(rv.language)
            try:
                tokens = clean_tokenize(rv.text, stoplist, translator, rv.language)
            except TranslationError as exc:
                dropped.append((rv.review_id, str(exc)))
                log.warning("dropping review %s: %s", rv.review_id, exc)
                continue
            if not eligible:
                untranslated += 1
            docs.append(Document(
                review_id=rv.review_id,
                accommodation_id=rec.accommodation_id,
                territory_id=rec.territory_id or UNASSIGNED_GROUP,
                reviewer_country=rv.reviewer_country or UNKNOWN_COUNTRY,
                tokens=tuple(tokens),
                polar_eligible=eligible,
            ))
    return Corpus(docs, [r.accommodation_id for r in sample], dropped, untranslated)
