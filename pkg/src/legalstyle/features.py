"""Linguistic feature extraction and z-score normalization.

The default catalog has exactly 100 deterministic features over five
categories.  Every formula is total: empty denominators yield 0.0, so no
input text can produce NaN or infinity.  Phrase lexicons are matched as
substrings whose start and end align with token boundaries, which keeps
single-character entries (之, 故, ...) from firing inside longer words.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import CatalogMismatch, EmptyText, InsufficientData
from .textmodel import (
    Lexicon,
    TokenizedText,
    default_lexicon,
    is_cjk,
    is_punct,
    segment,
    split_sentences,
)

_DATA_DIR = Path(__file__).resolve().parent / "data"
_LEXICON_DIR = _DATA_DIR / "lexicons"
_LEXICON_SET_VERSION = "1"

_CLAUSE_MARKS = set("，,：:；;")
_CN_NUMERALS = set("零〇一二三四五六七八九十百千万亿两")

CATALOG_SIZE = 100


@dataclass(frozen=True)
class FeatureEntry:
    feature_id: str
    category: str
    kind: str
    params: dict
    description: str


class FeatureCatalog:
    """Ordered, versioned list of feature definitions."""

    CATEGORIES = (
        "character-complexity",
        "lexical/POS",
        "syntactic",
        "discourse-marker",
        "collocation/formulaic",
    )

    def __init__(self, version: str, entries: list[FeatureEntry]):
        ids = [e.feature_id for e in entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate feature ids in catalog")
        for e in entries:
            if e.category not in self.CATEGORIES:
                raise ValueError(f"unknown category {e.category!r} for {e.feature_id}")
        self.version = version
        self.entries = tuple(entries)
        self.index = {e.feature_id: i for i, e in enumerate(entries)}

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def load_default(cls) -> "FeatureCatalog":
        return cls.load(_DATA_DIR / "feature_catalog_v1.json")

    @classmethod
    def load(cls, path: Path | str) -> "FeatureCatalog":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            FeatureEntry(r["id"], r["category"], r["kind"], r.get("params", {}), r["description"])
            for r in raw["entries"]
        ]
        catalog = cls(raw["version"], entries)
        if len(catalog) != CATALOG_SIZE:
            raise ValueError(f"default catalog must have {CATALOG_SIZE} entries, got {len(catalog)}")
        return catalog


_DEFAULT_CATALOG: FeatureCatalog | None = None


def default_catalog() -> FeatureCatalog:
    global _DEFAULT_CATALOG
    if _DEFAULT_CATALOG is None:
        _DEFAULT_CATALOG = FeatureCatalog.load_default()
    return _DEFAULT_CATALOG


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    catalog_version: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class NormalizationParams:
    means: np.ndarray
    stds: np.ndarray
    catalog_version: str

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))


@lru_cache(maxsize=None)
def _load_lexicon_file(name: str) -> tuple[str, ...]:
    path = _LEXICON_DIR / f"{name}_v{_LEXICON_SET_VERSION}.txt"
    phrases = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    return tuple(phrases)


@lru_cache(maxsize=None)
def _load_char_set(name: str) -> frozenset:
    path = _LEXICON_DIR / f"{name}_v{_LEXICON_SET_VERSION}.txt"
    return frozenset(ch for ch in path.read_text(encoding="utf-8") if not ch.isspace())


def _stat(values: list[float], stat: str) -> float:
    if not values:
        return 0.0
    arr = np.asarray(values, dtype=np.float64)
    if stat == "mean":
        return float(arr.mean())
    if stat == "max":
        return float(arr.max())
    if stat == "min":
        return float(arr.min())
    if stat == "std":
        return float(arr.std())
    raise ValueError(f"unknown stat {stat!r}")


class _TextProfile:
    """Single-pass token/sentence/clause statistics shared by all features."""

    def __init__(self, text: str, tokenized: TokenizedText):
        self.text = text
        self.tokens = tokenized.tokens
        self.chars = [ch for ch in text if not ch.isspace()]
        self.n_chars = len(self.chars)
        self.token_starts = {t.start for t in self.tokens}
        self.token_ends = {t.end for t in self.tokens}

        spans = split_sentences(text)
        if not spans:
            spans = [(0, len(text))]
        self.sentence_spans = spans
        self.sentences = [text[a:b] for a, b in spans]
        self.sentence_chars = [self._countable(s) for s in self.sentences]
        self.sentence_tokens = [
            sum(1 for t in self.tokens if a <= t.start and t.end <= b) for a, b in spans
        ]
        self.sentence_terminator = [
            next((ch for ch in reversed(s) if ch in "。！？；"), "") for s in self.sentences
        ]

        self.clauses: list[str] = []
        self.clauses_by_sentence: list[list[str]] = []
        for s in self.sentences:
            parts = [p for p in re.split("[" + "".join(_CLAUSE_MARKS) + "]", s) if self._countable(p) > 0]
            if not parts:
                parts = [s]
            self.clauses_by_sentence.append(parts)
            self.clauses.extend(parts)

        self.tag_counts: dict[str, int] = {}
        for t in self.tokens:
            self.tag_counts[t.tag] = self.tag_counts.get(t.tag, 0) + 1
        self.words = [t.surface for t in self.tokens if t.tag != "w"]

    @staticmethod
    def _countable(s: str) -> int:
        return sum(1 for ch in s if not ch.isspace() and not is_punct(ch))

    def count_marks(self, marks: str) -> int:
        mark_set = set(marks)
        return sum(1 for ch in self.text if ch in mark_set)

    def phrase_hits(self, phrase: str) -> int:
        """Token-boundary-aligned substring occurrences of `phrase`."""
        hits = 0
        start = self.text.find(phrase)
        while start != -1:
            if start in self.token_starts and (start + len(phrase)) in self.token_ends:
                hits += 1
            start = self.text.find(phrase, start + 1)
        return hits

    def lexicon_hits(self, names: tuple[str, ...]) -> int:
        return sum(self.phrase_hits(p) for name in names for p in _load_lexicon_file(name))

    def lexicon_distinct(self, names: tuple[str, ...]) -> int:
        return sum(
            1 for name in names for p in _load_lexicon_file(name) if self.phrase_hits(p) > 0
        )

    def sentence_initial_hits(self, names: tuple[str, ...]) -> int:
        phrases = [p for name in names for p in _load_lexicon_file(name)]
        count = 0
        for s in self.sentences:
            body = s.lstrip()
            if any(body.startswith(p) for p in phrases):
                count += 1
        return count


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _compute(entry: FeatureEntry, prof: _TextProfile) -> float:
    kind, params = entry.kind, entry.params
    n_sent = len(prof.sentences)
    n_tok = len(prof.tokens)

    if kind == "char_count_log":
        return math.log10(1 + prof.n_chars)
    if kind == "char_class_ratio":
        cls = params["cls"]
        if cls == "cjk":
            num = sum(1 for ch in prof.chars if is_cjk(ch))
        elif cls == "punct":
            num = sum(1 for ch in prof.chars if is_punct(ch))
        elif cls == "digit":
            num = sum(1 for ch in prof.chars if ch.isdigit())
        elif cls == "cn_numeral":
            num = sum(1 for ch in prof.chars if ch in _CN_NUMERALS)
        elif cls == "latin":
            num = sum(1 for ch in prof.chars if "a" <= ch.lower() <= "z")
        else:
            raise ValueError(f"unknown char class {cls!r}")
        return _ratio(num, prof.n_chars)
    if kind == "char_ttr":
        return _ratio(len(set(prof.chars)), prof.n_chars)
    if kind == "common_char_ratio":
        common = _load_char_set(params["lexicon"])
        return _ratio(sum(1 for ch in prof.chars if ch in common), prof.n_chars)
    if kind == "mark_ratio":
        return _ratio(prof.count_marks(params["marks"]), prof.n_chars)
    if kind == "sentence_char_stat":
        return _stat([float(c) for c in prof.sentence_chars], params["stat"])
    if kind == "token_count_log":
        return math.log10(1 + n_tok)
    if kind == "token_length_stat":
        return _stat([float(len(w)) for w in prof.words], params["stat"])
    if kind == "token_length_ratio":
        lo, hi = params["lo"], params["hi"]
        return _ratio(sum(1 for w in prof.words if lo <= len(w) <= hi), len(prof.words))
    if kind == "word_ttr":
        return _ratio(len(set(prof.words)), len(prof.words))
    if kind == "hapax_ratio":
        counts: dict[str, int] = {}
        for w in prof.words:
            counts[w] = counts.get(w, 0) + 1
        return _ratio(sum(1 for c in counts.values() if c == 1), len(prof.words))
    if kind == "pos_ratio":
        num = sum(prof.tag_counts.get(t, 0) for t in params["tags"])
        return _ratio(num, n_tok)
    if kind == "pos_pair_ratio":
        num = sum(prof.tag_counts.get(t, 0) for t in params["num"])
        den = sum(prof.tag_counts.get(t, 0) for t in params["den"])
        return _ratio(num, den)
    if kind == "pos_per_sentence":
        num = sum(prof.tag_counts.get(t, 0) for t in params["tags"])
        return _ratio(num, n_sent)
    if kind == "sentence_token_stat":
        return _stat([float(c) for c in prof.sentence_tokens], params["stat"])
    if kind == "sentences_per_100_chars":
        return _ratio(n_sent, prof.n_chars) * 100.0
    if kind == "clauses_per_sentence":
        return _ratio(len(prof.clauses), n_sent)
    if kind == "clause_char_stat":
        return _stat([float(prof._countable(c)) for c in prof.clauses], params["stat"])
    if kind == "clause_token_stat":
        # approximated by countable chars over mean token length; exact token
        # attribution to clauses is not needed at z-score granularity
        lengths = []
        mean_tok = _stat([float(len(w)) for w in prof.words], "mean") or 1.0
        for c in prof.clauses:
            lengths.append(prof._countable(c) / mean_tok)
        return _stat(lengths, params["stat"])
    if kind == "max_clauses_in_sentence":
        return float(max((len(c) for c in prof.clauses_by_sentence), default=0))
    if kind == "sentence_length_ratio":
        op, threshold = params["op"], params["threshold"]
        if op == "gt":
            num = sum(1 for c in prof.sentence_chars if c > threshold)
        else:
            num = sum(1 for c in prof.sentence_chars if c < threshold)
        return _ratio(num, n_sent)
    if kind == "mark_per_sentence":
        return _ratio(prof.count_marks(params["marks"]), n_sent)
    if kind == "sentence_final_ratio":
        marks = set(params["marks"])
        return _ratio(sum(1 for t in prof.sentence_terminator if t in marks), n_sent)
    if kind == "single_clause_sentence_ratio":
        return _ratio(sum(1 for c in prof.clauses_by_sentence if len(c) == 1), n_sent)
    if kind == "lexicon_density":
        return _ratio(prof.lexicon_hits(tuple(params["lexicons"])), prof.n_chars) * 100.0
    if kind == "lexicon_distinct_count":
        return float(prof.lexicon_distinct(tuple(params["lexicons"])))
    if kind == "lexicon_per_sentence":
        return _ratio(prof.lexicon_hits(tuple(params["lexicons"])), n_sent)
    if kind == "sentence_initial_lexicon_ratio":
        return _ratio(prof.sentence_initial_hits(tuple(params["lexicons"])), n_sent)
    if kind == "regex_density":
        pattern = _compiled(params["pattern"])
        return _ratio(len(pattern.findall(prof.text)), prof.n_chars) * 100.0
    raise ValueError(f"unknown feature kind {kind!r}")


@lru_cache(maxsize=None)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


def extract_features(
    text: str,
    catalog: FeatureCatalog | None = None,
    lexicon: Lexicon | None = None,
) -> FeatureVector:
    """100-dimensional feature vector for a text, in catalog order."""
    if not text or not text.strip():
        raise EmptyText("cannot extract features from empty text")
    cat = catalog or default_catalog()
    prof = _TextProfile(text, segment(text, lexicon or default_lexicon()))
    values = np.array([_compute(e, prof) for e in cat.entries], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = [cat.entries[i].feature_id for i in np.where(~np.isfinite(values))[0]]
        raise ValueError(f"non-finite feature values: {bad}")
    return FeatureVector(values=values, catalog_version=cat.version)


def fit_normalization(vectors: list[FeatureVector]) -> NormalizationParams:
    """Per-feature mean and population standard deviation."""
    if len(vectors) < 2:
        raise InsufficientData("normalization needs at least 2 vectors")
    versions = {v.catalog_version for v in vectors}
    if len(versions) != 1:
        raise CatalogMismatch(f"mixed catalog versions: {sorted(versions)}")
    matrix = np.stack([v.values for v in vectors])
    return NormalizationParams(
        means=matrix.mean(axis=0),
        stds=matrix.std(axis=0),
        catalog_version=vectors[0].catalog_version,
    )


def normalize(vector: FeatureVector, params: NormalizationParams) -> FeatureVector:
    """(value - mean) / std per coordinate; zero-variance coordinates map to 0."""
    if vector.catalog_version != params.catalog_version:
        raise CatalogMismatch(
            f"vector catalog {vector.catalog_version!r} != params catalog {params.catalog_version!r}"
        )
    stds = np.where(params.stds > 0, params.stds, 1.0)
    z = (vector.values - params.means) / stds
    z = np.where(params.stds > 0, z, 0.0)
    return FeatureVector(values=z, catalog_version=vector.catalog_version)
