"""Document types, Chinese word segmentation, and the five-section split.

Segmentation is dictionary-driven: a versioned lexicon (word, POS tag,
frequency) defines a directed acyclic graph of candidate words over the
input, and dynamic programming picks the highest unigram log-probability
path.  Everything is a pure function of the input text plus the bundled
lexicon, so identical input always yields identical tokens.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

from .errors import EmptyText, SectionSplitError

_DATA_DIR = Path(__file__).resolve().parent / "data"

LEXICON_VERSION = "1"

# Family names accepted by the dynamic `X某` / `X某某` person-name rule.
_SURNAMES = set(
    "张王李刘陈杨赵黄周吴徐孙胡朱高林何郭马罗梁宋郑谢韩唐冯于董萧程曹袁邓"
    "许傅沈曾彭吕苏卢蒋蔡贾丁魏薛叶阎余潘杜戴夏汪田任姜范方石姚谭廖邹熊金陆"
)
_ANON_SUFFIXES = ("公司", "银行", "物业", "医院", "学校", "村", "镇", "县", "市", "区", "厂")

_CJK_PUNCT = set("，。；：、？！“”‘’（）【】《》〈〉…—－·〔〕「」『』")
_ASCII_PUNCT = set(r"""!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~""")
_CN_NUMERALS = set("零〇一二三四五六七八九十百千万亿两")

_ARABIC_RUN = re.compile(r"[0-9０-９][0-9０-９.,，%％]*")
_LATIN_RUN = re.compile(r"[A-Za-z][A-Za-z0-9_\-]*")


class SectionKind(Enum):
    HEADER = "header"
    FACTS = "facts"
    REASONING = "reasoning"
    JUDGMENT = "judgment"
    FOOTER = "footer"


# Marker phrases locating the start of each non-header section.  First
# match wins and each section must start after the previous one; the
# header always starts at offset zero.
DEFAULT_SECTION_MARKERS: dict[SectionKind, tuple[str, ...]] = {
    SectionKind.FACTS: ("经审理查明", "原告诉称", "原告向本院提出诉讼请求"),
    SectionKind.REASONING: ("本院认为",),
    SectionKind.JUDGMENT: ("判决如下", "裁定如下"),
    SectionKind.FOOTER: ("如不服本判决", "审判长", "审判员"),
}


@dataclass(frozen=True)
class Token:
    surface: str
    tag: str
    start: int
    end: int


@dataclass(frozen=True)
class TokenizedText:
    source: str
    tokens: tuple[Token, ...]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def tags(self) -> list[str]:
        return [t.tag for t in self.tokens]


_SECTION_ORDER = (
    SectionKind.HEADER,
    SectionKind.FACTS,
    SectionKind.REASONING,
    SectionKind.JUDGMENT,
    SectionKind.FOOTER,
)


@dataclass(frozen=True)
class Document:
    doc_id: str
    raw_text: str
    sections: dict[SectionKind, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        previous_start = -1
        for kind in _SECTION_ORDER:
            span = self.sections.get(kind)
            if span is None:
                continue
            begin, end = span
            if not 0 <= begin <= end <= len(self.raw_text):
                raise ValueError(f"section {kind.value} span {span} outside raw_text")
            if begin <= previous_start:
                raise ValueError(f"section {kind.value} does not start after its predecessor")
            previous_start = begin
        spans = sorted(self.sections.values())
        for (_, end1), (begin2, _) in zip(spans, spans[1:]):
            if end1 > begin2:
                raise ValueError("section spans overlap")

    def section_text(self, kind: SectionKind) -> str:
        span = self.sections.get(kind)
        if span is None:
            return ""
        return self.raw_text[span[0] : span[1]]

    @property
    def reasoning(self) -> str:
        return self.section_text(SectionKind.REASONING)


class Lexicon:
    """Word -> (tag, frequency) table with total mass for DP scoring."""

    def __init__(self, entries: dict[str, tuple[str, int]], version: str):
        self.entries = entries
        self.version = version
        self.total = sum(freq for _, freq in entries.values())
        self.max_word_len = max((len(w) for w in entries), default=1)

    def logp(self, freq: int) -> float:
        return math.log(freq) - math.log(self.total)

    @classmethod
    def load_default(cls) -> "Lexicon":
        return cls.load(_DATA_DIR / f"segmenter_lexicon_v{LEXICON_VERSION}.tsv", LEXICON_VERSION)

    @classmethod
    def load(cls, path: Path, version: str) -> "Lexicon":
        entries: dict[str, tuple[str, int]] = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line or line.startswith("#"):
                continue
            word, tag, freq = line.split("\t")
            entries[word] = (tag, int(freq))
        return cls(entries, version)


_DEFAULT_LEXICON: Lexicon | None = None


def default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = Lexicon.load_default()
    return _DEFAULT_LEXICON


def load_tagset() -> dict[str, str]:
    raw = json.loads((_DATA_DIR / "pos_tags_v1.json").read_text(encoding="utf-8"))
    return raw["tags"]


def is_punct(ch: str) -> bool:
    return ch in _CJK_PUNCT or ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def is_cjk(ch: str) -> bool:
    return "一" <= ch <= "鿿"


def _dynamic_candidates(text: str, i: int) -> Iterator[tuple[int, str, float]]:
    """Pattern words not present in the lexicon: number runs, latin runs,
    Chinese numeral runs, and anonymized names (`张某`, `某公司`, ...)."""
    m = _ARABIC_RUN.match(text, i)
    if m:
        yield m.end(), "m", math.log(5000)
    m = _LATIN_RUN.match(text, i)
    if m:
        yield m.end(), "eng", math.log(2000)
    ch = text[i]
    if ch in _CN_NUMERALS:
        j = i + 1
        while j < len(text) and text[j] in _CN_NUMERALS:
            j += 1
        if j - i >= 2:
            yield j, "m", math.log(3000)
    if ch in _SURNAMES and i + 1 < len(text) and text[i + 1] == "某":
        j = i + 2
        if j < len(text) and text[j] in "某甲乙丙丁":
            j += 1
        yield j, "nr", math.log(3000)
    if ch == "某":
        rest = text[i + 1 :]
        for suffix in _ANON_SUFFIXES:
            if rest.startswith(suffix):
                tag = "nt" if suffix in ("公司", "银行", "物业", "医院", "学校", "厂") else "ns"
                yield i + 1 + len(suffix), tag, math.log(1500)


def segment(text: str, lexicon: Lexicon | None = None) -> TokenizedText:
    """Segment Chinese text into (surface, tag, start, end) tokens.

    Whitespace is skipped (it never becomes a token); punctuation becomes
    single-character tokens tagged `w`; unknown CJK characters fall back to
    single-character tokens tagged `x`.
    """
    if not text or not text.strip():
        raise EmptyText("cannot segment empty text")
    lex = lexicon or default_lexicon()
    n = len(text)
    unseen = math.log(1) - math.log(lex.total)

    # candidates[i] = list of (end, tag, logp) for words starting at i
    candidates: list[list[tuple[int, str, float]]] = [[] for _ in range(n)]
    for i in range(n):
        ch = text[i]
        if ch.isspace():
            continue
        if is_punct(ch):
            candidates[i].append((i + 1, "w", math.log(10000) - math.log(lex.total)))
            continue
        limit = min(n, i + lex.max_word_len)
        for j in range(i + 1, limit + 1):
            word = text[i:j]
            hit = lex.entries.get(word)
            if hit is not None:
                candidates[i].append((j, hit[0], lex.logp(hit[1])))
        for end, tag, logf in _dynamic_candidates(text, i):
            candidates[i].append((end, tag, logf - math.log(lex.total)))
        if not any(end == i + 1 for end, _, _ in candidates[i]):
            fallback = "m" if ch in _CN_NUMERALS else ("x" if is_cjk(ch) else "x")
            candidates[i].append((i + 1, fallback, unseen))

    # best[i] = (score, end, tag) for the best path over text[i:]
    best: list[tuple[float, int, str] | None] = [None] * (n + 1)
    best[n] = (0.0, n, "")
    for i in range(n - 1, -1, -1):
        if text[i].isspace():
            best[i] = best[i + 1]
            continue
        top: tuple[float, int, str] | None = None
        for end, tag, logp in candidates[i]:
            tail = best[end]
            assert tail is not None
            score = logp + tail[0]
            # ties broken in favour of the longer word
            if top is None or score > top[0] or (score == top[0] and end > top[1]):
                top = (score, end, tag)
        best[i] = top

    tokens: list[Token] = []
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        entry = best[i]
        assert entry is not None
        _, end, tag = entry
        tokens.append(Token(text[i:end], tag, i, end))
        i = end
    return TokenizedText(source=text, tokens=tuple(tokens))


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Spans of sentences; a sentence ends at 。！？； plus any closing quotes."""
    terminators = set("。！？；")
    closers = set("”’》）〉」』\"'")
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in terminators:
            j = i + 1
            while j < n and text[j] in closers:
                j += 1
            spans.append((start, j))
            start = j
            i = j
        else:
            i += 1
    if start < n and text[start:].strip():
        spans.append((start, n))
    return spans


def split_sections(
    doc_text: str,
    doc_id: str = "",
    markers: dict[SectionKind, tuple[str, ...]] | None = None,
) -> Document:
    """Split a judgment into the five conventional sections.

    Each non-header section begins at the first occurrence of one of its
    marker phrases after the end of the previous section.  A section whose
    markers never occur is absent; the reasoning section is mandatory.
    """
    if not doc_text or not doc_text.strip():
        raise EmptyText("cannot split empty document")
    table = markers or DEFAULT_SECTION_MARKERS

    order = [SectionKind.FACTS, SectionKind.REASONING, SectionKind.JUDGMENT, SectionKind.FOOTER]
    starts: dict[SectionKind, int] = {SectionKind.HEADER: 0}
    cursor = 0
    for kind in order:
        pos = -1
        for phrase in table.get(kind, ()):
            found = doc_text.find(phrase, cursor)
            if found != -1 and (pos == -1 or found < pos):
                pos = found
        if pos != -1:
            starts[kind] = pos
            cursor = pos + 1
    if SectionKind.REASONING not in starts:
        raise SectionSplitError(
            f"no reasoning marker found in document {doc_id!r}", unmatched_text=doc_text
        )

    present = sorted(starts.items(), key=lambda kv: kv[1])
    sections: dict[SectionKind, tuple[int, int]] = {}
    for idx, (kind, begin) in enumerate(present):
        end = present[idx + 1][1] if idx + 1 < len(present) else len(doc_text)
        sections[kind] = (begin, end)
    doc = Document(doc_id=doc_id, raw_text=doc_text, sections=sections)
    if not doc.reasoning.strip():
        raise SectionSplitError(
            f"empty reasoning section in document {doc_id!r}", unmatched_text=doc_text
        )
    return doc


def load_corpus_jsonl(path: Path | str) -> list[dict]:
    """Load {"id", "text"} records, NFC-normalizing the text."""
    records = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "id" not in row or "text" not in row:
                raise ValueError(f"{path}:{lineno}: corpus rows need 'id' and 'text'")
            row["text"] = unicodedata.normalize("NFC", row["text"])
            records.append(row)
    return records


def reconstructs_source(tokenized: TokenizedText) -> bool:
    """Non-whitespace characters of the source equal the token surfaces."""
    joined = "".join(tokenized.surfaces())
    stripped = "".join(ch for ch in tokenized.source if not ch.isspace())
    return joined == stripped
