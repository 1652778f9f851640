"""Contrastive pair construction: stylistic degradation then restoration.

Each authentic reasoning section is degraded to colloquial prose and then
restored toward legalese, yielding (gold, reverse, restored) triples.
Outputs are validated mechanically: named entities (consecutive
proper-noun tokens) and numerals extracted from the source must survive
into the rewrite.  Topic-chain preservation has no mechanical criterion
and is not enforced.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (
    DegradationRejected,
    EmptyText,
    InvalidEmphasis,
    RestorationRejected,
    SynthesisFailed,
)
from .gateway import (
    PROMPT_VERSIONS,
    ChatRequest,
    Gateway,
    ROLE_DEGRADE,
    ROLE_RESTORE,
    render_prompt,
)
from .textmodel import Document, Lexicon, default_lexicon, segment

logger = logging.getLogger(__name__)

DEGRADE_SYSTEM = "你是一名严谨的文本改写助手。"
RESTORE_SYSTEM = "你是一名严谨的法律文书写作助手。"

EMPHASIS_TAGS = ("efficiency", "thoroughness", "structure", "formality", "educational")

EMPHASIS_INSTRUCTIONS = {
    "efficiency": "改写时注重表达效率，措辞精炼，避免冗余。",
    "thoroughness": "改写时注重说理的完整与周延，论证充分。",
    "structure": "改写时注重行文结构与层次，条理分明。",
    "formality": "改写时注重措辞的正式程度，严格使用法言法语。",
    "educational": "改写时注重释法说理的教育意义，便于公众理解法律。",
}

_NUMERAL_RE = re.compile(r"[0-9０-９][0-9０-９.,，%％]*|[零〇一二三四五六七八九十百千万亿两]{2,}")
_PROPER_TAGS = {"nr", "ns", "nt", "nz"}


@dataclass(frozen=True)
class ContrastivePair:
    doc_id: str
    gold: str
    reverse: str
    restored: str
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SkipRecord:
    doc_id: str
    stage: str
    reason: str


@dataclass(frozen=True)
class SynthesisResult:
    pairs: list[ContrastivePair]
    skipped: list[SkipRecord]


def extract_preserved_strings(text: str, lexicon: Lexicon | None = None) -> set[str]:
    """Distinct numerals and proper-noun spans that a rewrite must keep."""
    preserved = set(_NUMERAL_RE.findall(text))
    tokens = segment(text, lexicon or default_lexicon()).tokens
    span: list[str] = []
    for token in tokens:
        if token.tag in _PROPER_TAGS:
            span.append(token.surface)
        else:
            if span:
                preserved.add("".join(span))
                span = []
    if span:
        preserved.add("".join(span))
    return preserved


def preservation_fraction(source: str, rewritten: str, lexicon: Lexicon | None = None) -> float:
    """Fraction of the source's preserved strings present in the rewrite.

    Vacuously 1.0 when the source has nothing extractable.
    """
    required = extract_preserved_strings(source, lexicon)
    if not required:
        return 1.0
    kept = sum(1 for s in required if s in rewritten)
    return kept / len(required)


@dataclass
class SynthesisConfig:
    min_preservation: float = 0.9
    max_attempts: int = 3


class Synthesizer:
    def __init__(
        self,
        gateway: Gateway,
        config: SynthesisConfig | None = None,
        lexicon: Lexicon | None = None,
    ):
        self.gateway = gateway
        self.config = config or SynthesisConfig()
        self.lexicon = lexicon or default_lexicon()

    def _validated_rewrite(
        self, role: str, system: str, prompt: str, source: str, error_cls, stage: str
    ) -> str:
        last_fraction = 0.0
        for attempt in range(self.config.max_attempts):
            reply = self.gateway.complete(
                role, ChatRequest(system=system, user=prompt, format="free-text")
            ).strip()
            if not reply:
                last_fraction = 0.0
                continue
            fraction = preservation_fraction(source, reply, self.lexicon)
            if fraction >= self.config.min_preservation:
                return reply
            last_fraction = fraction
            logger.info(
                "%s attempt %d kept %.2f of entities (< %.2f)",
                stage, attempt + 1, fraction, self.config.min_preservation,
            )
        raise error_cls(
            f"{stage} kept only {last_fraction:.2f} of entities after "
            f"{self.config.max_attempts} attempts"
        )

    def degrade(self, gold: str) -> str:
        if not gold or not gold.strip():
            raise EmptyText("cannot degrade empty text")
        prompt = render_prompt("degrade", text=gold)
        return self._validated_rewrite(
            ROLE_DEGRADE, DEGRADE_SYSTEM, prompt, gold, DegradationRejected, "degradation"
        )

    def restore(self, reverse: str, emphasis: str | None = None) -> str:
        if not reverse or not reverse.strip():
            raise EmptyText("cannot restore empty text")
        if emphasis is None:
            block = ""
        else:
            if emphasis not in EMPHASIS_TAGS:
                raise InvalidEmphasis(f"unknown emphasis tag {emphasis!r}")
            block = f"- {EMPHASIS_INSTRUCTIONS[emphasis]}\n"
        prompt = render_prompt("restore", text=reverse, emphasis_block=block)
        return self._validated_rewrite(
            ROLE_RESTORE, RESTORE_SYSTEM, prompt, reverse, RestorationRejected, "restoration"
        )

    def generate_test_variant(self, reverse: str, emphasis: str) -> tuple[str, dict]:
        """Restoration with a controlled emphasis; returns (text, provenance)."""
        restored = self.restore(reverse, emphasis=emphasis)
        provenance = self._provenance()
        provenance["emphasis"] = emphasis
        provenance["emphasis_instruction"] = EMPHASIS_INSTRUCTIONS[emphasis]
        return restored, provenance

    def _provenance(self) -> dict:
        return {
            "degrade_backend": getattr(self.gateway.backend_for(ROLE_DEGRADE), "backend_id", "?"),
            "restore_backend": getattr(self.gateway.backend_for(ROLE_RESTORE), "backend_id", "?"),
            "prompt_versions": {
                "degrade": PROMPT_VERSIONS["degrade"],
                "restore": PROMPT_VERSIONS["restore"],
            },
        }

    def make_pair(self, doc: Document) -> ContrastivePair:
        gold = doc.reasoning
        if not gold.strip():
            raise EmptyText(f"document {doc.doc_id!r} has an empty reasoning section")
        reverse = self.degrade(gold)
        restored = self.restore(reverse)
        return ContrastivePair(
            doc_id=doc.doc_id,
            gold=gold,
            reverse=reverse,
            restored=restored,
            provenance=self._provenance(),
        )

    def synthesize_corpus(
        self, docs: list[Document], n: int, max_workers: int = 4
    ) -> SynthesisResult:
        """One pair per document reasoning section, in input order.

        Failed documents are skipped and logged; emitted + skipped = n.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        if n > len(docs):
            raise ValueError(f"n={n} exceeds corpus size {len(docs)}")
        selected = docs[:n]
        if not selected:
            return SynthesisResult(pairs=[], skipped=[])

        def worker(doc: Document):
            try:
                return self.make_pair(doc), None
            except Exception as exc:  # per-document isolation
                return None, SkipRecord(doc.doc_id, stage=type(exc).__name__, reason=str(exc))

        pairs: list[ContrastivePair] = []
        skipped: list[SkipRecord] = []
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for pair, skip in pool.map(worker, selected):
                if pair is not None:
                    pairs.append(pair)
                else:
                    skipped.append(skip)
                    logger.warning("skipped %s: %s", skip.doc_id, skip.reason)
        if n > 0 and not pairs:
            raise SynthesisFailed(f"all {n} documents failed synthesis")
        return SynthesisResult(pairs=pairs, skipped=skipped)


def pair_to_json(pair: ContrastivePair) -> str:
    return json.dumps(
        {
            "doc_id": pair.doc_id,
            "gold": pair.gold,
            "reverse": pair.reverse,
            "restored": pair.restored,
            "provenance": pair.provenance,
        },
        ensure_ascii=False,
        sort_keys=True,
    )


def pair_from_json(line: str) -> ContrastivePair:
    raw = json.loads(line)
    return ContrastivePair(
        doc_id=raw["doc_id"],
        gold=raw["gold"],
        reverse=raw["reverse"],
        restored=raw["restored"],
        provenance=raw.get("provenance", {}),
    )
