"""Hybrid scoring: feature-based objective score, retrieval-guided judge
score over seven dimensions, and sigmoid fusion to [0, 1].

The objective score uses only the model's selected coefficients and no
bias term.  Each dimension is judged once, with the exemplar pairs
retrieved for all of its queries supplied as context.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field

from .errors import EmptyText, InvalidScore, JudgeParseError, VersionMismatch
from .features import FeatureCatalog, default_catalog, extract_features, normalize
from .gateway import ChatRequest, Gateway, ROLE_JUDGE, render_prompt
from .experience import DIMENSIONS, ExperiencePools
from .regression import RegressionModel
from .retrieval import VectorIndex, top_similar, with_positives

logger = logging.getLogger(__name__)

JUDGE_SYSTEM = "你是一名资深的法律文书文风评估专家。"

DIMENSION_LABELS = {
    "noun_usage": "名词使用",
    "verb_usage": "动词使用",
    "adjective_usage": "形容词使用",
    "function_words": "虚词使用",
    "sentence_coherence": "句子连贯",
    "sentence_structure": "句子结构",
    "collocations": "搭配规范",
}

DEFAULT_DIMENSION_WEIGHTS = {
    "noun_usage": 0.30,
    "verb_usage": 0.30,
    "adjective_usage": 0.20,
    "function_words": 0.05,
    "sentence_coherence": 0.05,
    "sentence_structure": 0.05,
    "collocations": 0.05,
}

_SCORE_RE = re.compile(r"FINAL_SCORE:\s*(-?\d+(?:\.\d+)?)")


@dataclass(frozen=True)
class DimensionWeights:
    weights: dict[str, float]

    def __post_init__(self):
        if set(self.weights) != set(DIMENSIONS):
            raise ValueError(f"weights must cover exactly the dimensions {DIMENSIONS}")
        total = math.fsum(self.weights.values())
        if total != 1.0:
            raise ValueError(f"dimension weights must sum to exactly 1.0, got {total!r}")

    def __getitem__(self, dimension: str) -> float:
        return self.weights[dimension]

    @classmethod
    def default(cls) -> "DimensionWeights":
        return cls(dict(DEFAULT_DIMENSION_WEIGHTS))


@dataclass(frozen=True)
class DimensionScore:
    dimension: str
    score: float
    feedback: str
    queries: tuple[str, ...]
    retrieved: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class ScoreReport:
    objective: float
    subjective: float
    fused: float
    dimensions: dict[str, DimensionScore]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "subjective": self.subjective,
            "fused": self.fused,
            "dimensions": {
                d: {
                    "score": s.score,
                    "feedback": s.feedback,
                    "queries": list(s.queries),
                    "retrieved": [list(r) for r in s.retrieved],
                }
                for d, s in self.dimensions.items()
            },
            "provenance": self.provenance,
        }


def score_objective(
    text: str, model: RegressionModel, catalog: FeatureCatalog | None = None
) -> float:
    """10 * sigma(w . z_k) over the selected, normalized features; no bias."""
    if not text or not text.strip():
        raise EmptyText("cannot score empty text")
    cat = catalog or default_catalog()
    vector = extract_features(text, cat)
    z = normalize(vector, model.normalization)
    total = 0.0
    for i in model.selected_indices:
        total += model.weights[i] * z.values[i]
    return 10.0 / (1.0 + math.exp(-total))


def _parse_judge_score(reply: str) -> float | None:
    m = _SCORE_RE.search(reply)
    return float(m.group(1)) if m else None


def score_dimension(
    text: str,
    dimension: str,
    pools: ExperiencePools,
    index: VectorIndex,
    gateway: Gateway,
    x: int = 10,
    y: int = 10,
) -> DimensionScore:
    """Analyze, generate x queries, retrieve y exemplar pairs per query,
    then judge once with all retrieved pairs in context."""
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}")
    if x < 1 or y < 1:
        raise ValueError("x and y must be >= 1")
    label = DIMENSION_LABELS[dimension]

    analysis = gateway.complete(
        ROLE_JUDGE,
        ChatRequest(system=JUDGE_SYSTEM,
                    user=render_prompt("judge_analyze", dimension_label=label, text=text)),
    )

    queries_reply = gateway.complete(
        ROLE_JUDGE,
        ChatRequest(
            system=JUDGE_SYSTEM,
            user=render_prompt("judge_queries", dimension_label=label, x=x,
                               analysis=analysis, text=text),
            format="structured",
        ),
    )
    queries = _parse_queries(queries_reply, x)

    retrieved: list[tuple[int, ...]] = []
    exemplar_pairs = []
    for query in queries:
        ids = top_similar(index, gateway.embed(query), y)
        retrieved.append(tuple(ids))
        exemplar_pairs.extend(with_positives(pools, ids))

    blocks = []
    seen_ids = set()
    for pos, neg in exemplar_pairs:
        if pos.pair_id in seen_ids:
            continue
        seen_ids.add(pos.pair_id)
        blocks.append(f"正例：{pos.text}\n反例：{neg.text}")
    exemplar_text = "\n\n".join(blocks) if blocks else "（无）"

    evaluate_prompt = render_prompt(
        "judge_evaluate", dimension_label=label, exemplars=exemplar_text, text=text
    )
    reply = gateway.complete(
        ROLE_JUDGE, ChatRequest(system=JUDGE_SYSTEM, user=evaluate_prompt)
    )
    score = _parse_judge_score(reply)
    if score is None:
        retry_prompt = evaluate_prompt + "\n\n（请务必以“FINAL_SCORE: <数字>”结尾。）"
        reply = gateway.complete(
            ROLE_JUDGE, ChatRequest(system=JUDGE_SYSTEM, user=retry_prompt)
        )
        score = _parse_judge_score(reply)
        if score is None:
            raise JudgeParseError(f"no parseable score for dimension {dimension!r}")
    if score < 0.0 or score > 10.0:
        logger.warning("judge score %.2f out of range for %s; clamping", score, dimension)
        score = min(10.0, max(0.0, score))
    return DimensionScore(
        dimension=dimension,
        score=score,
        feedback=reply,
        queries=tuple(queries),
        retrieved=tuple(retrieved),
    )


def _parse_queries(reply: str, x: int) -> list[str]:
    import json

    try:
        data = json.loads(reply.strip())
        queries = [str(q) for q in data if str(q).strip()]
    except (json.JSONDecodeError, TypeError):
        queries = [ln.strip() for ln in reply.splitlines() if ln.strip()]
    if not queries:
        raise JudgeParseError("judge returned no usable queries")
    if len(queries) > x:
        queries = queries[:x]
    if len(queries) < x:
        logger.warning("judge returned %d queries, expected %d", len(queries), x)
    return queries


def score_subjective(
    dimension_scores: dict[str, DimensionScore],
    weights: DimensionWeights | None = None,
) -> float:
    """Weighted sum of the seven dimension scores."""
    w = weights or DimensionWeights.default()
    return math.fsum(w[d] * dimension_scores[d].score for d in DIMENSIONS)


def fuse(objective: float, subjective: float,
         obj_weight: float = 0.5, subj_weight: float = 0.5) -> float:
    """Average the two scores, then squash through a sigmoid centered at 5."""
    for name, value in (("objective", objective), ("subjective", subjective)):
        if not 0.0 <= value <= 10.0:
            raise InvalidScore(f"{name} score {value} outside [0, 10]")
    if math.fsum((obj_weight, subj_weight)) != 1.0:
        raise InvalidScore("fusion weights must sum to 1.0")
    combined = obj_weight * objective + subj_weight * subjective
    return 1.0 / (1.0 + math.exp(-10.0 * (combined / 10.0 - 0.5)))


def score_document(
    text: str,
    model: RegressionModel,
    pools: ExperiencePools,
    index: VectorIndex,
    gateway: Gateway,
    catalog: FeatureCatalog | None = None,
    weights: DimensionWeights | None = None,
    x: int = 10,
    y: int = 10,
    obj_weight: float = 0.5,
    subj_weight: float = 0.5,
) -> ScoreReport:
    """Full reference-free report for one text."""
    if not text or not text.strip():
        raise EmptyText("cannot score empty text")
    cat = catalog or default_catalog()
    if model.catalog_version != cat.version:
        raise VersionMismatch(
            f"model catalog {model.catalog_version!r} != active catalog {cat.version!r}"
        )
    pools_fp = pools.fingerprint()
    if model.pools_fingerprint and model.pools_fingerprint != pools_fp:
        raise VersionMismatch("model was trained on different pools")
    if index.pools_fingerprint != pools_fp:
        raise VersionMismatch("index was built from different pools")

    objective = score_objective(text, model, cat)
    dimension_scores: dict[str, DimensionScore] = {}
    for dimension in DIMENSIONS:
        dimension_scores[dimension] = score_dimension(
            text, dimension, pools, index, gateway, x=x, y=y
        )
    subjective = score_subjective(dimension_scores, weights)
    fused = fuse(objective, subjective, obj_weight, subj_weight)
    provenance = {
        "text_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "text_chars": len(text),
        "catalog_version": cat.version,
        "pools_fingerprint": pools_fp,
        "judge_backend": getattr(gateway.backend_for(ROLE_JUDGE), "backend_id", "?"),
        "x": x,
        "y": y,
        "k": len(model.selected_indices),
    }
    return ScoreReport(
        objective=objective,
        subjective=subjective,
        fused=fused,
        dimensions=dimension_scores,
        provenance=provenance,
    )
