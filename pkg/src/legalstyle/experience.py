"""Experience-pool construction from contrastive pairs.

For every pair, an LLM call identifies stylistic issues; each validated
issue projects its gold span into the positive pool and its restored span
into the negative pool, keeping a one-to-one correspondence by pair id.
Pool building is resumable: exemplars append to partial files as pairs
complete, and a finalize step compacts them into canonical JSONL plus a
manifest with checksums.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import EmptyPools, IdentifyParseError, ZeroVector
from .features import FeatureCatalog, default_catalog, extract_features, fit_normalization, normalize
from .gateway import (
    PROMPT_VERSIONS,
    ChatRequest,
    Gateway,
    ROLE_IDENTIFY,
    render_prompt,
)
from .regression import LabeledExample, RegressionModel, select_top_k, train
from .synthesis import ContrastivePair

logger = logging.getLogger(__name__)

IDENTIFY_SYSTEM = "你是一名法律文书文风审校专家。"

DIMENSIONS = (
    "noun_usage",
    "verb_usage",
    "adjective_usage",
    "function_words",
    "sentence_coherence",
    "sentence_structure",
    "collocations",
)

POOLS_SCHEMA_VERSION = 1

_REPAIR_SUFFIX = (
    "\n\n（你上一次的输出无法解析。请只输出一个 JSON 数组，"
    "数组元素为含 dimension、description、gold_span、restored_span 四个键的对象。）"
)


@dataclass(frozen=True)
class StyleIssue:
    dimension: str
    description: str
    gold_span: str
    restored_span: str


@dataclass(frozen=True)
class Exemplar:
    pair_id: int
    text: str
    dimension: str
    description: str
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class ExperiencePools:
    positives: tuple[Exemplar, ...]
    negatives: tuple[Exemplar, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.positives) != len(self.negatives):
            raise ValueError("positive/negative pools must be the same size")
        for i, (p, n) in enumerate(zip(self.positives, self.negatives)):
            if p.pair_id != i or n.pair_id != i:
                raise ValueError(f"pair ids must be contiguous 0..M-1, broken at {i}")

    def __len__(self) -> int:
        return len(self.positives)

    def positive_for(self, pair_id: int) -> Exemplar:
        if not 0 <= pair_id < len(self.positives):
            raise KeyError(f"unknown pair id {pair_id}")
        return self.positives[pair_id]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for pool in (self.positives, self.negatives):
            for e in pool:
                digest.update(
                    json.dumps(_exemplar_dict(e), sort_keys=True, ensure_ascii=False).encode()
                )
        digest.update(json.dumps(self.metadata, sort_keys=True, ensure_ascii=False).encode())
        return digest.hexdigest()


def _strip_fences(text: str) -> str:
    m = re.search(r"```(?:json)?\s*\n(.*?)\n\s*```", text, re.DOTALL)
    return m.group(1) if m else text


def parse_issue_payload(reply: str) -> list[dict]:
    data = json.loads(_strip_fences(reply).strip())
    if not isinstance(data, list):
        raise ValueError("issue payload is not a list")
    for item in data:
        if not isinstance(item, dict):
            raise ValueError("issue entries must be objects")
        for key in ("dimension", "description", "gold_span", "restored_span"):
            if not isinstance(item.get(key), str):
                raise ValueError(f"issue entry missing string field {key!r}")
    return data


def identify_issues(pair: ContrastivePair, gateway: Gateway) -> list[StyleIssue]:
    """Structured issue list for one pair; invalid issues are dropped."""
    prompt = render_prompt("identify", gold=pair.gold, restored=pair.restored)
    request = ChatRequest(system=IDENTIFY_SYSTEM, user=prompt, format="structured")
    reply = gateway.complete(ROLE_IDENTIFY, request)
    try:
        payload = parse_issue_payload(reply)
    except (json.JSONDecodeError, ValueError):
        repair = ChatRequest(system=IDENTIFY_SYSTEM, user=prompt + _REPAIR_SUFFIX,
                             format="structured")
        reply = gateway.complete(ROLE_IDENTIFY, repair)
        try:
            payload = parse_issue_payload(reply)
        except (json.JSONDecodeError, ValueError) as exc:
            raise IdentifyParseError(
                f"unparseable issue output for doc {pair.doc_id!r}: {exc}"
            ) from exc

    issues = []
    for item in payload:
        issue = StyleIssue(
            dimension=item["dimension"],
            description=item["description"],
            gold_span=item["gold_span"],
            restored_span=item["restored_span"],
        )
        if issue.dimension not in DIMENSIONS:
            logger.info("dropping issue with unknown dimension %r", issue.dimension)
            continue
        if not issue.description or not issue.gold_span or not issue.restored_span:
            logger.info("dropping issue with empty fields (doc %s)", pair.doc_id)
            continue
        if issue.gold_span not in pair.gold:
            logger.info("dropping issue: gold span not verbatim (doc %s)", pair.doc_id)
            continue
        if issue.restored_span not in pair.restored:
            logger.info("dropping issue: restored span not verbatim (doc %s)", pair.doc_id)
            continue
        if issue.gold_span == issue.restored_span:
            logger.info("dropping issue with identical spans (doc %s)", pair.doc_id)
            continue
        issues.append(issue)
    return issues


class PoolBuilder:
    """Accumulates exemplar pairs with deduplication and contiguous ids."""

    def __init__(self, gateway: Gateway, metadata: dict | None = None):
        self.gateway = gateway
        self.positives: list[Exemplar] = []
        self.negatives: list[Exemplar] = []
        self._seen: set[tuple[str, str]] = set()
        self.metadata = metadata or {
            "schema_version": POOLS_SCHEMA_VERSION,
            "identify_prompt": PROMPT_VERSIONS["identify"],
        }

    def add_issue(self, issue: StyleIssue) -> bool:
        """Embed and append one exemplar pair; False when deduplicated."""
        key = (issue.gold_span, issue.restored_span)
        if key in self._seen:
            return False
        pos_emb = self.gateway.embed(issue.gold_span).values
        neg_emb = self.gateway.embed(issue.restored_span).values
        if _norm(pos_emb) == 0 or _norm(neg_emb) == 0:
            raise ZeroVector("exemplar embedding has zero norm")
        pair_id = len(self.positives)
        self.positives.append(
            Exemplar(pair_id, issue.gold_span, issue.dimension, issue.description, pos_emb)
        )
        self.negatives.append(
            Exemplar(pair_id, issue.restored_span, issue.dimension, issue.description, neg_emb)
        )
        self._seen.add(key)
        return True

    def restore_exemplars(self, positives: list[Exemplar], negatives: list[Exemplar]) -> None:
        self.positives = list(positives)
        self.negatives = list(negatives)
        self._seen = {(p.text, n.text) for p, n in zip(positives, negatives)}

    def finalize(self) -> ExperiencePools:
        if not self.positives:
            raise EmptyPools("no exemplars were accumulated")
        meta = dict(self.metadata)
        embed_backend = getattr(self.gateway.backend_for("embed"), "backend_id", "?")
        meta.setdefault("embed_backend", embed_backend)
        meta["count"] = len(self.positives)
        return ExperiencePools(tuple(self.positives), tuple(self.negatives), meta)


def _norm(values: tuple[float, ...]) -> float:
    return sum(v * v for v in values) ** 0.5


def build_pools(
    pairs: list[ContrastivePair],
    gateway: Gateway,
    state_dir: Path | None = None,
) -> ExperiencePools:
    """Run issue identification over all pairs and accumulate pools.

    With a `state_dir`, progress and partial pools persist after every
    pair, and a rerun over the same pair list resumes where it stopped.
    """
    if not pairs:
        raise EmptyPools("no contrastive pairs to learn from")
    builder = PoolBuilder(gateway)
    done: set[int] = set()
    if state_dir is not None:
        done = _load_partial_state(state_dir, builder)

    for index, pair in enumerate(pairs):
        if index in done:
            continue
        added = 0
        status = "ok"
        try:
            issues = identify_issues(pair, gateway)
            for issue in issues:
                if builder.add_issue(issue):
                    added += 1
        except Exception as exc:  # per-pair isolation
            status = f"skipped:{type(exc).__name__}"
            logger.warning("pair %d (%s) skipped: %s", index, pair.doc_id, exc)
        if state_dir is not None:
            _append_partial_state(state_dir, builder, index, pair.doc_id, added, status)

    pools = builder.finalize()
    if state_dir is not None:
        save_pools(pools, state_dir)
        _clear_partial_state(state_dir)
    return pools


# --- persistence -----------------------------------------------------------


def _exemplar_dict(e: Exemplar) -> dict:
    return {
        "pair_id": e.pair_id,
        "text": e.text,
        "dimension": e.dimension,
        "description": e.description,
        "embedding": list(e.embedding),
    }


def _exemplar_from_dict(raw: dict) -> Exemplar:
    return Exemplar(
        pair_id=int(raw["pair_id"]),
        text=raw["text"],
        dimension=raw["dimension"],
        description=raw["description"],
        embedding=tuple(float(v) for v in raw["embedding"]),
    )


def _dump_jsonl(path: Path, exemplars: tuple[Exemplar, ...]) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for e in exemplars:
            fp.write(json.dumps(_exemplar_dict(e), sort_keys=True, ensure_ascii=False) + "\n")


def _load_jsonl(path: Path) -> list[Exemplar]:
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                out.append(_exemplar_from_dict(json.loads(line)))
    return out


def save_pools(pools: ExperiencePools, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pos_path = directory / "positives.jsonl"
    neg_path = directory / "negatives.jsonl"
    _dump_jsonl(pos_path, pools.positives)
    _dump_jsonl(neg_path, pools.negatives)
    manifest = {
        "schema_version": POOLS_SCHEMA_VERSION,
        "count": len(pools),
        "metadata": pools.metadata,
        "checksums": {
            "positives.jsonl": hashlib.sha256(pos_path.read_bytes()).hexdigest(),
            "negatives.jsonl": hashlib.sha256(neg_path.read_bytes()).hexdigest(),
        },
        "fingerprint": pools.fingerprint(),
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )


def load_pools(directory: Path | str) -> ExperiencePools:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("schema_version") != POOLS_SCHEMA_VERSION:
        raise ValueError(f"unsupported pools schema: {manifest.get('schema_version')!r}")
    positives = _load_jsonl(directory / "positives.jsonl")
    negatives = _load_jsonl(directory / "negatives.jsonl")
    pools = ExperiencePools(tuple(positives), tuple(negatives), manifest["metadata"])
    if pools.fingerprint() != manifest["fingerprint"]:
        raise ValueError(f"pools fingerprint mismatch in {directory}")
    return pools


# --- resumable partial state ----------------------------------------------


def _load_partial_state(state_dir: Path, builder: PoolBuilder) -> set[int]:
    progress_path = state_dir / "progress.jsonl"
    if not progress_path.exists():
        state_dir.mkdir(parents=True, exist_ok=True)
        return set()
    done = set()
    for line in progress_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            done.add(int(json.loads(line)["index"]))
    pos_partial = state_dir / "positives.partial.jsonl"
    neg_partial = state_dir / "negatives.partial.jsonl"
    if pos_partial.exists():
        builder.restore_exemplars(_load_jsonl(pos_partial), _load_jsonl(neg_partial))
    logger.info("resuming pool build: %d pairs already processed", len(done))
    return done


def _append_partial_state(
    state_dir: Path, builder: PoolBuilder, index: int, doc_id: str, added: int, status: str
) -> None:
    state_dir.mkdir(parents=True, exist_ok=True)
    with open(state_dir / "progress.jsonl", "a", encoding="utf-8") as fp:
        fp.write(
            json.dumps(
                {"index": index, "doc_id": doc_id, "added": added, "status": status},
                sort_keys=True,
                ensure_ascii=False,
            )
            + "\n"
        )
    new_pairs = builder.positives[len(builder.positives) - added :] if added else []
    with open(state_dir / "positives.partial.jsonl", "a", encoding="utf-8") as fp:
        for e in new_pairs:
            fp.write(json.dumps(_exemplar_dict(e), sort_keys=True, ensure_ascii=False) + "\n")
    new_negs = builder.negatives[len(builder.negatives) - added :] if added else []
    with open(state_dir / "negatives.partial.jsonl", "a", encoding="utf-8") as fp:
        for e in new_negs:
            fp.write(json.dumps(_exemplar_dict(e), sort_keys=True, ensure_ascii=False) + "\n")


def _clear_partial_state(state_dir: Path) -> None:
    for name in ("progress.jsonl", "positives.partial.jsonl", "negatives.partial.jsonl"):
        path = state_dir / name
        if path.exists():
            path.unlink()


# --- regression handoff ----------------------------------------------------


def train_from_pools(
    pools: ExperiencePools,
    catalog: FeatureCatalog | None = None,
    lam: float = 1.0,
    k: int = 25,
) -> RegressionModel:
    """Features + normalization + regression + top-k, stamped with versions."""
    if len(pools) == 0:
        raise EmptyPools("cannot train on empty pools")
    cat = catalog or default_catalog()
    raw_vectors = [extract_features(e.text, cat) for e in pools.positives] + [
        extract_features(e.text, cat) for e in pools.negatives
    ]
    params = fit_normalization(raw_vectors)
    examples = []
    for i, vector in enumerate(raw_vectors):
        label = 1 if i < len(pools) else 0
        examples.append(LabeledExample(features=normalize(vector, params), label=label))
    model = train(examples, lam)
    model = replace(model, normalization=params, pools_fingerprint=pools.fingerprint())
    return select_top_k(model, k)
