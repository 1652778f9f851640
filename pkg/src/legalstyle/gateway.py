"""Uniform access to chat-completion and embedding backends.

Two backends share one interface: an OpenAI-compatible HTTP backend for
live runs, and a seeded mock whose replies are pure functions of
(request, seed) so the whole pipeline is reproducible offline.  No other
module performs network I/O.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import BackendUnavailable, EmptyText, ProtocolError
from .textmodel import split_sentences

logger = logging.getLogger(__name__)

ROLE_DEGRADE = "degrade"
ROLE_RESTORE = "restore"
ROLE_IDENTIFY = "identify"
ROLE_JUDGE = "judge"
ROLE_EMBED = "embed"

PROMPT_DIR = Path(__file__).resolve().parent / "prompts"

PROMPT_VERSIONS = {
    "degrade": "v1",
    "restore": "v1",
    "identify": "v1",
    "judge_analyze": "v1",
    "judge_queries": "v1",
    "judge_evaluate": "v1",
}


def render_prompt(name: str, **kwargs) -> str:
    version = PROMPT_VERSIONS[name]
    template = (PROMPT_DIR / f"{name}_{version}.txt").read_text(encoding="utf-8")
    return template.format(**kwargs)


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 2048
    format: str = "free-text"  # or "structured"

    def __post_init__(self):
        if not self.system.strip() or not self.user.strip():
            raise EmptyText("chat prompts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.format not in ("free-text", "structured"):
            raise ValueError(f"unknown format tag {self.format!r}")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    backend_id: str


# --------------------------------------------------------------------------
# Mock backend
# --------------------------------------------------------------------------

# Formal -> colloquial substitutions used by the mock degrader.  Applied
# longest-first so multi-phrase keys win over their sub-phrases.
DEGRADE_MAP = {
    "自本判决生效之日起": "从判决生效那天起",
    "向本院递交上诉状": "把上诉状交给我们法院",
    "承担民事责任": "自己担责任",
    "承担违约责任": "为违约担责",
    "承担赔偿责任": "负责赔人家",
    "意思表示真实": "都是真心实意的",
    "诚实信用原则": "诚信这条底线",
    "缺乏事实依据": "没有事实根据",
    "缺乏法律依据": "没有法律根据",
    "如不服本判决": "要是不服这个判决",
    "现已审理终结": "现在已经审完了",
    "案件受理费": "案子的受理费",
    "经审理查明": "我们查下来发现",
    "综上所述": "总的来说",
    "本院认为": "我们觉得",
    "判决如下": "最后决定是",
    "裁定如下": "最后定下来是",
    "于法有据": "法律上站得住",
    "于法无据": "法律上站不住",
    "予以支持": "是支持的",
    "不予支持": "不支持",
    "予以采信": "信了",
    "不予采信": "不信",
    "予以采纳": "听了",
    "不予采纳": "没听",
    "予以确认": "认下来",
    "予以准许": "准了",
    "应予支持": "应该支持",
    "应予驳回": "应该驳回",
    "不予受理": "不接这个案子",
    "诉讼请求": "告状的要求",
    "举证责任": "拿证据的责任",
    "双方当事人": "双方",
    "事实清楚": "事情清楚",
    "证据确凿": "证据很足",
    "证据不足": "证据不够",
    "合法有效": "合法管用",
    "权利义务": "权利和义务",
    "法律法规": "法律规矩",
    "依约履行": "按说好的办",
    "诉至本院": "告到我们法院",
    "之规定": "的规定",
    "依照": "按",
    "依法": "按法律",
}

# Colloquial -> neutral substitutions used by the mock restorer.  The mock
# restoration is deliberately imperfect: it cleans up fillers but never
# reintroduces the formulaic legalese removed by degradation.
RESTORE_MAP = {
    "我们查下来发现": "经过核实可以看出",
    "告状的要求": "起诉的要求",
    "按说好的办": "按当初说定的办理",
    "我们觉得": "我们认为",
    "总的来说": "总之",
    "事情清楚": "情况清楚",
    "证据很足": "证据充分",
    "证据不够": "证据不充分",
}

_DIMENSION_ORDER = (
    "noun_usage",
    "verb_usage",
    "adjective_usage",
    "function_words",
    "sentence_coherence",
    "sentence_structure",
    "collocations",
)

_ISSUE_TEMPLATES = {
    "noun_usage": "名词选用偏口语，未使用规范法律称谓",
    "verb_usage": "动词表述随意，缺少规范的处分动词",
    "adjective_usage": "形容词程度词口语化，削弱文书的确定性",
    "function_words": "虚词使用不当，缺少书面语功能词",
    "sentence_coherence": "句间衔接松散，缺少规范的承接语",
    "sentence_structure": "句式结构口语化，不符合判决书句式",
    "collocations": "搭配不符合法律文书的固定用法",
}


def _extract_block(prompt: str, marker: str) -> str:
    # markers may also occur inside instruction sentences; the payload block
    # is always the last occurrence
    start = prompt.rfind(marker)
    if start == -1:
        return ""
    start += len(marker)
    end = prompt.find("【", start)
    if end == -1:
        end = len(prompt)
    return prompt[start:end].strip()


def _apply_map(text: str, mapping: dict[str, str]) -> str:
    for key in sorted(mapping, key=len, reverse=True):
        text = text.replace(key, mapping[key])
    return text


class MockBackend:
    """Deterministic stand-in for both chat and embedding endpoints."""

    def __init__(self, seed: int = 0, embedding_dim: int = 64):
        self.seed = seed
        self.embedding_dim = embedding_dim
        self.backend_id = f"mock-{seed}"

    def _hash(self, *parts: str) -> int:
        payload = "\x1f".join((str(self.seed),) + parts).encode("utf-8")
        return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")

    def complete(self, request: ChatRequest) -> str:
        prompt = request.user
        if "【对照示例】" in prompt:
            return self._evaluate(prompt)
        if "【查询数量】" in prompt:
            return self._queries(prompt)
        if "【标准文本】" in prompt:
            return self._identify(prompt)
        if "【原文】" in prompt:
            return _apply_map(_extract_block(prompt, "【原文】"), DEGRADE_MAP)
        if "【口语文本】" in prompt:
            return _apply_map(_extract_block(prompt, "【口语文本】"), RESTORE_MAP)
        if "【分析任务】" in prompt:
            return self._analyze(prompt)
        return f"好的。[{self._hash(prompt) % 100000:05d}]"

    def _analyze(self, prompt: str) -> str:
        text = _extract_block(prompt, "【待评文本】")
        h = self._hash("analyze", text)
        variants = (
            "该文本在此维度上存在口语化倾向，用语与规范文书有差距。",
            "该文本此维度表现一般，部分表述不符合书面语习惯。",
            "该文本在此维度上问题较明显，需对照规范写法修改。",
        )
        return variants[h % len(variants)]

    def _queries(self, prompt: str) -> str:
        m = re.search(r"【查询数量】(\d+)", prompt)
        x = int(m.group(1)) if m else 1
        text = _extract_block(prompt, "【待评文本】")
        clauses = [c for c in re.split(r"[，。；：、！？\s]+", text) if c]
        queries = []
        for i in range(x):
            if clauses:
                queries.append(clauses[i % len(clauses)])
            else:
                queries.append(f"查询{i + 1}")
        return json.dumps(queries, ensure_ascii=False)

    def _identify(self, prompt: str) -> str:
        gold = _extract_block(prompt, "【标准文本】")
        restored = _extract_block(prompt, "【待评文本】")
        gold_sents = [gold[a:b] for a, b in split_sentences(gold)]
        restored_sents = [restored[a:b] for a, b in split_sentences(restored)]
        offset = self._hash("identify", gold, restored) % len(_DIMENSION_ORDER)
        issues = []
        for i, (g, r) in enumerate(zip(gold_sents, restored_sents)):
            if g == r:
                continue
            dim = _DIMENSION_ORDER[(offset + i) % len(_DIMENSION_ORDER)]
            issues.append(
                {
                    "dimension": dim,
                    "description": _ISSUE_TEMPLATES[dim],
                    "gold_span": g,
                    "restored_span": r,
                }
            )
            if len(issues) >= 4:
                break
        return json.dumps(issues, ensure_ascii=False)

    def _evaluate(self, prompt: str) -> str:
        text = _extract_block(prompt, "【待评文本】")
        h = self._hash("evaluate", text)
        feedback = (
            "1. 对照正例，该文本的措辞与规范文书存在差距。\n"
            "2. 部分表述接近反例的口语化写法。\n"
            "3. 综合判断给予中上评分。"
        )
        _ = h
        return f"{feedback}\nFINAL_SCORE: 7"

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        values = []
        for i in range(self.embedding_dim):
            h = self._hash("embed", text, str(i))
            values.append((h / 2**63) - 1.0)
        norm = sum(v * v for v in values) ** 0.5
        if norm == 0:
            values[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(v / norm for v in values), self.backend_id)


# --------------------------------------------------------------------------
# OpenAI-compatible HTTP backend
# --------------------------------------------------------------------------


class HTTPBackend:
    """Chat/embeddings over OpenAI-compatible endpoints with retries."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        chat_model: str,
        embed_model: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backend_id = f"http:{chat_model}"
        self._embed_dim: int | None = None
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("transport error on %s (attempt %d): %s", path, attempt + 1, exc)
                continue
            if response.status_code == 200:
                try:
                    return response.json()
                except json.JSONDecodeError as exc:
                    raise ProtocolError(f"non-JSON reply from {url}") from exc
            if response.status_code == 429 or response.status_code >= 500:
                last_error = RuntimeError(f"HTTP {response.status_code}")
                logger.warning("retryable HTTP %d on %s (attempt %d)",
                               response.status_code, path, attempt + 1)
                continue
            raise ProtocolError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
        raise BackendUnavailable(
            f"{url} failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.chat_model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        raw = self._post("/chat/completions", payload)
        try:
            content = raw["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat reply: {raw!r}") from exc
        if not isinstance(content, str):
            raise ProtocolError(f"chat content is not a string: {content!r}")
        return content

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        raw = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            values = tuple(float(v) for v in raw["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embedding reply: {raw!r}") from exc
        if self._embed_dim is None:
            self._embed_dim = len(values)
        elif len(values) != self._embed_dim:
            raise ProtocolError(
                f"embedding dimension changed: {len(values)} != {self._embed_dim}"
            )
        return EmbeddingVector(values, self.backend_id)


# --------------------------------------------------------------------------
# Gateway
# --------------------------------------------------------------------------


@dataclass
class Gateway:
    """Role-aware front door; enforces the in-flight cap, an optional
    per-backend rate limit, and audit logging."""

    backends: dict[str, object]
    max_in_flight: int = 8
    rate_limit_per_s: float = 0.0  # 0 disables throttling
    audit_path: Path | None = None
    _semaphore: threading.Semaphore = field(init=False, repr=False)
    _audit_lock: threading.Lock = field(init=False, repr=False)
    _rate_locks: dict[str, threading.Lock] = field(init=False, repr=False)
    _last_call: dict[str, float] = field(init=False, repr=False)
    _seq: int = field(init=False, default=0)

    def __post_init__(self):
        self._semaphore = threading.Semaphore(self.max_in_flight)
        self._audit_lock = threading.Lock()
        self._rate_locks = {}
        self._last_call = {}

    def backend_for(self, role: str):
        backend = self.backends.get(role) or self.backends.get("default")
        if backend is None:
            raise BackendUnavailable(f"no backend configured for role {role!r}")
        return backend

    def _throttle(self, backend) -> None:
        if self.rate_limit_per_s <= 0:
            return
        key = getattr(backend, "backend_id", str(id(backend)))
        lock = self._rate_locks.setdefault(key, threading.Lock())
        interval = 1.0 / self.rate_limit_per_s
        with lock:
            now = time.monotonic()
            wait = self._last_call.get(key, -interval) + interval - now
            if wait > 0:
                time.sleep(wait)
                now = time.monotonic()
            self._last_call[key] = now

    def _audit(self, role: str, kind: str, request_repr: str, response_repr: str) -> None:
        if self.audit_path is None:
            return
        with self._audit_lock:
            self._seq += 1
            entry = {
                "seq": self._seq,
                "role": role,
                "kind": kind,
                "request_sha256": hashlib.sha256(request_repr.encode("utf-8")).hexdigest(),
                "response_sha256": hashlib.sha256(response_repr.encode("utf-8")).hexdigest(),
            }
            with open(self.audit_path, "a", encoding="utf-8") as fp:
                fp.write(json.dumps(entry, sort_keys=True) + "\n")

    def complete(self, role: str, request: ChatRequest) -> str:
        backend = self.backend_for(role)
        self._throttle(backend)
        with self._semaphore:
            reply = backend.complete(request)
        self._audit(role, "chat", request.system + "\x1f" + request.user, reply)
        return reply

    def embed(self, text: str) -> EmbeddingVector:
        backend = self.backend_for(ROLE_EMBED)
        self._throttle(backend)
        with self._semaphore:
            vector = backend.embed(text)
        self._audit(ROLE_EMBED, "embed", text, repr(vector.values[:4]))
        return vector


def mock_gateway(seed: int = 0, embedding_dim: int = 64, audit_path: Path | None = None) -> Gateway:
    backend = MockBackend(seed=seed, embedding_dim=embedding_dim)
    return Gateway(backends={"default": backend}, audit_path=audit_path)
