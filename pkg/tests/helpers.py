"""Shared test fixtures: synthetic judgment corpus and stub backends."""

from __future__ import annotations

import numpy as np

from legalstyle.experience import Exemplar, ExperiencePools
from legalstyle.gateway import ChatRequest, EmbeddingVector, Gateway, MockBackend

NAMES = ["张某", "李某", "王某", "刘某", "陈某", "赵某", "周某", "吴某"]


def _reasoning_sentences(n1: str, n2: str, amount: int, interest: int) -> list[str]:
    return [
        f"本院认为，原告{n1}与被告{n2}签订的借款合同系双方当事人真实意思表示，合法有效",
        f"被告{n2}未按约定偿还借款本金{amount}元，应承担违约责任",
        f"原告{n1}要求被告{n2}支付利息{interest}元，于法有据，本院予以支持",
        f"被告{n2}辩称已部分还款，但证据不足，本院不予采信",
        f"原告{n1}主张的其余费用缺乏事实依据，应予驳回",
        "综上所述，原告的诉讼请求事实清楚，应予支持",
    ]


def make_judgment(rng: np.random.Generator, idx: int) -> dict:
    """One synthetic first-instance civil judgment with all five sections."""
    n1, n2 = rng.choice(NAMES, size=2, replace=False)
    amount = int(rng.integers(1, 50)) * 1000
    interest = int(rng.integers(1, 9)) * 100
    month = int(rng.integers(1, 13))
    sentences = _reasoning_sentences(n1, n2, amount, interest)
    picked = [sentences[0]] + [
        sentences[i] for i in sorted(rng.choice(range(1, 5), size=3, replace=False))
    ] + [sentences[5]]
    reasoning = "。".join(picked) + "。"
    text = (
        f"某某市中级人民法院\n民事判决书\n（2023）某民初{100 + idx}号\n"
        f"原告：{n1}。\n被告：{n2}。\n"
        f"原告诉称：被告{n2}于2022年{month}月向其借款{amount}元，至今未还。"
        f"经审理查明：双方借贷事实存在，有借条及转账记录为证。\n"
        f"{reasoning}\n"
        f"判决如下：一、被告{n2}于本判决生效之日起十日内偿还原告{n1}借款本金{amount}元。"
        f"二、驳回原告的其他诉讼请求。\n"
        f"如不服本判决，可在判决书送达之日起十五日内，向本院递交上诉状。\n"
        f"审判员：{rng.choice(NAMES)}\n二〇二三年{month}月十日\n"
    )
    return {"id": f"doc{idx:04d}", "text": text}


def make_corpus(seed: int, count: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [make_judgment(rng, i) for i in range(count)]


class StubBackend:
    """Chat backend returning scripted replies; embeds like the mock."""

    def __init__(self, replies, embedding_dim: int = 16):
        self._replies = replies
        self.calls: list[ChatRequest] = []
        self._mock = MockBackend(seed=0, embedding_dim=embedding_dim)
        self.backend_id = "stub"

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        if callable(self._replies):
            return self._replies(request)
        index = min(len(self.calls) - 1, len(self._replies) - 1)
        return self._replies[index]

    def embed(self, text: str) -> EmbeddingVector:
        return self._mock.embed(text)


def stub_gateway(replies, embedding_dim: int = 16) -> tuple[Gateway, StubBackend]:
    backend = StubBackend(replies, embedding_dim=embedding_dim)
    return Gateway(backends={"default": backend}), backend


class CountingBackend:
    """Delegates to a mock backend while counting chat and embed calls."""

    def __init__(self, seed: int = 0, embedding_dim: int = 16):
        self._mock = MockBackend(seed=seed, embedding_dim=embedding_dim)
        self.chat_calls = 0
        self.embed_calls = 0
        self.backend_id = self._mock.backend_id

    def complete(self, request: ChatRequest) -> str:
        self.chat_calls += 1
        return self._mock.complete(request)

    def embed(self, text: str) -> EmbeddingVector:
        self.embed_calls += 1
        return self._mock.embed(text)


def make_fake_pools(vectors: list[list[float]]) -> ExperiencePools:
    """Pools whose negative embeddings are the given vectors."""
    positives = []
    negatives = []
    dim = len(vectors[0])
    for i, vec in enumerate(vectors):
        positives.append(
            Exemplar(i, f"正例文本{i}", "noun_usage", "示例", tuple(float(x) for x in np.eye(dim)[i % dim]))
        )
        negatives.append(
            Exemplar(i, f"反例文本{i}", "noun_usage", "示例", tuple(float(x) for x in vec))
        )
    return ExperiencePools(tuple(positives), tuple(negatives), {"schema_version": 1})
