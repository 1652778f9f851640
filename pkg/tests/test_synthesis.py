import pytest

from helpers import make_corpus, stub_gateway
from legalstyle.errors import (
    DegradationRejected,
    EmptyText,
    InvalidEmphasis,
    RestorationRejected,
    SynthesisFailed,
)
from legalstyle.gateway import MockBackend, ChatRequest, Gateway
from legalstyle.synthesis import (
    EMPHASIS_TAGS,
    ContrastivePair,
    SynthesisConfig,
    Synthesizer,
    extract_preserved_strings,
    pair_from_json,
    pair_to_json,
    preservation_fraction,
)
from legalstyle.textmodel import split_sections

GOLD = (
    "本院认为，原告张某与被告李某签订的借款合同合法有效。"
    "被告李某未偿还借款本金50000元，应承担违约责任。"
    "综上所述，原告的诉讼请求于法有据，本院予以支持。"
)


class TestEntityPreservation:
    def test_extracts_names_and_numbers(self):
        strings = extract_preserved_strings(GOLD)
        assert "张某" in strings
        assert "李某" in strings
        assert "50000" in strings

    def test_fraction_vacuous_without_entities(self):
        assert preservation_fraction("应予支持。", "改写后的内容。") == 1.0

    def test_fraction_counts_missing(self):
        source = "原告张某借给被告李某50000元。"
        assert preservation_fraction(source, source) == 1.0
        dropped = preservation_fraction(source, "原告张某借钱给对方。")
        assert dropped < 1.0


class TestDegradeRestore:
    def test_mock_degradation_passes_validation(self, gw):
        degraded = Synthesizer(gw).degrade(GOLD)
        assert degraded
        assert "本院认为" not in degraded
        assert "张某" in degraded and "50000" in degraded

    def test_empty_input_rejected(self, gw):
        with pytest.raises(EmptyText):
            Synthesizer(gw).degrade(" ")

    def test_entity_loss_rejected_after_attempts(self):
        gateway, backend = stub_gateway(["改写失败的文本。"])
        synthesizer = Synthesizer(gateway, SynthesisConfig(max_attempts=3))
        with pytest.raises(DegradationRejected):
            synthesizer.degrade(GOLD)
        assert len(backend.calls) == 3

    def test_restoration_mirrors_validation(self):
        gateway, backend = stub_gateway(["不含实体的回答。"])
        synthesizer = Synthesizer(gateway, SynthesisConfig(max_attempts=2))
        with pytest.raises(RestorationRejected):
            synthesizer.restore("张某借款50000元给李某。")
        assert len(backend.calls) == 2

    def test_zero_entity_text_vacuously_passes(self, gw):
        degraded = Synthesizer(gw).degrade("应予支持。")
        assert degraded


class TestVariants:
    def test_five_emphases_distinct_provenance(self, gw):
        synthesizer = Synthesizer(gw)
        instructions = set()
        for tag in EMPHASIS_TAGS:
            _, provenance = synthesizer.generate_test_variant("张某借款50000元。", tag)
            assert provenance["emphasis"] == tag
            instructions.add(provenance["emphasis_instruction"])
        assert len(instructions) == 5

    def test_unknown_tag(self, gw):
        with pytest.raises(InvalidEmphasis):
            Synthesizer(gw).restore("文本。", emphasis="speed")

    def test_variant_deterministic(self, gw):
        synthesizer = Synthesizer(gw)
        a, _ = synthesizer.generate_test_variant("张某借款50000元。", "formality")
        b, _ = synthesizer.generate_test_variant("张某借款50000元。", "formality")
        assert a == b


class _SelectiveFailBackend:
    """Mock everywhere except documents containing the poison marker."""

    def __init__(self):
        self._mock = MockBackend(seed=0)
        self.backend_id = "selective"

    def complete(self, request: ChatRequest) -> str:
        if "李某某某" in request.user:
            return "空洞回答。"
        return self._mock.complete(request)

    def embed(self, text):
        return self._mock.embed(text)


class TestCorpusSynthesis:
    def _docs(self, count, seed=7):
        return [split_sections(r["text"], doc_id=r["id"]) for r in make_corpus(seed, count)]

    def test_zero_pairs_requested(self, gw):
        result = Synthesizer(gw).synthesize_corpus(self._docs(3), 0)
        assert result.pairs == [] and result.skipped == []

    def test_n_larger_than_corpus_rejected(self, gw):
        with pytest.raises(ValueError):
            Synthesizer(gw).synthesize_corpus(self._docs(2), 5)

    def test_failed_document_is_skipped(self):
        docs = self._docs(3)
        poisoned = docs[1].raw_text.replace("本院认为，", "本院认为，当事人李某某某称，")
        docs[1] = split_sections(poisoned, doc_id=docs[1].doc_id)
        gateway = Gateway(backends={"default": _SelectiveFailBackend()})
        result = Synthesizer(gateway).synthesize_corpus(docs, 3)
        assert len(result.pairs) == 2
        assert len(result.skipped) == 1
        assert result.skipped[0].doc_id == docs[1].doc_id
        assert len(result.pairs) + len(result.skipped) == 3

    def test_all_failures_raise(self):
        gateway, _ = stub_gateway(["没有实体。"])
        docs = self._docs(2)
        with pytest.raises(SynthesisFailed):
            Synthesizer(gateway).synthesize_corpus(docs, 2)

    def test_gold_never_mutated_and_order_preserved(self, gw):
        docs = self._docs(4)
        result = Synthesizer(gw).synthesize_corpus(docs, 4)
        assert [p.doc_id for p in result.pairs] == [d.doc_id for d in docs]
        for doc, pair in zip(docs, result.pairs):
            assert pair.gold == doc.reasoning

    def test_mock_output_byte_identical(self):
        docs = self._docs(3)
        lines = []
        for _ in range(2):
            gateway = Gateway(backends={"default": MockBackend(seed=11)})
            result = Synthesizer(gateway).synthesize_corpus(docs, 3)
            lines.append("\n".join(pair_to_json(p) for p in result.pairs))
        assert lines[0] == lines[1]

    def test_pair_json_round_trip(self, gw):
        docs = self._docs(1)
        pair = Synthesizer(gw).make_pair(docs[0])
        assert pair_from_json(pair_to_json(pair)) == pair

    def test_provenance_identifies_prompts_and_backends(self, gw):
        pair = Synthesizer(gw).make_pair(self._docs(1)[0])
        assert pair.provenance["prompt_versions"] == {"degrade": "v1", "restore": "v1"}
        assert pair.provenance["degrade_backend"].startswith("mock-")
