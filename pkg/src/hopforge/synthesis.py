"""Benchmark item synthesis.

Atomic QA pairs are generated per document and pushed through three gates
(heuristic, retrieval necessity, grounded solvability). Passing atomics are
linked into 2-hop items under two topologies — inference chains bridge
through the base answer, comparison pairs measure one attribute on two
entities — and verified items are iteratively deepened to 3 and 4 hops by
appending inference-style hops onto the current final answer.

Every item keeps its full ladder: the h-hop composed question/answer for
every h up to the item's depth, so any prefix of an item is itself a valid
shallower item.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .corpus import Document, DocumentStore, normalize_title
from .errors import ComposeError, GatewayError, SynthesisError
from .gateway import LLMGateway
from .retrieval import SearchIndex

MAX_HOPS = 4
FILTER_GATES = ("heuristic", "necessity", "solvability")

_DIGITS_ONLY_RE = re.compile(r"^[\d\s\W]+$", re.UNICODE)
_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?")


class Topology(str, Enum):
    INFERENCE = "inference"
    COMPARISON = "comparison"


def normalize_phrase(text: str) -> str:
    """Lowercase + whitespace collapse; used for containment checks."""
    return " ".join(text.lower().split())


def contains_phrase(haystack: str, needle: str) -> bool:
    return normalize_phrase(needle) in normalize_phrase(haystack)


def parse_leading_number(text: str) -> float | None:
    m = _NUMBER_RE.search(text)
    if not m:
        return None
    return float(m.group(0).replace(",", ""))


@dataclass(frozen=True)
class AtomicQA:
    question: str
    answer: str
    doc_id: str
    passed_filters: frozenset[str] = frozenset()

    def all_filters_passed(self) -> bool:
        return set(FILTER_GATES) <= set(self.passed_filters)


@dataclass
class FilterDecision:
    qa: AtomicQA
    passed: bool
    reason: str | None = None  # heuristic | necessity | solvability | undetermined


@dataclass(frozen=True)
class HopRecord:
    hop_index: int
    atomic: AtomicQA
    composed_question: str
    composed_answer: str

    def to_dict(self) -> dict:
        return {
            "hop": self.hop_index,
            "sub_question": self.atomic.question,
            "sub_answer": self.atomic.answer,
            "composed_question": self.composed_question,
            "composed_answer": self.composed_answer,
            "doc_id": self.atomic.doc_id,
        }


@dataclass
class HopItem:
    item_id: str
    topology: Topology
    hops: int
    ladder: list[HopRecord]
    final_question: str
    final_answer: str
    answer_aliases: list[str] = field(default_factory=list)
    verification: object | None = None  # VerificationRecord, set by the verifier
    review_status: str = "unreviewed"

    def __post_init__(self):
        if self.hops not in (2, 3, 4):
            raise SynthesisError(f"hops must be 2..4, got {self.hops}")
        if len(self.ladder) != self.hops:
            raise SynthesisError("ladder length must equal hops")
        for i, rec in enumerate(self.ladder, start=1):
            if rec.hop_index != i:
                raise SynthesisError("hop_index must increase 1..hops")
        doc_ids = [rec.atomic.doc_id for rec in self.ladder]
        if len(set(doc_ids)) != len(doc_ids):
            raise SynthesisError("supporting documents must be pairwise distinct")
        if self.ladder[-1].composed_question != self.final_question:
            raise SynthesisError("final_question must equal the last composed question")
        if self.ladder[-1].composed_answer != self.final_answer:
            raise SynthesisError("final_answer must equal the last composed answer")

    def doc_ids(self) -> list[str]:
        return [rec.atomic.doc_id for rec in self.ladder]

    def to_export_dict(self, store: DocumentStore | None = None) -> dict:
        ladder = []
        for rec in self.ladder:
            row = rec.to_dict()
            if store is not None:
                row["doc_title"] = store.get(rec.atomic.doc_id).title
            ladder.append(row)
        return {
            "item_id": self.item_id,
            "topology": self.topology.value,
            "hops": self.hops,
            "question": self.final_question,
            "answer": self.final_answer,
            "answer_aliases": list(self.answer_aliases),
            "ladder": ladder,
        }


def item_id_for(topology: Topology, hops: int, final_question: str, final_answer: str) -> str:
    digest = hashlib.sha1(f"{final_question}\x1f{final_answer}".encode("utf-8")).hexdigest()[:12]
    return f"{topology.value}-{hops}hop-{digest}"


def _parse_qa_pairs(text: str) -> list[tuple[str, str]]:
    """Parse 'Q: ... / A: ...' pairs; malformed chunks are dropped."""
    pairs = []
    question = None
    for line in text.splitlines():
        line = line.strip()
        if line.lower().startswith("q:"):
            question = line[2:].strip()
        elif line.lower().startswith("a:") and question:
            answer = line[2:].strip()
            if answer:
                pairs.append((question, answer))
            question = None
    return pairs


def _parse_question_answer(text: str) -> tuple[str, str]:
    question = answer = None
    for line in text.splitlines():
        line = line.strip()
        if line.lower().startswith("question:"):
            question = line.split(":", 1)[1].strip()
        elif line.lower().startswith("answer:"):
            answer = line.split(":", 1)[1].strip()
    if not question or not answer:
        raise ComposeError(f"merge output unparseable: {text[:120]!r}")
    return question, answer


class SynthesisEngine:
    def __init__(
        self,
        gateway: LLMGateway,
        store: DocumentStore,
        index: SearchIndex,
        atomic_per_doc: int = 3,
        link_topk: int = 10,
        max_answer_words: int = 12,
    ):
        self.gateway = gateway
        self.store = store
        self.index = index
        self.atomic_per_doc = atomic_per_doc
        self.link_topk = link_topk
        self.max_answer_words = max_answer_words
        self._atomic_cache: dict[str, list[AtomicQA]] = {}

    # ------------------------------------------------------------------
    # atomic stage

    def generate_atomic(self, doc: Document, n: int | None = None) -> list[AtomicQA]:
        n = n or self.atomic_per_doc
        completion = self.gateway.complete(
            "atomic_generation", {"title": doc.title, "text": doc.text, "n": str(n)}
        )
        pairs = _parse_qa_pairs(completion.text)[:n]
        return [AtomicQA(question=q, answer=a, doc_id=doc.id) for q, a in pairs]

    def _heuristic_ok(self, qa: AtomicQA) -> bool:
        if not qa.question.strip() or not qa.answer.strip():
            return False
        if _DIGITS_ONLY_RE.match(qa.answer):
            return False
        if len(qa.answer.split()) > self.max_answer_words:
            return False
        return True

    def filter_atomic(self, qa: AtomicQA, doc: Document) -> FilterDecision:
        """Apply the three gates in order; the decision records how far it got."""
        if qa.doc_id != doc.id:
            raise SynthesisError("filter_atomic: qa does not reference doc")
        if not self._heuristic_ok(qa):
            return FilterDecision(qa=qa, passed=False, reason="heuristic")
        flags = {"heuristic"}
        try:
            closed = self.gateway.complete("closed_book", {"question": qa.question})
            if self.gateway.judge(qa.question, qa.answer, closed.text.strip() or "no answer") == "correct":
                return FilterDecision(qa=qa, passed=False, reason="necessity")
            flags.add("necessity")
            grounded = self.gateway.complete(
                "grounded_answer",
                {"question": qa.question, "title": doc.title, "text": doc.text},
            )
            if self.gateway.judge(qa.question, qa.answer, grounded.text.strip() or "no answer") != "correct":
                return FilterDecision(qa=qa, passed=False, reason="solvability")
            flags.add("solvability")
        except GatewayError:
            return FilterDecision(qa=qa, passed=False, reason="undetermined")
        return FilterDecision(qa=replace(qa, passed_filters=frozenset(flags)), passed=True)

    def passing_atomics(self, doc: Document) -> list[AtomicQA]:
        """Filtered atomics for a document, cached per doc id."""
        if doc.id not in self._atomic_cache:
            kept = []
            for qa in self.generate_atomic(doc):
                decision = self.filter_atomic(qa, doc)
                if decision.passed:
                    kept.append(decision.qa)
            self._atomic_cache[doc.id] = kept
        return self._atomic_cache[doc.id]

    # ------------------------------------------------------------------
    # linking

    def attribute_phrase(self, question: str) -> str | None:
        completion = self.gateway.complete("attribute_phrase", {"question": question})
        phrase = completion.text.strip().splitlines()[0].strip() if completion.text.strip() else ""
        if not phrase or phrase.upper() == "NONE":
            return None
        return phrase

    def find_link_candidates(
        self,
        base: AtomicQA,
        topology: Topology,
        exclusion_titles: set[str] = frozenset(),
        topk: int | None = None,
        exclude_doc_ids: set[str] = frozenset(),
    ) -> list[Document]:
        """Documents worth linking to ``base``, minus its own and excluded ones."""
        topk = topk or self.link_topk
        if topology is Topology.INFERENCE:
            query = base.answer
        else:
            phrase = self.attribute_phrase(base.question)
            if phrase is None:
                return []
            query = phrase
        ranked = self.index.search(query, topk)
        out = []
        for doc_id in ranked.doc_ids():
            if doc_id == base.doc_id or doc_id in exclude_doc_ids:
                continue
            doc = self.store.get(doc_id)
            if normalize_title(doc.title) in exclusion_titles:
                continue
            out.append(doc)
        return out

    # ------------------------------------------------------------------
    # composition

    def _aliases_for(self, question: str, answer: str) -> list[str]:
        try:
            completion = self.gateway.complete("aliases", {"question": question, "answer": answer})
        except GatewayError:
            return []
        aliases = []
        for line in completion.text.splitlines():
            line = line.strip()
            if line and line.upper() != "NONE" and line != answer:
                aliases.append(line)
        return aliases

    def compose_2hop(self, base: AtomicQA, link: AtomicQA, topology: Topology) -> HopItem:
        if not (base.all_filters_passed() and link.all_filters_passed()):
            raise ComposeError("both atomics must have passed all filters")
        if base.doc_id == link.doc_id:
            raise ComposeError("base and link must come from distinct documents")

        if topology is Topology.INFERENCE:
            if not contains_phrase(link.question, base.answer):
                raise ComposeError("link question does not mention the base answer (bridging violated)")
            completion = self.gateway.complete(
                "merge_inference",
                {
                    "base_question": base.question,
                    "base_answer": base.answer,
                    "link_question": link.question,
                    "link_answer": link.answer,
                },
            )
            question, _ = _parse_question_answer(completion.text)
            answer = link.answer
        else:
            base_doc = self.store.get(base.doc_id)
            link_doc = self.store.get(link.doc_id)
            attribute = self.attribute_phrase(base.question)
            if attribute is None or not contains_phrase(link.question, attribute):
                raise ComposeError("atomics do not measure a shared attribute")
            base_value = parse_leading_number(base.answer)
            link_value = parse_leading_number(link.answer)
            if base_value is None or link_value is None:
                raise ComposeError("comparison answers must carry numeric values")
            if base_value == link_value:
                raise ComposeError("comparison values are equal (no tie semantics)")
            completion = self.gateway.complete(
                "merge_comparison",
                {
                    "attribute": attribute,
                    "entity_a": base_doc.title,
                    "question_a": base.question,
                    "answer_a": base.answer,
                    "entity_b": link_doc.title,
                    "question_b": link.question,
                    "answer_b": link.answer,
                },
            )
            question, answer = _parse_question_answer(completion.text)
            if answer not in (base_doc.title, link_doc.title):
                raise ComposeError(f"comparison verdict {answer!r} names neither entity")

        ladder = [
            HopRecord(1, base, base.question, base.answer),
            HopRecord(2, link, question, answer),
        ]
        return HopItem(
            item_id=item_id_for(topology, 2, question, answer),
            topology=topology,
            hops=2,
            ladder=ladder,
            final_question=question,
            final_answer=answer,
            answer_aliases=self._aliases_for(question, answer),
        )

    def extend_hop(self, item: HopItem, new_link: AtomicQA) -> HopItem:
        if item.verification is None or not item.verification.passed_all:
            raise ComposeError("only verified items may be extended")
        if item.hops >= MAX_HOPS:
            raise ComposeError(f"cannot extend beyond {MAX_HOPS} hops")
        if not contains_phrase(new_link.question, item.final_answer):
            raise ComposeError("new link does not bridge from the item's final answer")
        if new_link.doc_id in item.doc_ids():
            raise ComposeError("new link document already supports this item")

        completion = self.gateway.complete(
            "extend_inference",
            {
                "composed_question": item.final_question,
                "composed_answer": item.final_answer,
                "link_question": new_link.question,
                "link_answer": new_link.answer,
            },
        )
        question, _ = _parse_question_answer(completion.text)
        answer = new_link.answer
        hops = item.hops + 1
        ladder = list(item.ladder) + [HopRecord(hops, new_link, question, answer)]
        return HopItem(
            item_id=item_id_for(item.topology, hops, question, answer),
            topology=item.topology,
            hops=hops,
            ladder=ladder,
            final_question=question,
            final_answer=answer,
            answer_aliases=self._aliases_for(question, answer),
        )
