"""Multi-stage verification of candidate benchmark items.

Stages run in a fixed order — structural, semantic, necessity,
irreducibility, solvability — and a failure stops the protocol, so a
record's evaluated stages are always a prefix of that order.

The structural stage starts with deterministic leakage rules that need no
model: an intermediate atomic answer appearing verbatim (normalized
substring) in the final question fails the item, and so does the final
answer itself, except for comparison items whose verdict is one of the two
compared entity names (a comparison question must name both candidates).
Irreducibility runs one leave-one-out trial per hop and records each
verdict; every trial must be judged incorrect.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DocumentStore
from .errors import GatewayError, JudgeParseError, VerificationUndetermined
from .gateway import LLMGateway
from .synthesis import HopItem, Topology, normalize_phrase

STAGE_ORDER = ("structural", "semantic", "necessity", "irreducibility", "solvability")


@dataclass
class StageResult:
    passed: bool
    reason: str


@dataclass
class VerificationRecord:
    stage_results: dict[str, StageResult]
    passed_all: bool
    oracle_model: str
    timestamp: str
    hop_removal_verdicts: dict[int, str] = field(default_factory=dict)

    def evaluated_stages(self) -> list[str]:
        return [s for s in STAGE_ORDER if s in self.stage_results]

    def to_dict(self) -> dict:
        return {
            "stage_results": {
                s: {"passed": r.passed, "reason": r.reason}
                for s, r in self.stage_results.items()
            },
            "passed_all": self.passed_all,
            "oracle_model": self.oracle_model,
            "timestamp": self.timestamp,
            "hop_removal_verdicts": {str(h): v for h, v in self.hop_removal_verdicts.items()},
        }


def leakage_pre_check(item: HopItem) -> StageResult:
    """Deterministic structural rules; exactly testable without a model."""
    question_norm = normalize_phrase(item.final_question)
    for rec in item.ladder[:-1]:
        if normalize_phrase(rec.atomic.answer) in question_norm:
            return StageResult(
                passed=False,
                reason=f"information_leakage: hop {rec.hop_index} answer appears in the question",
            )
    # A question containing its own answer is degenerate — unless the answer
    # is a comparison verdict, i.e. an entity name the question must mention.
    final_norm = normalize_phrase(item.final_answer)
    exempt = (
        item.topology is Topology.COMPARISON
        and final_norm == normalize_phrase(item.ladder[1].composed_answer)
    )
    if not exempt and final_norm in question_norm:
        return StageResult(passed=False, reason="information_leakage: final answer appears in the question")
    return StageResult(passed=True, reason="leakage-free")


def _ladder_text(item: HopItem) -> str:
    lines = []
    for rec in item.ladder:
        lines.append(f"hop {rec.hop_index}: {rec.atomic.question} -> {rec.atomic.answer}")
    return "\n".join(lines)


def _parse_audit(text: str) -> StageResult:
    head = text.strip().splitlines()[0].strip() if text.strip() else ""
    if head.upper().startswith("PASS"):
        return StageResult(passed=True, reason="audit passed")
    if head.upper().startswith("FAIL"):
        reason = head.split(":", 1)[1].strip() if ":" in head else "audit failed"
        return StageResult(passed=False, reason=reason)
    raise JudgeParseError(f"unparseable audit verdict: {text[:120]!r}")


class Verifier:
    def __init__(self, gateway: LLMGateway, store: DocumentStore):
        self.gateway = gateway
        self.store = store

    def _evidence_block(self, item: HopItem, skip_hop: int | None = None) -> str:
        chunks = []
        for rec in item.ladder:
            if rec.hop_index == skip_hop:
                continue
            doc = self.store.get(rec.atomic.doc_id)
            chunks.append(f'"{doc.title}"\n{doc.text}')
        return "\n\n".join(chunks)

    def _oracle_answer(self, question: str, evidence: str) -> str:
        completion = self.gateway.complete(
            "multihop_answer", {"question": question, "evidence": evidence}
        )
        return completion.text.strip() or "no answer"

    def _judged(self, item: HopItem, predicted: str) -> str:
        return self.gateway.judge(item.final_question, item.final_answer, predicted)

    def verify_structural(self, item: HopItem) -> StageResult:
        pre = leakage_pre_check(item)
        if not pre.passed:
            return pre
        try:
            completion = self.gateway.complete("structural_audit", {"question": item.final_question})
            return _parse_audit(completion.text)
        except GatewayError as exc:
            raise VerificationUndetermined("structural", str(exc)) from exc

    def verify_semantic(self, item: HopItem) -> StageResult:
        template = (
            "semantic_audit_inference"
            if item.topology is Topology.INFERENCE
            else "semantic_audit_comparison"
        )
        try:
            completion = self.gateway.complete(
                template, {"question": item.final_question, "ladder": _ladder_text(item)}
            )
            return _parse_audit(completion.text)
        except GatewayError as exc:
            raise VerificationUndetermined("semantic", str(exc)) from exc

    def verify_necessity_solvability(self, item: HopItem) -> tuple[dict[str, StageResult], dict[int, str]]:
        """The three oracle checks; returns (ordered stage results, per-hop verdicts)."""
        results: dict[str, StageResult] = {}
        hop_verdicts: dict[int, str] = {}

        # (i) necessity: the closed-book answer must be judged incorrect.
        try:
            closed = self.gateway.complete("closed_book", {"question": item.final_question})
            verdict = self._judged(item, closed.text.strip() or "no answer")
        except GatewayError as exc:
            raise VerificationUndetermined("necessity", str(exc)) from exc
        if verdict == "correct":
            results["necessity"] = StageResult(False, "answerable without retrieval")
            return results, hop_verdicts
        results["necessity"] = StageResult(True, "closed-book answer judged incorrect")

        # (ii) irreducibility: every leave-one-out attempt must fail.
        recoverable: list[int] = []
        for rec in item.ladder:
            h = rec.hop_index
            try:
                predicted = self._oracle_answer(
                    item.final_question, self._evidence_block(item, skip_hop=h)
                )
                hop_verdicts[h] = self._judged(item, predicted)
            except GatewayError as exc:
                raise VerificationUndetermined("irreducibility", str(exc)) from exc
            if hop_verdicts[h] == "correct":
                recoverable.append(h)
        if recoverable:
            named = ", ".join(str(h) for h in recoverable)
            results["irreducibility"] = StageResult(
                False, f"answer recoverable without hop {named}"
            )
            return results, hop_verdicts
        results["irreducibility"] = StageResult(True, f"all {item.hops} leave-one-out trials failed")

        # (iii) solvability: the full evidence set must yield the right answer.
        try:
            predicted = self._oracle_answer(item.final_question, self._evidence_block(item))
            verdict = self._judged(item, predicted)
        except GatewayError as exc:
            raise VerificationUndetermined("solvability", str(exc)) from exc
        if verdict != "correct":
            results["solvability"] = StageResult(False, "not solvable from the complete evidence set")
        else:
            results["solvability"] = StageResult(True, "solved with the complete evidence set")
        return results, hop_verdicts

    def verify(self, item: HopItem) -> VerificationRecord:
        """Run the full protocol with short-circuiting; attach nothing to the item."""
        stage_results: dict[str, StageResult] = {}
        hop_verdicts: dict[int, str] = {}

        structural = self.verify_structural(item)
        stage_results["structural"] = structural
        if structural.passed:
            semantic = self.verify_semantic(item)
            stage_results["semantic"] = semantic
            if semantic.passed:
                oracle_results, hop_verdicts = self.verify_necessity_solvability(item)
                stage_results.update(oracle_results)

        passed_all = (
            len(stage_results) == len(STAGE_ORDER)
            and all(r.passed for r in stage_results.values())
        )
        return VerificationRecord(
            stage_results=stage_results,
            passed_all=passed_all,
            oracle_model=self.gateway.model_name,
            timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            hop_removal_verdicts=hop_verdicts,
        )


class VerificationLedger:
    """Append-only JSONL of verification attempts; re-verification appends."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, item_id: str, record: VerificationRecord) -> None:
        rec = {
            "item_id": item_id,
            "stage_results": {
                s: {"passed": r.passed, "reason": r.reason}
                for s, r in record.stage_results.items()
            },
            "passed_all": record.passed_all,
            "oracle_model": record.oracle_model,
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def entries(self) -> list[dict]:
        if not self.path.is_file():
            return []
        out = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(json.loads(line))
        return out
