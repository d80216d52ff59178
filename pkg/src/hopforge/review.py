"""Human adjudication: assignments, Retain/Discard verdicts, agreement.

Each item goes to exactly three annotators (round-robin over the pool).
Once all three verdicts are in, unanimity completes the item with the
consensus label; a split routes it to adjudication, where a final decision
plus rationale finalizes it without touching the stored verdicts.

Agreement is Fleiss' kappa over the binary decision. The degenerate case —
every rater putting every item in one single category, so expected
agreement is 1 and the formula is 0/0 — is defined as 1.0 and raises a
warning, since observed agreement is total.

State is an append-only event log replayed at startup.
"""

from __future__ import annotations

import datetime as _dt
import itertools
import json
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ReviewError

DECISIONS = ("retain", "discard")
DIMENSION_FLAGS = (
    "factuality",
    "faithfulness",
    "fluency",
    "reasoning_validity",
    "comparison_consistency",
)
STATUS_ORDER = ("open", "complete", "adjudicating", "finalized")


class DegenerateAgreementWarning(UserWarning):
    """Expected agreement is 1; kappa is defined as 1.0 by convention."""


def fleiss_kappa(matrix: list[list[int]], n_raters: int) -> float:
    """Fleiss' kappa for an items x categories count matrix.

    Every row must sum to ``n_raters``; at least two items are required.
    """
    if len(matrix) < 2:
        raise ReviewError("fleiss_kappa requires at least 2 items")
    n_categories = len(matrix[0])
    for i, row in enumerate(matrix):
        if len(row) != n_categories:
            raise ReviewError(f"row {i} has {len(row)} categories, expected {n_categories}")
        if sum(row) != n_raters:
            raise ReviewError(f"row {i} sums to {sum(row)}, expected {n_raters}")

    n_items = len(matrix)
    p_i = [
        (sum(c * c for c in row) - n_raters) / (n_raters * (n_raters - 1))
        for row in matrix
    ]
    p_bar = sum(p_i) / n_items
    totals = [sum(row[j] for row in matrix) for j in range(n_categories)]
    p_j = [t / (n_items * n_raters) for t in totals]
    p_e = sum(p * p for p in p_j)
    if p_e >= 1.0:
        warnings.warn(
            "all ratings fall in a single category; kappa defined as 1.0",
            DegenerateAgreementWarning,
        )
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


@dataclass
class Assignment:
    item_id: str
    annotator_ids: list[str]
    status: str = "open"

    def __post_init__(self):
        if len(self.annotator_ids) != 3 or len(set(self.annotator_ids)) != 3:
            raise ReviewError("an assignment needs exactly 3 distinct annotators")


@dataclass
class Verdict:
    item_id: str
    annotator_id: str
    decision: str
    dimension_flags: list[str] = field(default_factory=list)
    submitted_at: str = ""

    def __post_init__(self):
        if self.decision not in DECISIONS:
            raise ReviewError(f"decision must be one of {DECISIONS}")
        bad = [f for f in self.dimension_flags if f not in DIMENSION_FLAGS]
        if bad:
            raise ReviewError(f"unknown dimension flags: {bad}")
        if self.decision == "discard" and not self.dimension_flags:
            raise ReviewError("a discard verdict requires at least one dimension flag")


@dataclass
class AgreementReport:
    n_items: int
    n_raters: int
    kappa: float | None
    per_category_marginals: dict[str, float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "n_raters": self.n_raters,
            "kappa": self.kappa,
            "per_category_marginals": self.per_category_marginals,
            "degenerate": self.degenerate,
        }


def assign(item_ids: list[str], annotator_pool: list[str]) -> list[Assignment]:
    """Round-robin each item to three distinct annotators from the pool."""
    if len(annotator_pool) < 3:
        raise ReviewError("annotator pool must contain at least 3 ids")
    if len(set(annotator_pool)) != len(annotator_pool):
        raise ReviewError("annotator pool contains duplicates")
    cycle = itertools.cycle(annotator_pool)
    assignments = []
    for item_id in item_ids:
        trio: list[str] = []
        while len(trio) < 3:
            candidate = next(cycle)
            if candidate not in trio:
                trio.append(candidate)
        assignments.append(Assignment(item_id=item_id, annotator_ids=trio))
    return assignments


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class ReviewStore:
    """Event-sourced review state; every mutation appends one event line."""

    def __init__(self, event_log: str | Path | None = None):
        self.event_log = Path(event_log) if event_log else None
        self.assignments: dict[str, Assignment] = {}
        self._assignment_order: list[str] = []
        self.verdicts: dict[str, dict[str, Verdict]] = {}
        self.adjudications: dict[str, dict] = {}
        self.consensus: dict[str, str] = {}
        # serializes status transitions across concurrent annotators
        self._lock = threading.Lock()
        if self.event_log and self.event_log.is_file():
            self._replay()

    # ------------------------------------------------------------------
    # event plumbing

    def _append_event(self, event: dict) -> None:
        if not self.event_log:
            return
        self.event_log.parent.mkdir(parents=True, exist_ok=True)
        with self.event_log.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        with self.event_log.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                kind = event["event"]
                if kind == "assign":
                    self._apply_assign(event["item_id"], event["annotator_ids"])
                elif kind == "verdict":
                    self._apply_verdict(Verdict(
                        item_id=event["item_id"],
                        annotator_id=event["annotator_id"],
                        decision=event["decision"],
                        dimension_flags=list(event.get("dimension_flags", [])),
                        submitted_at=event.get("at", ""),
                    ))
                elif kind == "adjudicate":
                    self._apply_adjudication(
                        event["item_id"], event["final_decision"], event["rationale"],
                        at=event.get("at", ""),
                    )

    # ------------------------------------------------------------------
    # applications (shared by live calls and replay)

    def _apply_assign(self, item_id: str, annotator_ids: list[str]) -> None:
        if item_id in self.assignments:
            raise ReviewError(f"item {item_id!r} already assigned")
        self.assignments[item_id] = Assignment(item_id=item_id, annotator_ids=list(annotator_ids))
        self._assignment_order.append(item_id)
        self.verdicts.setdefault(item_id, {})

    def _apply_verdict(self, verdict: Verdict) -> str:
        assignment = self.assignments.get(verdict.item_id)
        if assignment is None:
            raise ReviewError(f"item {verdict.item_id!r} is not assigned")
        if verdict.annotator_id not in assignment.annotator_ids:
            raise ReviewError(
                f"annotator {verdict.annotator_id!r} is not assigned to {verdict.item_id!r}"
            )
        if assignment.status != "open":
            raise ReviewError(f"item {verdict.item_id!r} no longer accepts verdicts "
                              f"(status {assignment.status})")
        # last-write-wins per (item, annotator) until all three are in
        self.verdicts[verdict.item_id][verdict.annotator_id] = verdict
        if len(self.verdicts[verdict.item_id]) == 3:
            decisions = {v.decision for v in self.verdicts[verdict.item_id].values()}
            if len(decisions) == 1:
                assignment.status = "complete"
                self.consensus[verdict.item_id] = decisions.pop()
            else:
                assignment.status = "adjudicating"
        return assignment.status

    def _apply_adjudication(self, item_id: str, final_decision: str, rationale: str,
                            at: str = "") -> None:
        assignment = self.assignments.get(item_id)
        if assignment is None:
            raise ReviewError(f"item {item_id!r} is not assigned")
        if assignment.status != "adjudicating":
            raise ReviewError(
                f"item {item_id!r} is not awaiting adjudication (status {assignment.status})"
            )
        if final_decision not in DECISIONS:
            raise ReviewError(f"final decision must be one of {DECISIONS}")
        if not rationale.strip():
            raise ReviewError("adjudication requires a rationale")
        assignment.status = "finalized"
        self.consensus[item_id] = final_decision
        self.adjudications[item_id] = {
            "final_decision": final_decision,
            "rationale": rationale,
            "at": at or _now(),
        }

    # ------------------------------------------------------------------
    # public operations

    def assign_items(self, item_ids: list[str], annotator_pool: list[str]) -> list[Assignment]:
        assignments = assign(item_ids, annotator_pool)
        with self._lock:
            for a in assignments:
                self._apply_assign(a.item_id, a.annotator_ids)
                self._append_event({
                    "event": "assign",
                    "item_id": a.item_id,
                    "annotator_ids": a.annotator_ids,
                    "at": _now(),
                })
        return assignments

    def submit_verdict(self, verdict: Verdict) -> str:
        if not verdict.submitted_at:
            verdict.submitted_at = _now()
        with self._lock:
            status = self._apply_verdict(verdict)
            self._append_event({
                "event": "verdict",
                "item_id": verdict.item_id,
                "annotator_id": verdict.annotator_id,
                "decision": verdict.decision,
                "dimension_flags": verdict.dimension_flags,
                "at": verdict.submitted_at,
            })
        return status

    def adjudicate(self, item_id: str, final_decision: str, rationale: str) -> Assignment:
        with self._lock:
            self._apply_adjudication(item_id, final_decision, rationale)
            self._append_event({
                "event": "adjudicate",
                "item_id": item_id,
                "final_decision": final_decision,
                "rationale": rationale,
                "at": _now(),
            })
            return self.assignments[item_id]

    def queue_for(self, annotator_id: str) -> list[str]:
        """Open item ids assigned to this annotator that still lack their verdict."""
        out = []
        for item_id in self._assignment_order:
            assignment = self.assignments[item_id]
            if assignment.status != "open":
                continue
            if annotator_id not in assignment.annotator_ids:
                continue
            if annotator_id in self.verdicts.get(item_id, {}):
                continue
            out.append(item_id)
        return out

    def verdict_history(self, item_id: str) -> list[Verdict]:
        return [self.verdicts[item_id][a] for a in sorted(self.verdicts.get(item_id, {}))]

    def agreement(self) -> AgreementReport:
        """Kappa over all items with a complete verdict set."""
        rows = []
        counts = {d: 0 for d in DECISIONS}
        for item_id, by_annotator in self.verdicts.items():
            if len(by_annotator) != 3:
                continue
            row = [0, 0]
            for v in by_annotator.values():
                row[DECISIONS.index(v.decision)] += 1
                counts[v.decision] += 1
            rows.append(row)
        total = sum(counts.values())
        marginals = {d: (counts[d] / total if total else 0.0) for d in DECISIONS}
        if len(rows) < 2:
            return AgreementReport(
                n_items=len(rows), n_raters=3, kappa=None,
                per_category_marginals=marginals,
            )
        degenerate = False
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            kappa = fleiss_kappa(rows, 3)
            degenerate = any(
                issubclass(w.category, DegenerateAgreementWarning) for w in caught
            )
        return AgreementReport(
            n_items=len(rows), n_raters=3, kappa=kappa,
            per_category_marginals=marginals, degenerate=degenerate,
        )

    def adjudication_pending(self) -> list[str]:
        return [i for i in self._assignment_order
                if self.assignments[i].status == "adjudicating"]
