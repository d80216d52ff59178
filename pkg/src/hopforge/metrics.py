"""Answer metrics and hop-aware diagnostics.

All functions here are pure. Normalization is the usual QA recipe: lowercase,
drop ASCII punctuation, drop the articles a/an/the, collapse whitespace,
split on spaces. EM and token-multiset F1 take the max over gold aliases.

Hop-aware numbers: ``max_depth`` is the deepest ladder question answered
correctly (the full question included; 0 if none), ``step_stats`` are mean
tool-call counts split by final-answer correctness, and ``mean_topk``
averages the agent-chosen k over all tool calls.
"""

from __future__ import annotations

import csv
import io
import string
from collections import Counter
from dataclasses import dataclass, field

from .errors import HopforgeError

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> list[str]:
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    tokens = [t for t in text.split() if t not in _ARTICLES]
    return tokens


def exact_match(pred: str, golds: list[str]) -> int:
    if not golds:
        raise HopforgeError("exact_match requires at least one gold answer")
    pred_tokens = normalize_answer(pred)
    return int(any(pred_tokens == normalize_answer(g) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: list[str]) -> float:
    if not golds:
        raise HopforgeError("f1 requires at least one gold answer")
    pred_tokens = normalize_answer(pred)
    return max(_f1_single(pred_tokens, normalize_answer(g)) for g in golds)


def max_depth(hops: int, per_hop_correct: dict[int, int]) -> int:
    """Deepest hop h in 1..hops answered correctly; 0 when none."""
    missing = [h for h in range(1, hops + 1) if h not in per_hop_correct]
    if missing:
        raise HopforgeError(f"per_hop_correct missing hops {missing}")
    solved = [h for h in range(1, hops + 1) if per_hop_correct[h]]
    return max(solved) if solved else 0


@dataclass
class ItemResult:
    item_id: str
    model_name: str
    topology: str
    hops: int
    final_correct_em: int
    f1: float
    judge_correct: int
    steps: int
    mean_topk: float | None
    per_hop_correct: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "model_name": self.model_name,
            "topology": self.topology,
            "hops": self.hops,
            "final_correct_em": self.final_correct_em,
            "f1": self.f1,
            "judge_correct": self.judge_correct,
            "steps": self.steps,
            "mean_topk": self.mean_topk,
            "per_hop_correct": {str(k): v for k, v in sorted(self.per_hop_correct.items())},
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "ItemResult":
        return cls(
            item_id=rec["item_id"],
            model_name=rec["model_name"],
            topology=rec["topology"],
            hops=rec["hops"],
            final_correct_em=rec["final_correct_em"],
            f1=rec["f1"],
            judge_correct=rec["judge_correct"],
            steps=rec["steps"],
            mean_topk=rec.get("mean_topk"),
            per_hop_correct={int(k): v for k, v in rec.get("per_hop_correct", {}).items()},
        )

    @property
    def hop_coverage_complete(self) -> bool:
        return all(h in self.per_hop_correct for h in range(1, self.hops + 1))


def step_stats(results: list[ItemResult]) -> tuple[float | None, float | None]:
    """(mean steps over EM-correct items, mean over EM-incorrect); None for an empty class."""
    correct = [r.steps for r in results if r.final_correct_em]
    incorrect = [r.steps for r in results if not r.final_correct_em]
    steps_c = sum(correct) / len(correct) if correct else None
    steps_i = sum(incorrect) / len(incorrect) if incorrect else None
    return steps_c, steps_i


def mean_topk(traces: list) -> float:
    """Mean agent-chosen topk over every tool call of every trace."""
    topks = []
    for trace in traces:
        for step in trace.steps:
            action = step.action
            if hasattr(action, "topk"):
                topks.append(action.topk)
    if not topks:
        raise HopforgeError("mean_topk requires at least one tool call")
    return sum(topks) / len(topks)


@dataclass
class MetricsRow:
    model_name: str
    topology: str
    hops: int
    n_items: int
    em: float     # percentage
    f1: float     # percentage
    llm: float    # percentage


@dataclass
class DiagnosticsRow:
    model_name: str
    topology: str
    hops: int
    max_d: float | None
    steps_c: float | None
    steps_i: float | None
    n_correct: int
    n_incorrect: int
    mean_topk: float | None


@dataclass
class EvalReport:
    metrics_rows: list[MetricsRow]
    diagnostics_rows: list[DiagnosticsRow]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "topology", "hops", "n", "EM", "F1", "LLM"])
        for row in self.metrics_rows:
            writer.writerow([
                row.model_name, row.topology, row.hops, row.n_items,
                f"{row.em:.1f}", f"{row.f1:.1f}", f"{row.llm:.1f}",
            ])
        return buf.getvalue()

    def diagnostics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "model", "topology", "hops", "MaxD", "Steps-C", "Steps-I",
            "n_correct", "n_incorrect", "mean_topk",
        ])
        for row in self.diagnostics_rows:
            writer.writerow([
                row.model_name, row.topology, row.hops,
                _fmt(row.max_d), _fmt(row.steps_c), _fmt(row.steps_i),
                row.n_correct, row.n_incorrect, _fmt(row.mean_topk),
            ])
        return buf.getvalue()

    def text_report(self) -> str:
        lines = ["== Metrics (per topology x hop) =="]
        header = f"{'model':<24} {'topology':<12} {'hops':>4} {'n':>4} {'EM':>6} {'F1':>6} {'LLM':>6}"
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.metrics_rows:
            lines.append(
                f"{r.model_name:<24} {r.topology:<12} {r.hops:>4} {r.n_items:>4} "
                f"{r.em:>6.1f} {r.f1:>6.1f} {r.llm:>6.1f}"
            )
        lines.append("")
        lines.append("== Diagnostics (per topology x hop) ==")
        header = (
            f"{'model':<24} {'topology':<12} {'hops':>4} {'MaxD':>6} "
            f"{'Steps-C':>8} {'Steps-I':>8} {'topk':>6}"
        )
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.diagnostics_rows:
            lines.append(
                f"{r.model_name:<24} {r.topology:<12} {r.hops:>4} {_fmt(r.max_d):>6} "
                f"{_fmt(r.steps_c):>8} {_fmt(r.steps_i):>8} {_fmt(r.mean_topk):>6}"
            )
        lines.append("")
        return "\n".join(lines)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def aggregate_report(
    results: list[ItemResult],
    traces: list,
    group_by: tuple[str, ...] = ("model", "topology", "hops"),
) -> EvalReport:
    """Group results (default: model x topology x hops) into the report tables.

    Every result must join to a trace by (item_id, model); traces supply the
    per-call topk values. Fields left out of ``group_by`` collapse to a
    single "all" bucket.
    """
    unknown = set(group_by) - {"model", "topology", "hops"}
    if unknown:
        raise HopforgeError(f"unknown group_by fields: {sorted(unknown)}")
    trace_index = {}
    for trace in traces:
        trace_index[(trace.item_id, trace.model_name)] = trace
    for res in results:
        if (res.item_id, res.model_name) not in trace_index:
            raise HopforgeError(
                f"result {res.item_id!r} ({res.model_name}) has no matching trace"
            )

    def key_for(res: ItemResult) -> tuple:
        return (
            res.model_name if "model" in group_by else "all",
            res.topology if "topology" in group_by else "all",
            res.hops if "hops" in group_by else 0,
        )

    groups: dict[tuple, list[ItemResult]] = {}
    for res in results:
        groups.setdefault(key_for(res), []).append(res)

    metrics_rows = []
    diagnostics_rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        model, topology, hops = key
        rows = groups[key]
        n = len(rows)
        em_rate = sum(r.final_correct_em for r in rows) / n
        f1_mean = sum(r.f1 for r in rows) / n
        judge_mean = sum(r.judge_correct for r in rows) / n
        metrics_rows.append(MetricsRow(model, topology, hops, n,
                                       em_rate * 100, f1_mean * 100, judge_mean * 100))

        covered = [r for r in rows if r.hop_coverage_complete]
        max_d = (
            sum(max_depth(r.hops, r.per_hop_correct) for r in covered) / len(covered)
            if covered else None
        )
        if max_d is not None and len(covered) == n:
            # Solved full question implies depth = hops, so the group mean
            # depth can never fall below hops * EM-rate.
            assert max_d >= hops * em_rate - 1e-9
        steps_c, steps_i = step_stats(rows)
        group_traces = [trace_index[(r.item_id, r.model_name)] for r in rows]
        try:
            topk_mean = mean_topk(group_traces)
        except HopforgeError:
            topk_mean = None
        diagnostics_rows.append(DiagnosticsRow(
            model, topology, hops, max_d, steps_c, steps_i,
            n_correct=sum(r.final_correct_em for r in rows),
            n_incorrect=sum(1 - r.final_correct_em for r in rows),
            mean_topk=topk_mean,
        ))
    return EvalReport(metrics_rows, diagnostics_rows)
