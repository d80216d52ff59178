"""Tool-calling episode runner.

One episode = a planning turn, then single-step execution turns. Each
execution turn must produce exactly one action: a ``RAG_search`` call
(structured JSON or the loose ``{query: ..., topk: N}`` argument string) or a
line starting with ``Final_Answer:``. Tool results are appended to the
running transcript as a plain-text block; a protocol violation earns one
re-prompt before the episode aborts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import HopforgeError
from .gateway import DecodingConfig, LLMGateway

DEFAULT_STEP_CAP = 10
DEFAULT_TOPK_CEILING = 10


@dataclass(frozen=True)
class ToolCall:
    query: str
    topk: int

    def __post_init__(self):
        if not self.query.strip():
            raise HopforgeError("tool call query must be non-blank")
        if self.topk < 1:
            raise HopforgeError("tool call topk must be >= 1")


@dataclass(frozen=True)
class FinalAnswer:
    answer: str


@dataclass(frozen=True)
class ProtocolViolation:
    raw: str


_FINAL_RE = re.compile(r"^\s*Final_Answer:\s*(.*)\s*$", re.MULTILINE)
_CALL_RE = re.compile(r'"function_call"\s*:\s*\{')
_LOOSE_ARGS_RE = re.compile(r"^\s*\{?\s*query\s*:\s*(.*?)\s*,\s*topk\s*:\s*(\d+)\s*\}?\s*$", re.DOTALL)


def _balanced_object(text: str, start: int) -> str | None:
    """Extract the {...} object starting at ``start`` (brace counting, quote-aware)."""
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def _parse_arguments(args) -> ToolCall | None:
    if isinstance(args, dict):
        query = args.get("query")
        topk = args.get("topk")
        if isinstance(query, str) and query.strip() and isinstance(topk, int) and topk >= 1:
            return ToolCall(query=query.strip(), topk=topk)
        return None
    if isinstance(args, str):
        try:
            return _parse_arguments(json.loads(args))
        except (json.JSONDecodeError, ValueError):
            pass
        m = _LOOSE_ARGS_RE.match(args.strip())
        if m:
            query = m.group(1).strip().strip('"')
            topk = int(m.group(2))
            if query and topk >= 1:
                return ToolCall(query=query, topk=topk)
    return None


def parse_action(model_output: str) -> ToolCall | FinalAnswer | ProtocolViolation:
    """Map one model reply to exactly one action; violations are values, not errors."""
    call_match = _CALL_RE.search(model_output)
    if call_match:
        obj_text = _balanced_object(model_output, model_output.index("{", call_match.start()))
        if obj_text is not None:
            try:
                payload = json.loads(obj_text)
            except json.JSONDecodeError:
                payload = None
            if isinstance(payload, dict) and payload.get("name") == "RAG_search":
                call = _parse_arguments(payload.get("arguments"))
                if call is not None:
                    return call
        return ProtocolViolation(raw=model_output)
    final_match = _FINAL_RE.search(model_output)
    if final_match:
        answer = final_match.group(1).strip()
        if answer:
            return FinalAnswer(answer=answer)
    return ProtocolViolation(raw=model_output)


def serialize_action(action: ToolCall | FinalAnswer) -> str:
    if isinstance(action, ToolCall):
        return json.dumps(
            {"function_call": {"name": "RAG_search",
                               "arguments": {"query": action.query, "topk": action.topk}}},
            ensure_ascii=False,
        )
    if isinstance(action, FinalAnswer):
        return f"Final_Answer: {action.answer}"
    raise HopforgeError(f"cannot serialize {type(action).__name__}")


@dataclass
class AgentStep:
    index: int
    analysis_text: str
    action: ToolCall | FinalAnswer
    returned_doc_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        if isinstance(self.action, ToolCall):
            action = {"type": "tool_call", "query": self.action.query, "topk": self.action.topk}
        else:
            action = {"type": "final_answer", "answer": self.action.answer}
        return {
            "index": self.index,
            "analysis_text": self.analysis_text,
            "action": action,
            "returned_doc_ids": list(self.returned_doc_ids),
        }


@dataclass
class AgentTrace:
    item_id: str
    model_name: str
    plan_text: str
    steps: list[AgentStep]
    final_answer: str | None
    terminated_by: str  # final_answer | step_cap | protocol_error
    tool_call_count: int
    transcript: str = ""

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "model_name": self.model_name,
            "plan_text": self.plan_text,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "terminated_by": self.terminated_by,
            "tool_call_count": self.tool_call_count,
            "transcript": self.transcript,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "AgentTrace":
        steps = []
        for s in rec["steps"]:
            a = s["action"]
            if a["type"] == "tool_call":
                action = ToolCall(query=a["query"], topk=a["topk"])
            else:
                action = FinalAnswer(answer=a["answer"])
            steps.append(AgentStep(index=s["index"], analysis_text=s["analysis_text"],
                                   action=action, returned_doc_ids=list(s["returned_doc_ids"])))
        return cls(
            item_id=rec["item_id"],
            model_name=rec["model_name"],
            plan_text=rec["plan_text"],
            steps=steps,
            final_answer=rec.get("final_answer"),
            terminated_by=rec["terminated_by"],
            tool_call_count=rec["tool_call_count"],
            transcript=rec.get("transcript", ""),
        )


def _results_block(query: str, topk: int, docs: list) -> str:
    lines = ["[RAGTool Results]", f'Query: "{query}"', f"Topk = {topk}", "Document:"]
    for doc in docs:
        lines.append(f'"{doc.title}"')
        lines.append(doc.text)
    return "\n".join(lines)


_REPROMPT_NOTE = (
    "Your previous reply was not a valid action. Reply with either one "
    'RAG_search function_call or one line starting with Final_Answer: .'
)


def run_question_episode(
    question: str,
    gateway: LLMGateway,
    tool,
    item_id: str,
    step_cap: int = DEFAULT_STEP_CAP,
    topk_ceiling: int = DEFAULT_TOPK_CEILING,
    decoding: DecodingConfig | None = None,
) -> AgentTrace:
    """Run the full transcript protocol for one question."""
    if step_cap < 1:
        raise HopforgeError("step_cap must be >= 1")
    decoding = decoding or DecodingConfig()

    plan = gateway.complete("agent_plan", {"question": question}, decoding).text
    transcript_parts = [f"Here is your task: {question}", f"Plan:\n{plan}"]

    steps: list[AgentStep] = []
    final_answer: str | None = None
    terminated_by = "step_cap"

    for index in range(1, step_cap + 1):
        reply = gateway.complete(
            "agent_action", {"transcript": "\n\n".join(transcript_parts)}, decoding
        ).text
        action = parse_action(reply)
        if isinstance(action, ProtocolViolation):
            # One corrective re-prompt before giving up on the episode.
            transcript_parts.append(_REPROMPT_NOTE)
            reply = gateway.complete(
                "agent_action", {"transcript": "\n\n".join(transcript_parts)}, decoding
            ).text
            action = parse_action(reply)
            if isinstance(action, ProtocolViolation):
                terminated_by = "protocol_error"
                break

        analysis = reply[: reply.find('"function_call"')].strip() if isinstance(action, ToolCall) else \
            reply[: reply.find("Final_Answer:")].strip()

        if isinstance(action, FinalAnswer):
            steps.append(AgentStep(index=index, analysis_text=analysis, action=action))
            transcript_parts.append(serialize_action(action))
            final_answer = action.answer
            terminated_by = "final_answer"
            break

        topk = min(action.topk, topk_ceiling)
        action = ToolCall(query=action.query, topk=topk)
        try:
            ranked = tool.search(action.query, action.topk)
            docs = [tool.fetch(doc_id) for doc_id in ranked.doc_ids()]
            returned = ranked.doc_ids()
            block = _results_block(action.query, action.topk, docs)
        except Exception as exc:  # tool failure is an observation, not an abort
            returned = []
            block = f"[RAGTool Error]\nQuery: \"{action.query}\"\nError: {exc}"
        steps.append(AgentStep(index=index, analysis_text=analysis,
                               action=action, returned_doc_ids=returned))
        transcript_parts.append(serialize_action(action))
        transcript_parts.append(block)

    return AgentTrace(
        item_id=item_id,
        model_name=gateway.model_name,
        plan_text=plan,
        steps=steps,
        final_answer=final_answer,
        terminated_by=terminated_by,
        tool_call_count=sum(1 for s in steps if isinstance(s.action, ToolCall)),
        transcript="\n\n".join(transcript_parts),
    )


def run_episode(item, gateway: LLMGateway, tool, step_cap: int = DEFAULT_STEP_CAP,
                topk_ceiling: int = DEFAULT_TOPK_CEILING) -> AgentTrace:
    """Episode on a benchmark item's final question."""
    return run_question_episode(
        item.final_question, gateway, tool, item_id=item.item_id,
        step_cap=step_cap, topk_ceiling=topk_ceiling,
    )
