"""Agent evaluation: scripted tool-calling episodes over the generated
benchmark, hop-aware scoring, and the metrics/diagnostics report.

Run:  python demos/demo_evaluation.py
"""

import json
import tempfile
from pathlib import Path

from hopforge.fixtures import write_demo_workspace
from hopforge.pipeline import run_stage, validate_config

root = Path(tempfile.mkdtemp(prefix="hopforge-demo-"))
paths = write_demo_workspace(root)
config = validate_config(paths["config"])

for stage in ("ingest", "index", "synthesize", "verify", "evaluate", "report"):
    run_stage(config, stage)

run = config.run_dir

print("one full episode, as recorded in the trace file:")
trace = json.loads((run / "traces-demo-agent.jsonl").read_text().splitlines()[0])
print(f"  item: {trace['item_id']}")
print(f"  plan: {trace['plan_text']}")
for step in trace["steps"]:
    action = step["action"]
    if action["type"] == "tool_call":
        print(f"  step {step['index']}: RAG_search(query={action['query']!r}, topk={action['topk']})"
              f" -> {step['returned_doc_ids']}")
    else:
        print(f"  step {step['index']}: Final_Answer: {action['answer']}")
print(f"  terminated_by={trace['terminated_by']}, tool calls={trace['tool_call_count']}")

print("\nper-item results (hop-aware):")
for line in (run / "results-demo-agent.jsonl").read_text().splitlines():
    r = json.loads(line)
    print(f"  {r['topology']:<11} {r['hops']}-hop  EM={r['final_correct_em']}  "
          f"F1={r['f1']:.2f}  judge={r['judge_correct']}  steps={r['steps']}  "
          f"per-hop={r['per_hop_correct']}")

print("\n" + (run / "report.txt").read_text())
