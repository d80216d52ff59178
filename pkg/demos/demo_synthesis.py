"""The full benchmark factory on the demo corpus with scripted stub models:
atomic generation, filtering, 2-hop composition, verification, and extension
to 3 and 4 hops under both topologies.

Run:  python demos/demo_synthesis.py
"""

import json
import tempfile
from pathlib import Path

from hopforge.fixtures import write_demo_workspace
from hopforge.pipeline import run_stage, validate_config

root = Path(tempfile.mkdtemp(prefix="hopforge-demo-"))
paths = write_demo_workspace(root)
config = validate_config(paths["config"])

for stage in ("ingest", "index", "synthesize", "verify"):
    manifest = run_stage(config, stage)
    print(f"{stage:12s} {manifest.stages[stage]['counts']}")

print("\nbenchmark items:")
for line in (config.run_dir / "benchmark.jsonl").read_text().splitlines():
    rec = json.loads(line)
    print(f"\n[{rec['topology']} / {rec['hops']}-hop]  {rec['question']}")
    print(f"  answer: {rec['answer']}")
    for row in rec["ladder"]:
        print(f"  hop {row['hop']}: {row['sub_question']}  ->  {row['sub_answer']}")

print("\nverification ledger (first item):")
first = json.loads((config.run_dir / "verification.ledger.jsonl").read_text().splitlines()[0])
for stage_name, result in first["stage_results"].items():
    print(f"  {stage_name:15s} passed={result['passed']}  {result['reason']}")
