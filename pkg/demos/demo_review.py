"""Human review flow against the in-process HTTP service: assignment,
Retain/Discard verdicts, Fleiss' kappa, and consensus adjudication.

Run:  python demos/demo_review.py
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from hopforge.fixtures import write_demo_workspace
from hopforge.pipeline import run_stage, validate_config
from hopforge.review import ReviewStore
from hopforge.review_api import create_review_app

root = Path(tempfile.mkdtemp(prefix="hopforge-demo-"))
paths = write_demo_workspace(root)
config = validate_config(paths["config"])
for stage in ("ingest", "index", "synthesize", "verify"):
    run_stage(config, stage)

items = {}
for line in (config.run_dir / "benchmark.jsonl").read_text().splitlines():
    rec = json.loads(line)
    items[rec["item_id"]] = rec

store = ReviewStore(event_log=config.run_dir / "review.events.jsonl")
store.assign_items(sorted(items), config.annotators)
client = TestClient(create_review_app(store, items, tokens=config.annotator_tokens))


def auth(annotator):
    return {"Authorization": f"Bearer {config.annotator_tokens[annotator]}"}


queue = client.get("/queue", params={"annotator": "ann-a"}, headers=auth("ann-a")).json()
print(f"ann-a has {len(queue['cards'])} items pending review")

item_ids = sorted(items)
# unanimity on the first item, a 2-1 split on the second
for ann in ("ann-a", "ann-b", "ann-c"):
    client.post("/verdict", headers=auth(ann), json={
        "item_id": item_ids[0], "annotator_id": ann, "decision": "retain"})
client.post("/verdict", headers=auth("ann-a"), json={
    "item_id": item_ids[1], "annotator_id": "ann-a", "decision": "retain"})
client.post("/verdict", headers=auth("ann-b"), json={
    "item_id": item_ids[1], "annotator_id": "ann-b", "decision": "retain"})
client.post("/verdict", headers=auth("ann-c"), json={
    "item_id": item_ids[1], "annotator_id": "ann-c", "decision": "discard",
    "dimension_flags": ["reasoning_validity"]})

for item_id in item_ids[:2]:
    detail = client.get(f"/item/{item_id}", headers=auth("ann-a")).json()
    print(f"{item_id}: status={detail['status']}")

print("\nagreement:", client.get("/agreement", headers=auth("ann-a")).json())

client.post("/adjudicate", headers=auth("ann-a"), json={
    "item_id": item_ids[1], "final_decision": "retain",
    "rationale": "reasoning chain verified against both passages"})
detail = client.get(f"/item/{item_ids[1]}", headers=auth("ann-a")).json()
print(f"\nafter adjudication: status={detail['status']}, "
      f"consensus={detail['consensus']}, verdicts kept={len(detail['verdicts'])}")
