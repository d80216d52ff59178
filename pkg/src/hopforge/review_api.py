"""HTTP surface of the review service, consumed by the annotation UI.

Auth is a static bearer token per annotator: `/queue` and `/verdict` require
the token belonging to the acting annotator; `/adjudicate` accepts any known
token. When the service is built without tokens, auth is disabled (local
single-user runs).
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel

from .errors import ReviewError
from .review import ReviewStore, Verdict


class VerdictBody(BaseModel):
    item_id: str
    annotator_id: str
    decision: str
    dimension_flags: list[str] = []


class AdjudicateBody(BaseModel):
    item_id: str
    final_decision: str
    rationale: str


def create_review_app(
    store: ReviewStore,
    items: dict[str, dict],
    tokens: dict[str, str] | None = None,
    documents=None,
) -> FastAPI:
    """items: benchmark export records keyed by item_id; ``documents`` (a
    DocumentStore) supplies the evidence passages embedded in queue/item
    responses."""
    app = FastAPI(title="hopforge review service")
    token_owner = {v: k for k, v in (tokens or {}).items()}

    def enriched(record: dict) -> dict:
        if documents is None:
            return record
        out = dict(record)
        rows = []
        for row in record["ladder"]:
            row = dict(row)
            try:
                row["evidence_text"] = documents.get(row["doc_id"]).text
            except Exception:
                row["evidence_text"] = ""
            rows.append(row)
        out["ladder"] = rows
        return out

    def caller(request: Request) -> str | None:
        if tokens is None:
            return None
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        owner = token_owner.get(header.split(" ", 1)[1].strip())
        if owner is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return owner

    def require_actor(annotator_id: str, owner: str | None):
        if tokens is not None and owner != annotator_id:
            raise HTTPException(status_code=403, detail="token does not match annotator")

    @app.get("/queue")
    def queue(annotator: str, owner: str | None = Depends(caller)):
        require_actor(annotator, owner)
        cards = []
        for item_id in store.queue_for(annotator):
            record = items.get(item_id)
            if record is None:
                continue
            cards.append({"item": enriched(record), "status": store.assignments[item_id].status})
        return {"annotator": annotator, "cards": cards}

    @app.post("/verdict")
    def submit_verdict(body: VerdictBody, owner: str | None = Depends(caller)):
        require_actor(body.annotator_id, owner)
        try:
            verdict = Verdict(
                item_id=body.item_id,
                annotator_id=body.annotator_id,
                decision=body.decision,
                dimension_flags=body.dimension_flags,
            )
            status = store.submit_verdict(verdict)
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"item_id": body.item_id, "status": status}

    @app.get("/agreement")
    def agreement(owner: str | None = Depends(caller)):
        report = store.agreement().to_dict()
        report["adjudication_pending"] = len(store.adjudication_pending())
        return report

    @app.post("/adjudicate")
    def adjudicate(body: AdjudicateBody, owner: str | None = Depends(caller)):
        try:
            assignment = store.adjudicate(body.item_id, body.final_decision, body.rationale)
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"item_id": body.item_id, "status": assignment.status}

    @app.get("/item/{item_id}")
    def item_detail(item_id: str, owner: str | None = Depends(caller)):
        record = items.get(item_id)
        assignment = store.assignments.get(item_id)
        if record is None or assignment is None:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id!r}")
        return {
            "item": enriched(record),
            "status": assignment.status,
            "verdicts": [
                {
                    "annotator_id": v.annotator_id,
                    "decision": v.decision,
                    "dimension_flags": v.dimension_flags,
                    "submitted_at": v.submitted_at,
                }
                for v in store.verdict_history(item_id)
            ],
            "adjudication": store.adjudications.get(item_id),
            "consensus": store.consensus.get(item_id),
        }

    return app
