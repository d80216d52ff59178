"""Entity-label ambiguity screen backed by a SPARQL endpoint.

Items whose final answer labels more than one knowledge-base entity are
ambiguous and get dropped before human review. The transport is injectable
so offline runs and tests never touch the network.
"""

from __future__ import annotations

import json

from .errors import HopforgeError

WIKIDATA_SPARQL = "https://query.wikidata.org/sparql"

_COUNT_QUERY = """
SELECT (COUNT(DISTINCT ?entity) AS ?n) WHERE {
  ?entity rdfs:label %s@en .
}
"""


def _default_transport(endpoint: str, query: str) -> dict:
    import httpx

    resp = httpx.get(
        endpoint,
        params={"query": query, "format": "json"},
        headers={"Accept": "application/sparql-results+json"},
        timeout=30.0,
    )
    resp.raise_for_status()
    return resp.json()


def entity_count_for_label(label: str, endpoint: str = WIKIDATA_SPARQL, transport=None) -> int:
    """Number of entities carrying ``label`` as their English label."""
    transport = transport or _default_transport
    query = _COUNT_QUERY % json.dumps(label)
    data = transport(endpoint, query)
    try:
        bindings = data["results"]["bindings"]
        return int(bindings[0]["n"]["value"]) if bindings else 0
    except (KeyError, IndexError, ValueError) as exc:
        raise HopforgeError(f"unexpected SPARQL response shape: {exc}") from exc


def screen_ambiguous(records: list[dict], endpoint: str = WIKIDATA_SPARQL,
                     transport=None) -> tuple[list[dict], list[dict]]:
    """Split benchmark export records into (kept, dropped-as-ambiguous)."""
    kept, dropped = [], []
    for rec in records:
        if entity_count_for_label(rec["answer"], endpoint=endpoint, transport=transport) > 1:
            dropped.append(rec)
        else:
            kept.append(rec)
    return kept, dropped
