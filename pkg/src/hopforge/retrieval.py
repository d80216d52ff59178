"""Lexical retrieval over the passage corpus.

A small Okapi BM25 inverted index (k1=1.2, b=0.75, Lucene-style
``ln(1 + (N - df + 0.5) / (df + 0.5))`` idf) over ``title + text``.
Tokenization is lowercase split on non-alphanumerics, no stemming, no
stopwords. Every document is ranked for every query (non-matching documents
score 0.0) and ties break by ascending doc id, so results are total and
deterministic.

The same ranking is reachable over HTTP: ``create_search_app`` serves
``POST /search`` and ``RemoteSearchBackend`` is the matching client, so the
backend behind the agent's search tool is pluggable.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from pydantic import BaseModel

from .corpus import Document, DocumentStore
from .errors import CorpusError, HopforgeError

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class RankedDocs:
    query: str
    entries: list[tuple[str, float]]  # (doc_id, score), non-increasing score
    k_requested: int

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


class SearchIndex:
    """Immutable BM25 index over a document store."""

    def __init__(self, doc_ids: list[str], postings: dict[str, dict[str, int]],
                 doc_lengths: dict[str, int], k1: float = BM25_K1, b: float = BM25_B):
        self._doc_ids = sorted(doc_ids)
        self._postings = postings
        self._doc_lengths = doc_lengths
        self._avgdl = sum(doc_lengths.values()) / len(doc_lengths)
        self._k1 = k1
        self._b = b

    @classmethod
    def build(cls, corpus: DocumentStore | list[Document], k1: float = BM25_K1, b: float = BM25_B) -> "SearchIndex":
        docs = corpus.all() if isinstance(corpus, DocumentStore) else sorted(corpus, key=lambda d: d.id)
        if not docs:
            raise CorpusError("cannot build an index over an empty corpus")
        postings: dict[str, dict[str, int]] = {}
        doc_lengths: dict[str, int] = {}
        for doc in docs:
            tokens = tokenize(doc.title + " " + doc.text)
            doc_lengths[doc.id] = len(tokens)
            for tok in tokens:
                postings.setdefault(tok, {})
                postings[tok][doc.id] = postings[tok].get(doc.id, 0) + 1
        return cls([d.id for d in docs], postings, doc_lengths, k1=k1, b=b)

    def __len__(self) -> int:
        return len(self._doc_ids)

    def _idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        n = len(self._doc_ids)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def score(self, query: str, doc_id: str) -> float:
        """BM25 score of one document for one query (used by search and tests)."""
        dl = self._doc_lengths[doc_id]
        norm = self._k1 * (1.0 - self._b + self._b * dl / self._avgdl)
        total = 0.0
        for term in tokenize(query):
            tf = self._postings.get(term, {}).get(doc_id, 0)
            if tf == 0:
                continue
            total += self._idf(term) * tf * (self._k1 + 1.0) / (tf + norm)
        return total

    def search(self, query: str, topk: int) -> RankedDocs:
        if not query.strip():
            raise HopforgeError("search query must be non-blank")
        if topk < 1:
            raise HopforgeError("topk must be >= 1")
        scored = [(doc_id, self.score(query, doc_id)) for doc_id in self._doc_ids]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return RankedDocs(query=query, entries=scored[:topk], k_requested=topk)

    def to_dict(self) -> dict:
        return {
            "doc_ids": self._doc_ids,
            "postings": self._postings,
            "doc_lengths": self._doc_lengths,
            "k1": self._k1,
            "b": self._b,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchIndex":
        return cls(data["doc_ids"], data["postings"], data["doc_lengths"],
                   k1=data["k1"], b=data["b"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SearchIndex":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class LocalSearchBackend:
    """Search backend facade over an in-process index + store."""

    def __init__(self, index: SearchIndex, store: DocumentStore):
        self.index = index
        self.store = store

    def search(self, query: str, topk: int) -> RankedDocs:
        return self.index.search(query, topk)

    def fetch(self, doc_id: str) -> Document:
        return self.store.get(doc_id)


class RemoteSearchBackend:
    """Client for a retrieval service speaking the POST /search protocol."""

    def __init__(self, base_url: str, client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client()
        self._doc_cache: dict[str, Document] = {}

    def search(self, query: str, topk: int) -> RankedDocs:
        if not query.strip():
            raise HopforgeError("search query must be non-blank")
        if topk < 1:
            raise HopforgeError("topk must be >= 1")
        resp = self._client.post(f"{self.base_url}/search", json={"query": query, "topk": topk})
        resp.raise_for_status()
        payload = resp.json()
        entries = []
        for e in payload["entries"]:
            entries.append((e["doc_id"], float(e["score"])))
            self._doc_cache[e["doc_id"]] = Document(id=e["doc_id"], title=e["title"], text=e["text"])
        return RankedDocs(query=query, entries=entries, k_requested=topk)

    def fetch(self, doc_id: str) -> Document:
        try:
            return self._doc_cache[doc_id]
        except KeyError:
            raise CorpusError(f"document {doc_id!r} not seen in any search response") from None


class SearchRequest(BaseModel):
    query: str
    topk: int


def create_search_app(index: SearchIndex, store: DocumentStore):
    """FastAPI app exposing the retrieval wire protocol."""
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="hopforge retrieval service")

    @app.post("/search")
    def search(req: SearchRequest):
        try:
            ranked = index.search(req.query, req.topk)
        except HopforgeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        entries = []
        for doc_id, score in ranked.entries:
            doc = store.get(doc_id)
            entries.append({"doc_id": doc_id, "title": doc.title, "text": doc.text, "score": score})
        return {"entries": entries}

    return app
