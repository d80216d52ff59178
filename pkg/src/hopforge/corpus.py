"""Corpus ingestion: parsing, title-based exclusion, and coarse domain labels.

Records arrive as line-delimited JSON. The native schema is
``{"id": ..., "title": ..., "text": ...}``; a compatibility reader also
accepts ``{"id": ..., "contents": ...}`` where the first line of ``contents``
is the quoted title and the remainder is the passage body.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorpusError, GatewayError, MalformedRecordError

DEFAULT_CATEGORIES = [
    "Science",
    "Art",
    "Geography",
    "History",
    "Sports",
    "Politics",
    "Military",
    "Entertainment",
    "Technology",
    "Society",
    "Other",
]


def normalize_title(title: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return " ".join(title.lower().split())


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    domain_label: str | None = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.title.strip():
            raise CorpusError(f"document {self.id!r}: title must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"document {self.id!r}: text must be non-empty")


@dataclass
class CorpusManifest:
    source_path: str
    doc_count: int
    excluded_count: int
    exclusion_list_ids: list[str] = field(default_factory=list)


class DocumentStore:
    """In-memory document collection keyed by id, persisted as JSONL."""

    def __init__(self):
        self._docs: dict[str, Document] = {}

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def add(self, doc: Document) -> None:
        if doc.id in self._docs:
            raise CorpusError(f"duplicate document id {doc.id!r}")
        self._docs[doc.id] = doc

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise CorpusError(f"unknown document id {doc_id!r}") from None

    def replace(self, doc: Document) -> None:
        if doc.id not in self._docs:
            raise CorpusError(f"unknown document id {doc.id!r}")
        self._docs[doc.id] = doc

    def all(self) -> list[Document]:
        """Documents in stable (id-sorted) order."""
        return [self._docs[k] for k in sorted(self._docs)]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for doc in self.all():
                rec = {"id": doc.id, "title": doc.title, "text": doc.text}
                if doc.domain_label is not None:
                    rec["domain_label"] = doc.domain_label
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DocumentStore":
        store = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                store.add(
                    Document(
                        id=rec["id"],
                        title=rec["title"],
                        text=rec["text"],
                        domain_label=rec.get("domain_label"),
                    )
                )
        return store


def _parse_record(rec: dict, line_number: int) -> Document:
    if not isinstance(rec, dict):
        raise MalformedRecordError(line_number, "record is not an object")
    doc_id = rec.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise MalformedRecordError(line_number, "missing or empty 'id' field")
    if "title" in rec or "text" in rec:
        title = rec.get("title")
        text = rec.get("text")
        if not isinstance(title, str) or not title.strip():
            raise MalformedRecordError(line_number, "missing or empty 'title' field")
        if not isinstance(text, str) or not text.strip():
            raise MalformedRecordError(line_number, "missing or empty 'text' field")
        return Document(id=doc_id, title=title, text=text)
    if "contents" in rec:
        # FlashRAG-style: first line is the quoted title, remainder is the body.
        contents = rec["contents"]
        if not isinstance(contents, str) or not contents.strip():
            raise MalformedRecordError(line_number, "empty 'contents' field")
        first, _, rest = contents.partition("\n")
        title = first.strip().strip('"')
        if not title:
            raise MalformedRecordError(line_number, "contents has no title line")
        if not rest.strip():
            raise MalformedRecordError(line_number, "contents has no body text")
        return Document(id=doc_id, title=title, text=rest.strip())
    raise MalformedRecordError(line_number, "record has neither title/text nor contents")


def read_corpus_file(path: str | Path, skip_malformed: bool = False) -> Iterator[Document]:
    """Yield documents from a line-delimited corpus file."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not readable: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                if skip_malformed:
                    continue
                raise MalformedRecordError(line_number, f"invalid JSON: {exc.msg}") from exc
            try:
                yield _parse_record(rec, line_number)
            except MalformedRecordError:
                if skip_malformed:
                    continue
                raise


def load_exclusion_list(path: str | Path) -> set[str]:
    """Read one title per line; returns the normalized-title set."""
    titles = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                titles.add(normalize_title(line))
    return titles


def ingest_corpus(
    path: str | Path,
    exclusion_titles: set[str],
    store: DocumentStore,
    exclusion_list_ids: Iterable[str] = (),
    skip_malformed: bool = False,
) -> CorpusManifest:
    """Parse the corpus file, drop records whose normalized title is excluded.

    Retained documents are added to ``store``; the manifest reports retained
    and excluded counts.
    """
    kept = 0
    excluded = 0
    for doc in read_corpus_file(path, skip_malformed=skip_malformed):
        if normalize_title(doc.title) in exclusion_titles:
            excluded += 1
            continue
        store.add(doc)
        kept += 1
    return CorpusManifest(
        source_path=str(path),
        doc_count=kept,
        excluded_count=excluded,
        exclusion_list_ids=list(exclusion_list_ids),
    )


def annotate_domain(doc: Document, category_set: list[str], gateway) -> Document:
    """Assign one label from ``category_set`` via the classification prompt.

    A response outside the category set maps to the reserved "other" label
    (the set's own Other entry when present).
    """
    if not category_set:
        raise CorpusError("category_set must be non-empty")
    completion = gateway.complete(
        "domain_annotation",
        {"title": doc.title, "text": doc.text, "categories": ", ".join(category_set)},
    )
    answer = completion.text.strip().splitlines()[0].strip() if completion.text.strip() else ""
    by_lower = {c.lower(): c for c in category_set}
    label = by_lower.get(answer.lower())
    if label is None:
        label = by_lower.get("other", "other")
    return replace(doc, domain_label=label)


def annotate_store(store: DocumentStore, category_set: list[str], gateway) -> list[str]:
    """Annotate every document in the store; returns ids left unlabeled.

    Gateway failures leave the document unlabeled and flag it rather than
    aborting the run.
    """
    flagged: list[str] = []
    for doc in store.all():
        try:
            store.replace(annotate_domain(doc, category_set, gateway))
        except GatewayError:
            flagged.append(doc.id)
    return flagged
