"""Corpus ingestion and BM25 retrieval, end to end on the bundled demo corpus.

Run:  python demos/demo_retrieval.py
"""

import tempfile
from pathlib import Path

from hopforge.corpus import DocumentStore, ingest_corpus, load_exclusion_list
from hopforge.fixtures import write_demo_workspace
from hopforge.retrieval import SearchIndex

root = Path(tempfile.mkdtemp(prefix="hopforge-demo-"))
paths = write_demo_workspace(root)

# ingest: line-delimited records, with one title dropped by the exclusion list
store = DocumentStore()
manifest = ingest_corpus(paths["corpus"], load_exclusion_list(paths["exclusions"]), store)
print(f"ingested {manifest.doc_count} documents, excluded {manifest.excluded_count}")

# build the BM25 index (k1=1.2, b=0.75) over title + text
index = SearchIndex.build(store)
print(f"index holds {len(index)} documents\n")

for query in (
    "Omega Persei effective temperature",
    "Wesleyan Methodist church",
    "Hipparcos Catalogue entries",
):
    ranked = index.search(query, topk=3)
    print(f"query: {query!r}")
    for doc_id, score in ranked.entries:
        print(f"  {score:6.3f}  {doc_id:22s} {store.get(doc_id).title}")
    print()

# ranked prefixes are stable: asking for more results never reorders the head
head = index.search("effective temperature", 2).entries
full = index.search("effective temperature", 6).entries
assert full[:2] == head
print("prefix stability holds: top-2 unchanged inside top-6")
