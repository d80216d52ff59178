"""Self-contained demo workspace: tiny corpus + scripted stub + config.

The corpus carries two four-deep fact chains (a church-history inference
chain and a star-comparison chain) plus a handful of unrelated passages.
The generated stub script drives every pipeline role offline: atomic
generation, the filter gates, merging, auditing, the all-docs-required
reasoning oracle, judging, and a scripted subject agent that solves
everything except the deepest comparison question.

Used by the demo scripts, the test suite, and anyone who wants a working
end-to-end run without a model endpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import yaml


@dataclass(frozen=True)
class FixtureDoc:
    id: str
    title: str
    text: str
    marker: str  # substring unique to this passage, used by oracle rules

    def __post_init__(self):
        assert self.marker in self.text


CHAIN_DOCS = [
    FixtureDoc(
        id="d-amherst",
        title="Amherst, Victoria",
        text=(
            "Amherst is a town in the Central Highlands of Victoria, Australia. "
            "By 1857, there was also a Wesleyan (Methodist) church, a school and "
            "a hospital serving the gold rush settlement."
        ),
        marker="By 1857, there was also",
    ),
    FixtureDoc(
        id="d-wesleyanism",
        title="Wesleyanism",
        text=(
            "Wesleyanism is the Protestant movement inspired by John Wesley. Since "
            "its founding, the Wesleyan tradition has been associated with "
            "Arminianism, shaping Methodist church teaching on grace."
        ),
        marker="tradition has been associated with",
    ),
    FixtureDoc(
        id="d-arminianism",
        title="Arminianism",
        text=(
            "Arminianism is a branch of Protestant theology. It is based on "
            "theological ideas of the Dutch Reformed theologian Jacobus Arminius "
            "and his historic supporters known as Remonstrants."
        ),
        marker="is based on theological ideas",
    ),
    FixtureDoc(
        id="d-arminius",
        title="Jacobus Arminius",
        text=(
            "Jacobus Arminius served as a minister in the Dutch Reformed Church. "
            "At Amsterdam, Arminius taught through a number of sermons on the "
            "Epistle of the Romans between 1588 and 1603."
        ),
        marker="Arminius taught through",
    ),
    FixtureDoc(
        id="d-omega-persei",
        title="Omega Persei",
        text=(
            "Omega Persei is a star in the constellation Perseus. The outer "
            "envelope radiates energy at an effective temperature of 4,586 K, "
            "giving it the orange hue of a cool giant."
        ),
        marker="orange hue of a cool giant",
    ),
    FixtureDoc(
        id="d-hd195564-temp",
        title="HD 195564",
        text=(
            "HD 195564 is a yellow hued star in the constellation Delphinus. The "
            "effective temperature of the stellar atmosphere is 5,421 K."
        ),
        marker="stellar atmosphere is 5,421 K",
    ),
    FixtureDoc(
        id="d-hd195564-parallax",
        title="HD 195564",
        text=(
            "Parallax measurements from the Hipparcos spacecraft give us an "
            "estimate of the distance to HD 195564 of about eighty light years."
        ),
        marker="give us an estimate of the distance",
    ),
    FixtureDoc(
        id="d-hipparcos",
        title="Hipparcos",
        text=(
            "Hipparcos was a scientific satellite of the European Space Agency "
            "devoted to astrometry. The resulting Hipparcos Catalogue contains "
            "118,218 entries covering single and multiple star systems."
        ),
        marker="contains 118,218 entries",
    ),
]

EXTRA_DOCS = [
    FixtureDoc(
        id="d-duke",
        title="Elaine Duke",
        text=(
            "Elaine Costanzo Duke is an American civil servant and former United "
            "States Deputy Secretary of Homeland Security. She became acting "
            "Secretary of Homeland Security on July 31, 2017, when John F. Kelly "
            "assumed the office of White House Chief of Staff."
        ),
        marker="assumed the office of White House",
    ),
    FixtureDoc(
        id="d-ucla",
        title="2009 UCLA Bruins football team",
        text=(
            "The 2009 UCLA Bruins football team represented the University of "
            "California, Los Angeles. Kai Forbath kicked a 27-yard field goal "
            "early in the final period of the bowl game."
        ),
        marker="kicked a 27-yard field goal",
    ),
    FixtureDoc(
        id="d-forbath",
        title="Kai Forbath",
        text=(
            "Kai Forbath is an American football placekicker. He won the season "
            "finale in Week 17 against the Atlanta Falcons as time expired, his "
            "sixth career game-winner."
        ),
        marker="sixth career game-winner",
    ),
    FixtureDoc(
        id="d-excluded",
        title="Some Excluded Article",
        text="This passage exists only to be dropped by the exclusion list.",
        marker="dropped by the exclusion list",
    ),
]

ALL_DOCS = CHAIN_DOCS + EXTRA_DOCS

_D = {d.id: d for d in ALL_DOCS}

# Atomic QA pairs the generation stub emits, one per chain document.
ATOMICS = {
    "d-amherst": (
        "What type of church was established in Amherst, Victoria by the year 1857?",
        "Wesleyan (Methodist) church",
    ),
    "d-wesleyanism": (
        "With which theological perspective is the Wesleyan (Methodist) church closely associated?",
        "Arminianism",
    ),
    "d-arminianism": (
        "Who is the Dutch Reformed theologian associated with the concept of Arminianism?",
        "Jacobus Arminius",
    ),
    "d-arminius": (
        "Where did Jacobus Arminius teach his sermons on the Epistle of the Romans?",
        "Amsterdam",
    ),
    "d-omega-persei": (
        "What is the effective temperature of Omega Persei?",
        "4,586 K",
    ),
    "d-hd195564-temp": (
        "What is the effective temperature of the stellar atmosphere of HD 195564?",
        "5,421 K",
    ),
    "d-hd195564-parallax": (
        "What spacecraft provided parallax measurements for HD 195564?",
        "Hipparcos",
    ),
    "d-hipparcos": (
        "How many entries does the Hipparcos Catalogue contain?",
        "118,218 entries",
    ),
}

# Composed questions per topology and depth (answers follow the chains).
INFERENCE_LADDER = {
    2: (
        "With which theological perspective is the type of church established in "
        "Amherst, Victoria by the year 1857 associated?",
        "Arminianism",
    ),
    3: (
        "Who is the Dutch Reformed theologian associated with the theological "
        "perspective of the church established in Amherst, Victoria by the year 1857?",
        "Jacobus Arminius",
    ),
    4: (
        "Where did the Dutch Reformed theologian associated with the theological "
        "perspective of the church established in Amherst, Victoria by the year "
        "1857 teach his sermons on the Epistle of the Romans?",
        "Amsterdam",
    ),
}

COMPARISON_LADDER = {
    2: (
        "Which star has a higher effective temperature, Omega Persei or HD 195564?",
        "HD 195564",
    ),
    3: (
        "What spacecraft provided parallax measurements for the star that has a "
        "higher effective temperature, Omega Persei or HD 195564?",
        "Hipparcos",
    ),
    4: (
        "How many entries does the catalogue produced by the spacecraft that "
        "provided parallax measurements for the star with a higher effective "
        "temperature between Omega Persei and HD 195564 contain?",
        "118,218 entries",
    ),
}

INFERENCE_DOC_IDS = ["d-amherst", "d-wesleyanism", "d-arminianism", "d-arminius"]
COMPARISON_DOC_IDS = ["d-omega-persei", "d-hd195564-temp", "d-hd195564-parallax", "d-hipparcos"]

# Distinctive prefixes used to key stub rules per question. cmp-1b covers the
# alternate hop-1 of the comparison ladder (either star's atomic can lead).
_Q_KEYS = {
    "inf-1": "What type of church was established",
    "inf-2": "With which theological perspective is the type",
    "inf-3": "Who is the Dutch Reformed theologian associated with the theological",
    "inf-4": "Where did the Dutch Reformed theologian",
    "cmp-1": "What is the effective temperature of Omega Persei",
    "cmp-1b": "What is the effective temperature of the stellar atmosphere",
    "cmp-2": "Which star has a higher effective temperature",
    "cmp-3": "What spacecraft provided parallax measurements for the star",
    "cmp-4": "How many entries does the catalogue produced",
}

JUDGE_ANSWERS = [
    "Wesleyan (Methodist) church",
    "Arminianism",
    "Jacobus Arminius",
    "Amsterdam",
    "4,586 K",
    "5,421 K",
    "Hipparcos",
    "118,218 entries",
    "HD 195564",
]


def _rule(respond: str, template_id: str | None = None, substrings: list[str] | None = None) -> dict:
    match: dict = {}
    if template_id:
        match["template_id"] = template_id
    if substrings:
        match["var_substrings"] = substrings
    return {"match": match, "respond": respond}


def _tool_call(analysis: str, query: str, topk: int) -> str:
    return (
        f"{analysis}\n"
        f'"function_call": {{"name": "RAG_search", "arguments": "{{query: {query}, topk: {topk}}}"}}'
    )


def build_stub_rules() -> list[dict]:
    rules: list[dict] = []

    # domain annotation: one label for everything
    rules.append(_rule("Science", "domain_annotation"))

    # atomic generation, keyed by title (plus a text marker for the HD twins)
    for doc_id, (question, answer) in ATOMICS.items():
        doc = _D[doc_id]
        subs = [f"Title: {doc.title}"]
        if doc.title == "HD 195564":
            subs.append(doc.marker)
        rules.append(_rule(f"Q: {question}\nA: {answer}", "atomic_generation", subs))
    rules.append(_rule("no usable question found in this passage", "atomic_generation"))

    # closed-book answers never succeed: retrieval stays necessary
    rules.append(_rule("I don't know.", "closed_book"))

    # grounded answers reproduce the gold atomic answer
    for doc_id, (question, answer) in ATOMICS.items():
        rules.append(_rule(answer, "grounded_answer", [question[:60]]))
    rules.append(_rule("unknown", "grounded_answer"))

    # comparison attribute extraction
    rules.append(_rule("effective temperature", "attribute_phrase",
                       ["What is the effective temperature"]))
    rules.append(_rule("NONE", "attribute_phrase"))

    # 2-hop merges
    q2i, a2i = INFERENCE_LADDER[2]
    rules.append(_rule(
        f"Question: {q2i}\nAnswer: {a2i}",
        "merge_inference",
        ["What type of church was established", "With which theological perspective"],
    ))
    rules.append(_rule("cannot merge these pairs", "merge_inference"))
    q2c, a2c = COMPARISON_LADDER[2]
    rules.append(_rule(
        f"Question: {q2c}\nAnswer: {a2c}",
        "merge_comparison",
        ["Omega Persei", "HD 195564"],
    ))
    rules.append(_rule("cannot merge these pairs", "merge_comparison"))

    # hop extensions
    q3i, a3i = INFERENCE_LADDER[3]
    q4i, a4i = INFERENCE_LADDER[4]
    q3c, a3c = COMPARISON_LADDER[3]
    q4c, a4c = COMPARISON_LADDER[4]
    rules.append(_rule(
        f"Question: {q3i}\nAnswer: {a3i}", "extend_inference",
        ["With which theological perspective is the type", "Who is the Dutch Reformed theologian"],
    ))
    rules.append(_rule(
        f"Question: {q4i}\nAnswer: {a4i}", "extend_inference",
        ["Who is the Dutch Reformed theologian associated with the theological",
         "Where did Jacobus Arminius"],
    ))
    rules.append(_rule(
        f"Question: {q4c}\nAnswer: {a4c}", "extend_inference",
        ["What spacecraft provided parallax measurements for the star",
         "How many entries does the Hipparcos Catalogue"],
    ))
    rules.append(_rule(
        f"Question: {q3c}\nAnswer: {a3c}", "extend_inference",
        ["Which star has a higher effective temperature", "What spacecraft provided"],
    ))
    rules.append(_rule("cannot extend this question", "extend_inference"))

    # audits pass everything the pipeline composes here
    rules.append(_rule("PASS", "structural_audit"))
    rules.append(_rule("PASS", "semantic_audit_inference"))
    rules.append(_rule("PASS", "semantic_audit_comparison"))

    # one alias, to exercise the alias path
    rules.append(_rule("Arminian theology", "aliases", ["Answer: Arminianism"]))
    rules.append(_rule("NONE", "aliases"))

    # all-docs-required reasoning oracle, deepest questions first
    def oracle(kind: str, level: int, ladder: dict, doc_ids: list[str]):
        question, answer = ladder[level]
        markers = [_D[d].marker for d in doc_ids[:level]]
        rules.append(_rule(answer, "multihop_answer", [_Q_KEYS[f"{kind}-{level}"], *markers]))

    for level in (4, 3, 2):
        oracle("inf", level, INFERENCE_LADDER, INFERENCE_DOC_IDS)
        oracle("cmp", level, COMPARISON_LADDER, COMPARISON_DOC_IDS)
    rules.append(_rule("insufficient evidence", "multihop_answer"))

    # deterministic judge: exact gold/predicted pair => Correct
    for answer in JUDGE_ANSWERS:
        rules.append(_rule(
            "Correct", "judge",
            [f"Gold answer: {answer}\nPredicted answer: {answer}\nReply"],
        ))
    rules.append(_rule("Incorrect", "judge"))

    # scripted subject agent
    rules.append(_rule("1. Search the corpus for each missing fact in order.", "agent_plan"))

    def agent(key: str, query: str, topk: int, result_marker: str, answer: str):
        rules.append(_rule(f"Found it.\nFinal_Answer: {answer}", "agent_action",
                           [_Q_KEYS[key], result_marker]))
        rules.append(_rule(_tool_call("I need a supporting passage.", query, topk),
                           "agent_action", [_Q_KEYS[key]]))

    agent("inf-1", "Amherst Victoria church 1857", 3,
          _D["d-amherst"].marker, ATOMICS["d-amherst"][1])
    agent("inf-2", "Wesleyan Methodist church theological perspective", 3,
          _D["d-wesleyanism"].marker, INFERENCE_LADDER[2][1])
    agent("inf-3", "Arminianism Dutch Reformed theologian", 3,
          _D["d-arminianism"].marker, INFERENCE_LADDER[3][1])
    agent("inf-4", "Jacobus Arminius sermons Epistle Romans", 3,
          _D["d-arminius"].marker, INFERENCE_LADDER[4][1])
    agent("cmp-1", "Omega Persei effective temperature", 3,
          _D["d-omega-persei"].marker, ATOMICS["d-omega-persei"][1])
    agent("cmp-1b", "HD 195564 effective temperature stellar atmosphere", 3,
          _D["d-hd195564-temp"].marker, ATOMICS["d-hd195564-temp"][1])
    agent("cmp-2", "Omega Persei HD 195564 effective temperature", 3,
          _D["d-hd195564-temp"].marker, COMPARISON_LADDER[2][1])
    agent("cmp-3", "HD 195564 parallax spacecraft", 3,
          _D["d-hd195564-parallax"].marker, COMPARISON_LADDER[3][1])
    # the deepest comparison question: the agent wanders and answers wrong
    rules.append(_rule("Found a number.\nFinal_Answer: about 120,000 entries",
                       "agent_action", [_Q_KEYS["cmp-4"], _D["d-hipparcos"].marker]))
    rules.append(_rule(_tool_call("The spacecraft is named; now find its catalogue.",
                                  "Hipparcos Catalogue entries", 5),
                       "agent_action", [_Q_KEYS["cmp-4"], _D["d-hd195564-parallax"].marker]))
    rules.append(_rule(_tool_call("First identify the hotter star's spacecraft.",
                                  "spacecraft parallax star higher effective temperature", 2),
                       "agent_action", [_Q_KEYS["cmp-4"]]))

    return rules


def check_marker_disjointness() -> None:
    """Markers must identify exactly one passage and never appear in questions;
    question keys must never appear in passages."""
    questions = [q for q, _ in ATOMICS.values()]
    questions += [q for q, _ in INFERENCE_LADDER.values()]
    questions += [q for q, _ in COMPARISON_LADDER.values()]
    for doc in ALL_DOCS:
        others = [d for d in ALL_DOCS if d.id != doc.id]
        assert all(doc.marker not in o.text for o in others), doc.id
        assert all(doc.marker not in q for q in questions), doc.id
        assert all(key not in doc.text for key in _Q_KEYS.values()), doc.id


def write_demo_workspace(root: str | Path) -> dict[str, Path]:
    """Write corpus, exclusion list, stub script and config under ``root``."""
    check_marker_disjointness()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    corpus_path = root / "corpus.jsonl"
    with corpus_path.open("w", encoding="utf-8") as fh:
        for doc in ALL_DOCS:
            fh.write(json.dumps({"id": doc.id, "title": doc.title, "text": doc.text},
                                ensure_ascii=False) + "\n")

    exclusions_path = root / "exclusions.txt"
    exclusions_path.write_text("Some Excluded Article\n", encoding="utf-8")

    stub_path = root / "stub.jsonl"
    with stub_path.open("w", encoding="utf-8") as fh:
        for rule in build_stub_rules():
            fh.write(json.dumps(rule, ensure_ascii=False) + "\n")

    config = {
        "corpus_path": str(corpus_path),
        "run_directory": str(root / "run"),
        "seed": 17,
        "exclusion_lists": [str(exclusions_path)],
        "models": {
            "construction": {"provider": "stub", "script": str(stub_path),
                             "model_name": "stub-construction"},
            "judge": {"provider": "stub", "script": str(stub_path),
                      "model_name": "stub-judge"},
            "subjects": [
                {"name": "demo-agent", "provider": "stub", "script": str(stub_path),
                 "model_name": "demo-agent"},
            ],
        },
        "synthesis": {"hops": 4, "topology": "both", "link_attempts": 4},
        "evaluation": {"step_cap": 10, "topk_ceiling": 10, "hop_aware": True},
        "review": {
            "annotators": ["ann-a", "ann-b", "ann-c"],
            "tokens": {"ann-a": "token-a", "ann-b": "token-b", "ann-c": "token-c"},
        },
    }
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")

    return {
        "corpus": corpus_path,
        "exclusions": exclusions_path,
        "stub": stub_path,
        "config": config_path,
        "run_dir": root / "run",
    }


def main(argv: list[str] | None = None) -> int:
    """Build the demo workspace; with --through-verify, also run the pipeline
    far enough that review-serve and evaluate have inputs."""
    import argparse

    parser = argparse.ArgumentParser(prog="hopforge.fixtures")
    parser.add_argument("root", help="directory to create the demo workspace in")
    parser.add_argument("--through-verify", action="store_true",
                        help="run ingest..verify so benchmark.jsonl exists")
    args = parser.parse_args(argv)
    paths = write_demo_workspace(args.root)
    if args.through_verify:
        from .pipeline import run_stage, validate_config

        config = validate_config(paths["config"])
        for stage in ("ingest", "index", "synthesize", "verify"):
            run_stage(config, stage)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

