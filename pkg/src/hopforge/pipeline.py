"""Run orchestration: config, manifest, and the staged pipeline.

Stages run in a fixed order (ingest, index, synthesize, verify, evaluate,
report) under a per-run-directory lock. Stage outputs land in the run
directory as line-delimited files; the manifest records per-stage status and
counts and is rewritten atomically, so a killed run resumes cleanly.

Synthesis interleaves verification per hop level — extension is defined
only over verified items — and the verify stage consolidates: it verifies
any stragglers, optionally screens ambiguous answers, and writes the
benchmark export.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import (
    DEFAULT_CATEGORIES,
    DocumentStore,
    annotate_store,
    ingest_corpus,
    load_exclusion_list,
)
from .errors import ComposeError, ConfigError, PipelineError, VerificationUndetermined
from .gateway import (
    LLMGateway,
    OpenAIChatProvider,
    ScriptedStubProvider,
    TemplateRegistry,
    default_registry,
)
from .harness import run_question_episode
from .metrics import ItemResult, aggregate_report
from .retrieval import LocalSearchBackend, RemoteSearchBackend, SearchIndex
from .synthesis import AtomicQA, HopItem, SynthesisEngine, Topology
from .verification import VerificationLedger, Verifier

STAGES = ("ingest", "index", "synthesize", "verify", "evaluate", "report")

_REQUIRED = object()


class _FreeForm(dict):
    """Schema leaf that accepts arbitrary keys (e.g. annotator token maps)."""

_SCHEMA = {
    "corpus_path": _REQUIRED,
    "run_directory": _REQUIRED,
    "seed": 0,
    "exclusion_lists": [],
    "skip_malformed": False,
    "cache_dir": None,
    "corpus": {
        "sample_size": None,
        "annotate_domains": True,
        "categories": list(DEFAULT_CATEGORIES),
    },
    "retrieval": {
        "backend": "local",
        "remote_url": None,
    },
    "models": {
        "construction": _REQUIRED,
        "judge": _REQUIRED,
        "subjects": [],
    },
    "synthesis": {
        "atomic_per_doc": 3,
        "link_topk": 10,
        "link_attempts": 4,
        "max_answer_words": 12,
        "hops": 4,
        "topology": "both",
        "max_items_per_base": 1,
    },
    "disambiguation": {
        "enabled": False,
        "endpoint": "https://query.wikidata.org/sparql",
    },
    "evaluation": {
        "step_cap": 10,
        "topk_ceiling": 10,
        "hop_aware": True,
    },
    "report": {
        "group_by": ["model", "topology", "hops"],
    },
    "review": {
        "annotators": [],
        "tokens": _FreeForm(),
    },
}

_MODEL_KEYS = {"provider", "model_name", "script", "base_url"}


@dataclass
class ModelConfig:
    provider: str
    model_name: str
    script: str | None = None
    base_url: str | None = None

    @classmethod
    def parse(cls, raw: dict, where: str) -> "ModelConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}: expected a mapping")
        unknown = set(raw) - _MODEL_KEYS
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        provider = raw.get("provider")
        if provider not in ("stub", "openai"):
            raise ConfigError(f"{where}: provider must be 'stub' or 'openai'")
        model_name = raw.get("model_name")
        if not model_name:
            raise ConfigError(f"{where}: model_name is required")
        if provider == "stub" and not raw.get("script"):
            raise ConfigError(f"{where}: stub provider requires a script path")
        if provider == "openai" and not raw.get("base_url"):
            raise ConfigError(f"{where}: openai provider requires base_url")
        return cls(
            provider=provider,
            model_name=model_name,
            script=raw.get("script"),
            base_url=raw.get("base_url"),
        )


def _check_unknown_keys(raw: dict, schema: dict, prefix: str = "") -> None:
    for key in raw:
        if key not in schema:
            hint = difflib.get_close_matches(key, schema.keys(), n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(f"unknown config key {prefix + key!r}{suffix}")
        if isinstance(schema[key], _FreeForm):
            continue
        if isinstance(schema[key], dict) and isinstance(raw.get(key), dict):
            _check_unknown_keys(raw[key], schema[key], prefix=f"{prefix}{key}.")


def _merged(raw: dict, schema: dict, prefix: str = "") -> dict:
    out = {}
    for key, default in schema.items():
        if key in raw:
            value = raw[key]
            if isinstance(default, dict) and isinstance(value, dict) \
                    and not isinstance(default, _FreeForm):
                value = _merged(value, default, prefix=f"{prefix}{key}.")
            out[key] = value
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key {prefix + key!r}")
        else:
            out[key] = json.loads(json.dumps(default)) if isinstance(default, (dict, list)) else default
    return out


@dataclass
class RunConfig:
    corpus_path: str
    run_directory: str
    seed: int
    exclusion_lists: list[str]
    skip_malformed: bool
    cache_dir: str | None
    sample_size: int | None
    annotate_domains: bool
    categories: list[str]
    retrieval_backend: str
    remote_url: str | None
    construction_model: ModelConfig
    judge_model: ModelConfig
    subject_models: dict[str, ModelConfig]
    atomic_per_doc: int
    link_topk: int
    link_attempts: int
    max_answer_words: int
    hops_target: int
    topology: str
    max_items_per_base: int
    disambiguation_enabled: bool
    disambiguation_endpoint: str
    step_cap: int
    topk_ceiling: int
    hop_aware: bool
    group_by: list[str]
    annotators: list[str]
    annotator_tokens: dict[str, str]
    resolved: dict = field(repr=False, default_factory=dict)

    @property
    def run_dir(self) -> Path:
        return Path(self.run_directory)

    def config_hash(self) -> str:
        snapshot = {k: v for k, v in self.resolved.items() if k != "run_directory"}
        blob = json.dumps(snapshot, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def validate_config(path: str | Path, run_dir_override: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not readable: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_unknown_keys(raw, _SCHEMA)
    cfg = _merged(raw, _SCHEMA)
    if run_dir_override:
        cfg["run_directory"] = run_dir_override

    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    syn = cfg["synthesis"]
    for key in ("atomic_per_doc", "link_topk", "link_attempts", "max_answer_words", "max_items_per_base"):
        if not isinstance(syn[key], int) or syn[key] < 1:
            raise ConfigError(f"synthesis.{key} must be a positive integer")
    if syn["hops"] not in (2, 3, 4):
        raise ConfigError("synthesis.hops must be 2, 3 or 4")
    if syn["topology"] not in ("inference", "comparison", "both"):
        raise ConfigError("synthesis.topology must be inference, comparison or both")
    ev = cfg["evaluation"]
    for key in ("step_cap", "topk_ceiling"):
        if not isinstance(ev[key], int) or ev[key] < 1:
            raise ConfigError(f"evaluation.{key} must be a positive integer")
    ret = cfg["retrieval"]
    if ret["backend"] not in ("local", "remote"):
        raise ConfigError("retrieval.backend must be 'local' or 'remote'")
    if ret["backend"] == "remote" and not ret["remote_url"]:
        raise ConfigError("retrieval.backend 'remote' requires retrieval.remote_url")
    if cfg["corpus"]["sample_size"] is not None and (
        not isinstance(cfg["corpus"]["sample_size"], int) or cfg["corpus"]["sample_size"] < 1
    ):
        raise ConfigError("corpus.sample_size must be a positive integer or null")
    if not cfg["corpus"]["categories"]:
        raise ConfigError("corpus.categories must be non-empty")
    allowed_group = {"model", "topology", "hops"}
    if not set(cfg["report"]["group_by"]) <= allowed_group:
        raise ConfigError(f"report.group_by entries must be a subset of {sorted(allowed_group)}")

    models = cfg["models"]
    subjects = {}
    for i, sub in enumerate(models["subjects"]):
        if not isinstance(sub, dict) or "name" not in sub:
            raise ConfigError(f"models.subjects[{i}] needs a 'name'")
        sub = dict(sub)
        name = sub.pop("name")
        subjects[name] = ModelConfig.parse(sub, f"models.subjects[{i}]")

    return RunConfig(
        corpus_path=cfg["corpus_path"],
        run_directory=cfg["run_directory"],
        seed=cfg["seed"],
        exclusion_lists=list(cfg["exclusion_lists"]),
        skip_malformed=cfg["skip_malformed"],
        cache_dir=cfg["cache_dir"],
        sample_size=cfg["corpus"]["sample_size"],
        annotate_domains=cfg["corpus"]["annotate_domains"],
        categories=list(cfg["corpus"]["categories"]),
        retrieval_backend=ret["backend"],
        remote_url=ret["remote_url"],
        construction_model=ModelConfig.parse(models["construction"], "models.construction"),
        judge_model=ModelConfig.parse(models["judge"], "models.judge"),
        subject_models=subjects,
        atomic_per_doc=syn["atomic_per_doc"],
        link_topk=syn["link_topk"],
        link_attempts=syn["link_attempts"],
        max_answer_words=syn["max_answer_words"],
        hops_target=syn["hops"],
        topology=syn["topology"],
        max_items_per_base=syn["max_items_per_base"],
        disambiguation_enabled=cfg["disambiguation"]["enabled"],
        disambiguation_endpoint=cfg["disambiguation"]["endpoint"],
        step_cap=ev["step_cap"],
        topk_ceiling=ev["topk_ceiling"],
        hop_aware=ev["hop_aware"],
        group_by=list(cfg["report"]["group_by"]),
        annotators=list(cfg["review"]["annotators"]),
        annotator_tokens=dict(cfg["review"]["tokens"]),
        resolved=cfg,
    )


def build_gateway(model_cfg: ModelConfig, registry: TemplateRegistry,
                  cache_dir: str | None = None) -> LLMGateway:
    if model_cfg.provider == "stub":
        provider = ScriptedStubProvider.from_script(model_cfg.script, model_name=model_cfg.model_name)
    else:
        provider = OpenAIChatProvider(model_cfg.base_url, model_cfg.model_name)
    return LLMGateway(provider, registry=registry, cache_dir=cache_dir)


# ----------------------------------------------------------------------
# manifest + lock


class RunManifest:
    def __init__(self, run_id: str, config_hash: str, seed: int,
                 stages: dict[str, dict] | None = None):
        self.run_id = run_id
        self.config_hash = config_hash
        self.seed = seed
        self.stages = stages or {s: {"status": "pending", "counts": {}} for s in STAGES}

    def status(self, stage: str) -> str:
        return self.stages[stage]["status"]

    def set(self, stage: str, status: str, counts: dict | None = None) -> None:
        self.stages[stage]["status"] = status
        if counts is not None:
            self.stages[stage]["counts"] = counts

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stages": self.stages,
        }

    def save(self, path: Path) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load_or_create(cls, path: Path, config: RunConfig) -> "RunManifest":
        config_hash = config.config_hash()
        if path.is_file():
            data = json.loads(path.read_text(encoding="utf-8"))
            if data["config_hash"] != config_hash:
                raise PipelineError(
                    "config has changed since this run directory was created; "
                    "use a fresh run directory"
                )
            stages = {s: data["stages"].get(s, {"status": "pending", "counts": {}}) for s in STAGES}
            return cls(data["run_id"], data["config_hash"], data["seed"], stages)
        return cls(run_id=f"run-{config_hash[:10]}", config_hash=config_hash, seed=config.seed)


class RunLock:
    """Exclusive per-run-directory lock with stale-pid recovery."""

    def __init__(self, run_dir: Path):
        self.path = run_dir / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            pid = self._holder_pid()
            if pid is not None and _pid_alive(pid):
                raise PipelineError(
                    f"run directory is locked by live process {pid}"
                ) from None
            self.path.unlink(missing_ok=True)
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def _holder_pid(self) -> int | None:
        try:
            return int(self.path.read_text().strip())
        except (OSError, ValueError):
            return None

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# ----------------------------------------------------------------------
# stage implementations


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


class PipelineRun:
    """Lazy handles for one run directory."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.run_dir = config.run_dir
        self.registry = default_registry()
        self._store: DocumentStore | None = None
        self._index: SearchIndex | None = None

    # lazily loaded artifacts -------------------------------------------------

    @property
    def store(self) -> DocumentStore:
        if self._store is None:
            self._store = DocumentStore.load(self.run_dir / "documents.jsonl")
        return self._store

    @property
    def index(self) -> SearchIndex:
        if self._index is None:
            self._index = SearchIndex.load(self.run_dir / "index.json")
        return self._index

    def search_backend(self):
        if self.config.retrieval_backend == "remote":
            return RemoteSearchBackend(self.config.remote_url)
        return LocalSearchBackend(self.index, self.store)

    def gateway_for(self, model_cfg: ModelConfig) -> LLMGateway:
        return build_gateway(model_cfg, self.registry, cache_dir=self.config.cache_dir)

    def exclusion_titles(self) -> set[str]:
        titles: set[str] = set()
        for p in self.config.exclusion_lists:
            titles |= load_exclusion_list(p)
        return titles

    # stages ------------------------------------------------------------------

    def stage_ingest(self) -> dict:
        cfg = self.config
        store = DocumentStore()
        manifest = ingest_corpus(
            cfg.corpus_path,
            self.exclusion_titles(),
            store,
            exclusion_list_ids=[Path(p).name for p in cfg.exclusion_lists],
            skip_malformed=cfg.skip_malformed,
        )
        if cfg.sample_size is not None and len(store) > cfg.sample_size:
            rng = random.Random(cfg.seed)
            keep = set(rng.sample(sorted(d.id for d in store.all()), cfg.sample_size))
            sampled = DocumentStore()
            for doc in store.all():
                if doc.id in keep:
                    sampled.add(doc)
            store = sampled
        flagged: list[str] = []
        if cfg.annotate_domains:
            gateway = self.gateway_for(cfg.construction_model)
            flagged = annotate_store(store, cfg.categories, gateway)
        store.save(self.run_dir / "documents.jsonl")
        (self.run_dir / "ingest_manifest.json").write_text(
            json.dumps(
                {
                    "source_path": manifest.source_path,
                    "doc_count": len(store),
                    "excluded_count": manifest.excluded_count,
                    "exclusion_list_ids": manifest.exclusion_list_ids,
                    "unlabeled_flagged": flagged,
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        self._store = store
        return {"documents": len(store), "excluded": manifest.excluded_count,
                "unlabeled_flagged": len(flagged)}

    def stage_index(self) -> dict:
        index = SearchIndex.build(self.store)
        index.save(self.run_dir / "index.json")
        self._index = index
        return {"documents": len(index)}

    def _requested_topologies(self) -> list[Topology]:
        if self.config.topology == "both":
            return [Topology.INFERENCE, Topology.COMPARISON]
        return [Topology(self.config.topology)]

    def stage_synthesize(self, hops_target: int | None = None,
                         topology: str | None = None) -> dict:
        cfg = self.config
        hops_target = hops_target or cfg.hops_target
        topologies = (
            [Topology.INFERENCE, Topology.COMPARISON]
            if (topology or cfg.topology) == "both"
            else [Topology(topology or cfg.topology)]
        )
        gateway = self.gateway_for(cfg.construction_model)
        engine = SynthesisEngine(
            gateway,
            self.store,
            self.index,
            atomic_per_doc=cfg.atomic_per_doc,
            link_topk=cfg.link_topk,
            max_answer_words=cfg.max_answer_words,
        )
        verifier = Verifier(gateway, self.store)
        ledger = VerificationLedger(self.run_dir / "verification.ledger.jsonl")
        exclusions = self.exclusion_titles()
        prompts_version = registry_fingerprint(self.registry)
        quarantine: list[dict] = []

        # ---- atomic stage
        atomic_rows = []
        all_atomics: list[AtomicQA] = []
        for doc in self.store.all():
            for qa in engine.passing_atomics(doc):
                all_atomics.append(qa)
                atomic_rows.append({
                    "question": qa.question,
                    "answer": qa.answer,
                    "doc_id": qa.doc_id,
                    "passed_filters": sorted(qa.passed_filters),
                    "provenance": {
                        "doc_ids": [qa.doc_id],
                        "prompts_version": prompts_version,
                        "model_name": gateway.model_name,
                    },
                })
        _write_jsonl(self.run_dir / "atomic.jsonl", atomic_rows)

        def verify_and_record(item: HopItem) -> bool:
            try:
                record = verifier.verify(item)
            except VerificationUndetermined as exc:
                quarantine.append({"item_id": item.item_id, "stage": exc.stage,
                                   "question": item.final_question})
                return False
            ledger.append(item.item_id, record)
            item.verification = record
            return record.passed_all

        # ---- 2-hop composition
        verified: dict[int, list[HopItem]] = {2: [], 3: [], 4: []}
        seen_ids: set[str] = set()
        for topo in topologies:
            for base in all_atomics:
                produced = 0
                candidates = engine.find_link_candidates(
                    base, topo, exclusion_titles=exclusions
                )
                for link_doc in candidates[: cfg.link_attempts]:
                    if produced >= cfg.max_items_per_base:
                        break
                    for link in engine.passing_atomics(link_doc):
                        try:
                            item = engine.compose_2hop(base, link, topo)
                        except ComposeError:
                            continue
                        if item.item_id in seen_ids:
                            produced += 1
                            break
                        if verify_and_record(item):
                            seen_ids.add(item.item_id)
                            verified[2].append(item)
                            produced += 1
                            break

        # ---- extension to 3 and 4 hops
        for level in (3, 4):
            if hops_target < level:
                break
            for item in verified[level - 1]:
                extended = False
                candidates = engine.find_link_candidates(
                    AtomicQA(question=item.final_question, answer=item.final_answer,
                             doc_id=item.doc_ids()[-1]),
                    Topology.INFERENCE,
                    exclusion_titles=exclusions,
                    exclude_doc_ids=set(item.doc_ids()),
                )
                for link_doc in candidates[: cfg.link_attempts]:
                    if extended:
                        break
                    for link in engine.passing_atomics(link_doc):
                        try:
                            new_item = engine.extend_hop(item, link)
                        except ComposeError:
                            continue
                        if new_item.item_id in seen_ids:
                            extended = True
                            break
                        if verify_and_record(new_item):
                            seen_ids.add(new_item.item_id)
                            verified[level].append(new_item)
                            extended = True
                            break

        for level in (2, 3, 4):
            rows = []
            for item in verified[level]:
                row = item.to_export_dict(self.store)
                row["verification"] = item.verification.to_dict()
                row["provenance"] = {
                    "doc_ids": item.doc_ids(),
                    "prompts_version": prompts_version,
                    "model_name": gateway.model_name,
                }
                rows.append(row)
            _write_jsonl(self.run_dir / f"hop{level}.jsonl", rows)
        _write_jsonl(self.run_dir / "quarantine.jsonl", quarantine)

        return {
            "atomics": len(all_atomics),
            "hop2": len(verified[2]),
            "hop3": len(verified[3]),
            "hop4": len(verified[4]),
            "quarantined": len(quarantine),
        }

    def stage_verify(self) -> dict:
        """Consolidate verified items into the benchmark export."""
        records = []
        for level in (2, 3, 4):
            records.extend(_read_jsonl(self.run_dir / f"hop{level}.jsonl"))
        kept = [r for r in records if r.get("verification", {}).get("passed_all")]
        dropped_ambiguous = 0
        if self.config.disambiguation_enabled:
            from .disambiguation import screen_ambiguous

            kept, dropped = screen_ambiguous(kept, endpoint=self.config.disambiguation_endpoint)
            dropped_ambiguous = len(dropped)
        kept.sort(key=lambda r: (r["topology"], r["hops"], r["item_id"]))
        export = []
        for rec in kept:
            export.append({
                "item_id": rec["item_id"],
                "topology": rec["topology"],
                "hops": rec["hops"],
                "question": rec["question"],
                "answer": rec["answer"],
                "answer_aliases": rec["answer_aliases"],
                "ladder": rec["ladder"],
            })
        _write_jsonl(self.run_dir / "benchmark.jsonl", export)
        return {"items": len(export), "dropped_ambiguous": dropped_ambiguous}

    def stage_evaluate(self, model_name: str | None = None,
                       hop_aware: bool | None = None,
                       step_cap: int | None = None,
                       topk_ceiling: int | None = None) -> dict:
        cfg = self.config
        hop_aware = cfg.hop_aware if hop_aware is None else hop_aware
        step_cap = step_cap or cfg.step_cap
        topk_ceiling = topk_ceiling or cfg.topk_ceiling
        items = _read_jsonl(self.run_dir / "benchmark.jsonl")
        if not items:
            raise PipelineError("benchmark export is empty; run verify first")
        subjects = cfg.subject_models
        if model_name is not None:
            if model_name not in subjects:
                raise PipelineError(f"unknown subject model {model_name!r}")
            subjects = {model_name: subjects[model_name]}
        if not subjects:
            raise PipelineError("no subject models configured")
        judge_gateway = self.gateway_for(cfg.judge_model)
        tool = self.search_backend()

        from .metrics import exact_match, f1 as f1_score

        episode_total = 0
        for name, model_cfg in subjects.items():
            gateway = self.gateway_for(model_cfg)
            traces, hop_traces, results = [], [], []
            for rec in items:
                golds = [rec["answer"]] + list(rec["answer_aliases"])
                trace = run_question_episode(
                    rec["question"], gateway, tool, item_id=rec["item_id"],
                    step_cap=step_cap, topk_ceiling=topk_ceiling,
                )
                episode_total += 1
                predicted = trace.final_answer or ""
                em = exact_match(predicted, golds)
                per_hop = {rec["hops"]: em}
                if hop_aware:
                    for row in rec["ladder"][:-1]:
                        sub_trace = run_question_episode(
                            row["composed_question"], gateway, tool,
                            item_id=f"{rec['item_id']}#hop{row['hop']}",
                            step_cap=step_cap, topk_ceiling=topk_ceiling,
                        )
                        episode_total += 1
                        hop_traces.append(sub_trace)
                        per_hop[row["hop"]] = exact_match(
                            sub_trace.final_answer or "", [row["composed_answer"]]
                        )
                judge_verdict = judge_gateway.judge(
                    rec["question"], rec["answer"], predicted or "no answer"
                )
                topks = [s.action.topk for s in trace.steps if hasattr(s.action, "topk")]
                results.append(ItemResult(
                    item_id=rec["item_id"],
                    model_name=gateway.model_name,
                    topology=rec["topology"],
                    hops=rec["hops"],
                    final_correct_em=em,
                    f1=f1_score(predicted, golds),
                    judge_correct=int(judge_verdict == "correct"),
                    steps=trace.tool_call_count,
                    mean_topk=(sum(topks) / len(topks)) if topks else None,
                    per_hop_correct=per_hop,
                ))
                traces.append(trace)
            _write_jsonl(self.run_dir / f"traces-{name}.jsonl", [t.to_dict() for t in traces])
            _write_jsonl(self.run_dir / f"hop_traces-{name}.jsonl", [t.to_dict() for t in hop_traces])
            _write_jsonl(self.run_dir / f"results-{name}.jsonl", [r.to_dict() for r in results])
        return {"models": len(subjects), "items": len(items), "episodes": episode_total}

    def stage_report(self, group_by: list[str] | None = None,
                     require_hop_aware: bool = False) -> dict:
        from .harness import AgentTrace

        group_by = group_by or self.config.group_by
        results = []
        traces = []
        for path in sorted(self.run_dir.glob("results-*.jsonl")):
            results.extend(ItemResult.from_dict(r) for r in _read_jsonl(path))
        for path in sorted(self.run_dir.glob("traces-*.jsonl")):
            traces.extend(AgentTrace.from_dict(r) for r in _read_jsonl(path))
        if not results:
            raise PipelineError("no evaluation results found; run evaluate first")
        if require_hop_aware and not any(r.hop_coverage_complete for r in results):
            raise PipelineError(
                "no hop-aware results found; run evaluate with --hop-aware first"
            )
        report = aggregate_report(results, traces, group_by=tuple(group_by))
        (self.run_dir / "report_metrics.csv").write_text(report.metrics_csv(), encoding="utf-8")
        (self.run_dir / "report_diagnostics.csv").write_text(report.diagnostics_csv(), encoding="utf-8")
        (self.run_dir / "report.txt").write_text(report.text_report(), encoding="utf-8")
        return {"metric_rows": len(report.metrics_rows),
                "diagnostic_rows": len(report.diagnostics_rows)}


def registry_fingerprint(registry: TemplateRegistry) -> str:
    blob = json.dumps(
        {tid: [list(pair) for pair in registry.get(tid).role_sequence] for tid in registry.ids()},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def run_stage(config: RunConfig, stage: str, force: bool = False, **kwargs) -> RunManifest:
    """Execute one stage under the run lock; returns the updated manifest."""
    if stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; stages are {', '.join(STAGES)}")
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        manifest_path = run_dir / "manifest.json"
        manifest = RunManifest.load_or_create(manifest_path, config)
        position = STAGES.index(stage)
        for predecessor in STAGES[:position]:
            if manifest.status(predecessor) != "done":
                raise PipelineError(
                    f"stage {stage!r} requires predecessor {predecessor!r} to be done "
                    f"(currently {manifest.status(predecessor)})"
                )
        if manifest.status(stage) == "done" and not force:
            return manifest
        manifest.set(stage, "running")
        manifest.save(manifest_path)
        run = PipelineRun(config)
        try:
            counts = getattr(run, f"stage_{stage}")(**kwargs)
        except Exception:
            manifest.set(stage, "failed")
            manifest.save(manifest_path)
            raise
        manifest.set(stage, "done", counts)
        # a later stage re-run invalidates nothing upstream, but downstream
        # stages must rerun against the new outputs
        for later in STAGES[position + 1:]:
            if manifest.status(later) == "done":
                manifest.set(later, "pending")
        manifest.save(manifest_path)
        return manifest
