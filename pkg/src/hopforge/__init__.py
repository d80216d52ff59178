"""hopforge: hop-aware multi-hop QA benchmark factory and agent evaluation harness."""

from .corpus import CorpusManifest, Document, DocumentStore, ingest_corpus, normalize_title
from .errors import HopforgeError
from .gateway import Completion, DecodingConfig, LLMGateway, PromptTemplate, default_registry
from .harness import AgentTrace, FinalAnswer, ToolCall, parse_action, run_episode
from .metrics import exact_match, f1, max_depth, mean_topk, normalize_answer, step_stats
from .retrieval import RankedDocs, SearchIndex
from .review import AgreementReport, fleiss_kappa
from .synthesis import AtomicQA, HopItem, HopRecord, SynthesisEngine, Topology
from .verification import VerificationRecord, Verifier

__version__ = "0.1.0"

__all__ = [
    "AgentTrace",
    "AgreementReport",
    "AtomicQA",
    "Completion",
    "CorpusManifest",
    "DecodingConfig",
    "Document",
    "DocumentStore",
    "FinalAnswer",
    "HopItem",
    "HopRecord",
    "HopforgeError",
    "LLMGateway",
    "PromptTemplate",
    "RankedDocs",
    "SearchIndex",
    "SynthesisEngine",
    "ToolCall",
    "Topology",
    "VerificationRecord",
    "Verifier",
    "default_registry",
    "exact_match",
    "f1",
    "fleiss_kappa",
    "ingest_corpus",
    "max_depth",
    "mean_topk",
    "normalize_answer",
    "normalize_title",
    "parse_action",
    "run_episode",
    "step_stats",
]
