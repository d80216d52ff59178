import pytest

from hopforge.errors import GatewayError, JudgeParseError, ProviderTransientError
from hopforge.gateway import (
    Completion,
    DecodingConfig,
    LLMGateway,
    PromptTemplate,
    ScriptedStubProvider,
    TemplateRegistry,
    default_registry,
)

from conftest import stub_gateway, write_script


def test_decoding_deterministic_requires_zero_temperature():
    with pytest.raises(GatewayError):
        DecodingConfig(temperature=0.7, deterministic=True)
    DecodingConfig(temperature=0.7, deterministic=False)


def test_template_placeholders_must_be_declared():
    with pytest.raises(GatewayError):
        PromptTemplate("t", (("user", "hello $name and $other"),), frozenset({"name"}))


def test_template_render_missing_variable():
    template = PromptTemplate("t", (("user", "hello $name"),), frozenset({"name"}))
    with pytest.raises(GatewayError):
        template.render({})
    assert template.render({"name": "x"}) == [{"role": "user", "content": "hello x"}]


def test_registry_rejects_duplicates():
    registry = TemplateRegistry()
    template = PromptTemplate("t", (("user", "hi"),), frozenset())
    registry.register(template)
    with pytest.raises(GatewayError):
        registry.register(template)


def test_default_registry_covers_pipeline_templates(registry):
    expected = {
        "atomic_generation", "closed_book", "grounded_answer", "merge_inference",
        "merge_comparison", "extend_inference", "attribute_phrase", "structural_audit",
        "semantic_audit_inference", "semantic_audit_comparison", "multihop_answer",
        "aliases", "judge", "agent_plan", "agent_action", "domain_annotation",
    }
    assert expected <= set(registry.ids())


def test_unknown_template_errors():
    gateway = stub_gateway([])
    with pytest.raises(GatewayError):
        gateway.complete("nope", {})


def test_stub_first_match_wins():
    gateway = stub_gateway([
        ("closed_book", ["Omega"], "first"),
        ("closed_book", [], "fallback"),
    ])
    assert gateway.complete("closed_book", {"question": "Omega Persei?"}).text == "first"
    assert gateway.complete("closed_book", {"question": "other"}).text == "fallback"


def test_stub_script_file_round_trip(tmp_path):
    script = write_script(tmp_path / "stub.jsonl", [
        ("closed_book", ["hash-h"], "Correct"),
    ])
    provider = ScriptedStubProvider.from_script(script)
    gateway = LLMGateway(provider, registry=default_registry(), sleep=lambda _s: None)
    completion = gateway.complete("closed_book", {"question": "hash-h please"})
    assert completion.text == "Correct"
    assert completion.provider == "scripted-stub"


class FlakyProvider:
    name = "flaky"
    model_name = "flaky-model"

    def __init__(self, failures):
        self.failures = failures
        self.calls = 0

    def chat(self, messages, decoding, template_id=None):
        self.calls += 1
        if self.calls <= self.failures:
            raise ProviderTransientError("boom")
        return "ok", (1, 1)


def test_retry_recovers_and_counts():
    provider = FlakyProvider(failures=2)
    gateway = LLMGateway(provider, registry=default_registry(), sleep=lambda _s: None)
    completion = gateway.complete("closed_book", {"question": "q"})
    assert completion.text == "ok"
    assert completion.retries == 2
    assert provider.calls == 3


def test_retry_exhaustion_raises():
    provider = FlakyProvider(failures=99)
    gateway = LLMGateway(provider, registry=default_registry(),
                         max_attempts=3, sleep=lambda _s: None)
    with pytest.raises(GatewayError):
        gateway.complete("closed_book", {"question": "q"})
    assert provider.calls == 3


def test_retry_backoff_schedule():
    delays = []
    provider = FlakyProvider(failures=3)
    gateway = LLMGateway(provider, registry=default_registry(),
                         backoff_base=1.0, sleep=delays.append)
    gateway.complete("closed_book", {"question": "q"})
    assert len(delays) == 3
    # jittered exponential: delay_n in [0.5, 1.5) * base * 2^n
    for n, delay in enumerate(delays):
        assert 0.5 * 2 ** n <= delay < 1.5 * 2 ** n


def test_cache_round_trip(tmp_path):
    provider = FlakyProvider(failures=0)
    gateway = LLMGateway(provider, registry=default_registry(),
                         cache_dir=tmp_path / "cache", sleep=lambda _s: None)
    first = gateway.complete("closed_book", {"question": "q"})
    second = gateway.complete("closed_book", {"question": "q"})
    assert provider.calls == 1
    assert second.cached and not first.cached
    assert second.text == first.text
    # different variables miss the cache
    gateway.complete("closed_book", {"question": "other"})
    assert provider.calls == 2


def test_cache_key_includes_decoding(tmp_path):
    provider = FlakyProvider(failures=0)
    gateway = LLMGateway(provider, registry=default_registry(),
                         cache_dir=tmp_path / "cache", sleep=lambda _s: None)
    gateway.complete("closed_book", {"question": "q"}, DecodingConfig(max_output_tokens=64))
    gateway.complete("closed_book", {"question": "q"}, DecodingConfig(max_output_tokens=128))
    assert provider.calls == 2


def test_in_flight_bound_enforced():
    import threading

    class TrackingProvider:
        name = "tracking"
        model_name = "tracking"

        def __init__(self):
            self.active = 0
            self.peak = 0
            self.lock = threading.Lock()
            self.entered = threading.Event()

        def chat(self, messages, decoding, template_id=None):
            with self.lock:
                self.active += 1
                self.peak = max(self.peak, self.active)
            self.entered.set()
            import time as _time

            _time.sleep(0.02)
            with self.lock:
                self.active -= 1
            return "ok", (1, 1)

    provider = TrackingProvider()
    gateway = LLMGateway(provider, registry=default_registry(), max_in_flight=2)
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=6) as pool:
        list(pool.map(
            lambda n: gateway.complete("closed_book", {"question": f"q{n}"}),
            range(8),
        ))
    assert provider.peak <= 2


def test_rate_ceiling_spaces_requests():
    sleeps = []
    provider = FlakyProvider(failures=0)
    gateway = LLMGateway(provider, registry=default_registry(),
                         requests_per_second=100.0, sleep=sleeps.append)
    gateway.complete("closed_book", {"question": "one"})
    gateway.complete("closed_book", {"question": "two"})
    # the second immediate request waits out the minimum interval
    assert any(0 < s <= 0.01 + 1e-3 for s in sleeps)


# ----------------------------------------------------------------------
# judge


def judge_gateway(reply):
    return stub_gateway([("judge", [], reply)])


def test_judge_correct_pair():
    gateway = stub_gateway([
        ("judge", ["Gold answer: Atlanta Falcons\nPredicted answer: Atlanta Falcons\n"], "Correct"),
        ("judge", [], "Incorrect"),
    ])
    assert gateway.judge("Who won?", "Atlanta Falcons", "Atlanta Falcons") == "correct"


def test_judge_semantic_mismatch_incorrect():
    gateway = judge_gateway("Incorrect")
    verdict = gateway.judge(
        "Which broader trading area?",
        "Amsterdam",
        "Minneapolis–St. Paul MN–WI Combined Statistical Area",
    )
    assert verdict == "incorrect"


def test_judge_unmappable_output():
    gateway = judge_gateway("maybe")
    with pytest.raises(JudgeParseError):
        gateway.judge("q", "gold", "pred")


def test_judge_rejects_blank_inputs():
    gateway = judge_gateway("Correct")
    with pytest.raises(GatewayError):
        gateway.judge("q", "  ", "pred")


def test_judge_tolerates_trailing_punctuation():
    gateway = judge_gateway("Correct.")
    assert gateway.judge("q", "g", "p") == "correct"


def test_stub_reproducibility():
    rules = [("closed_book", [], "stable answer")]
    a = stub_gateway(rules).complete("closed_book", {"question": "q"})
    b = stub_gateway(rules).complete("closed_book", {"question": "q"})
    assert a.text == b.text == "stable answer"
    assert a.token_usage == b.token_usage
