"""Provider-agnostic chat-completion access.

Three pieces: a registry of prompt templates (versioned YAML assets with
``$var`` placeholders), provider adapters (an OpenAI-compatible HTTP client
and a scripted stub for offline runs), and the gateway itself, which renders,
retries transient failures with jittered exponential backoff, and optionally
caches completions on disk keyed by (model, rendered messages, decoding).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import random
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import (
    GatewayError,
    JudgeParseError,
    ProviderError,
    ProviderTransientError,
)

VALID_ROLES = ("system", "user", "assistant")
API_KEY_ENV = "HOPFORGE_API_KEY"

_PLACEHOLDER_RE = re.compile(r"\$(?:\{([_a-zA-Z][_a-zA-Z0-9]*)\}|([_a-zA-Z][_a-zA-Z0-9]*))")


def _placeholders(text: str) -> set[str]:
    return {a or b for a, b in _PLACEHOLDER_RE.findall(text)}


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 0.0
    max_output_tokens: int = 1024
    deterministic: bool = True

    def __post_init__(self):
        if self.temperature < 0:
            raise GatewayError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise GatewayError("max_output_tokens must be positive")
        if self.deterministic and self.temperature != 0:
            raise GatewayError("deterministic decoding requires temperature 0")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "deterministic": self.deterministic,
        }


@dataclass
class Completion:
    text: str
    provider: str
    model_name: str
    token_usage: tuple[int, int]  # (prompt, completion)
    cached: bool = False
    retries: int = 0


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    role_sequence: tuple[tuple[str, str], ...]
    required_vars: frozenset[str]

    def __post_init__(self):
        seen = set()
        for role, text in self.role_sequence:
            if role not in VALID_ROLES:
                raise GatewayError(f"template {self.template_id!r}: invalid role {role!r}")
            seen |= _placeholders(text)
        extra = seen - self.required_vars
        if extra:
            raise GatewayError(
                f"template {self.template_id!r}: placeholders {sorted(extra)} not in required_vars"
            )

    def render(self, variables: dict[str, str]) -> list[dict[str, str]]:
        missing = self.required_vars - set(variables)
        if missing:
            raise GatewayError(
                f"template {self.template_id!r}: missing variables {sorted(missing)}"
            )
        messages = []
        for role, text in self.role_sequence:
            rendered = _PLACEHOLDER_RE.sub(
                lambda m: str(variables[m.group(1) or m.group(2)]), text
            )
            messages.append({"role": role, "content": rendered})
        return messages


class TemplateRegistry:
    def __init__(self):
        self._templates: dict[str, PromptTemplate] = {}

    def register(self, template: PromptTemplate) -> None:
        if template.template_id in self._templates:
            raise GatewayError(f"duplicate template id {template.template_id!r}")
        self._templates[template.template_id] = template

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise GatewayError(f"unknown template {template_id!r}") from None

    def ids(self) -> list[str]:
        return sorted(self._templates)

    @classmethod
    def from_dir(cls, path: str | Path) -> "TemplateRegistry":
        registry = cls()
        for file in sorted(Path(path).glob("*.yaml")):
            data = yaml.safe_load(file.read_text(encoding="utf-8"))
            registry.register(
                PromptTemplate(
                    template_id=data["template_id"],
                    role_sequence=tuple((r["role"], r["text"]) for r in data["roles"]),
                    required_vars=frozenset(data.get("required_vars", [])),
                )
            )
        return registry


def default_registry() -> TemplateRegistry:
    """Registry loaded from the packaged prompt assets."""
    return TemplateRegistry.from_dir(Path(__file__).parent / "prompts")


class OpenAIChatProvider:
    """OpenAI-compatible chat-completions endpoint."""

    name = "openai-compat"

    def __init__(self, base_url: str, model_name: str, api_key: str | None = None, client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = client or httpx.Client(timeout=60.0)

    def chat(self, messages: list[dict], decoding: DecodingConfig, template_id: str | None = None):
        import httpx

        body = {
            "model": self.model_name,
            "messages": messages,
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderTransientError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderTransientError(f"provider returned {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider returned {resp.status_code}: {resp.text[:400]}")
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
        usage = payload.get("usage", {})
        return text, (usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


@dataclass
class StubRule:
    respond: str
    template_id: str | None = None
    var_substrings: list[str] = field(default_factory=list)

    def matches(self, rendered: str, template_id: str | None) -> bool:
        if self.template_id is not None and self.template_id != template_id:
            return False
        return all(s in rendered for s in self.var_substrings)


class ScriptedStubProvider:
    """Deterministic offline provider driven by a rule script.

    The script is line-delimited JSON: ``{"match": {"template_id": ...,
    "var_substrings": [...]}, "respond": "..."}``; rules are evaluated in
    order and the first match wins. A call with no matching rule is a
    permanent provider error, which keeps fixture gaps loud.
    """

    name = "scripted-stub"

    def __init__(self, rules: list[StubRule], model_name: str = "scripted-stub"):
        self.rules = rules
        self.model_name = model_name

    @classmethod
    def from_script(cls, path: str | Path, model_name: str = "scripted-stub") -> "ScriptedStubProvider":
        rules = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                match = rec.get("match", {})
                rules.append(
                    StubRule(
                        respond=rec["respond"],
                        template_id=match.get("template_id"),
                        var_substrings=list(match.get("var_substrings", [])),
                    )
                )
        return cls(rules, model_name=model_name)

    def chat(self, messages: list[dict], decoding: DecodingConfig, template_id: str | None = None):
        rendered = "\n".join(m["content"] for m in messages)
        for rule in self.rules:
            if rule.matches(rendered, template_id):
                return rule.respond, (len(rendered.split()), len(rule.respond.split()))
        raise ProviderError(
            f"stub script has no rule for template {template_id!r}; "
            f"prompt head: {rendered[:160]!r}"
        )


class LLMGateway:
    """Renders templates, talks to one provider, retries, and caches."""

    def __init__(
        self,
        provider,
        registry: TemplateRegistry | None = None,
        cache_dir: str | Path | None = None,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        max_in_flight: int = 8,
        requests_per_second: float | None = None,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ):
        self.provider = provider
        self.registry = registry or default_registry()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._inflight = threading.Semaphore(max_in_flight)
        self._rate_lock = threading.Lock()
        self._min_interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self._last_request = 0.0

    @property
    def model_name(self) -> str:
        return getattr(self.provider, "model_name", "unknown")

    def _cache_key(self, messages, decoding: DecodingConfig) -> str:
        blob = json.dumps(
            {"model": self.model_name, "messages": messages, "decoding": decoding.to_dict()},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _throttle(self):
        if self._min_interval <= 0:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._last_request + self._min_interval - now
            if wait > 0:
                self._sleep(wait)
            self._last_request = time.monotonic()

    def complete(
        self,
        template_id: str,
        variables: dict[str, str],
        decoding: DecodingConfig | None = None,
    ) -> Completion:
        decoding = decoding or DecodingConfig()
        template = self.registry.get(template_id)
        messages = template.render(variables)

        if self.cache_dir:
            key = self._cache_key(messages, decoding)
            path = self._cache_path(key)
            if path.is_file():
                rec = json.loads(path.read_text(encoding="utf-8"))
                return Completion(
                    text=rec["text"],
                    provider=rec["provider"],
                    model_name=rec["model_name"],
                    token_usage=tuple(rec["token_usage"]),
                    cached=True,
                )

        last_exc: Exception | None = None
        retries = 0
        with self._inflight:
            for attempt in range(self.max_attempts):
                self._throttle()
                try:
                    text, usage = self.provider.chat(messages, decoding, template_id=template_id)
                    break
                except ProviderTransientError as exc:
                    last_exc = exc
                    retries += 1
                    if attempt + 1 >= self.max_attempts:
                        raise GatewayError(
                            f"provider exhausted after {self.max_attempts} attempts: {exc}"
                        ) from exc
                    delay = self.backoff_base * (2 ** attempt)
                    self._sleep(delay * (0.5 + self._rng.random()))
            else:  # pragma: no cover - loop always breaks or raises
                raise GatewayError(f"provider exhausted: {last_exc}")

        completion = Completion(
            text=text,
            provider=getattr(self.provider, "name", type(self.provider).__name__),
            model_name=self.model_name,
            token_usage=(int(usage[0]), int(usage[1])),
            retries=retries,
        )
        if self.cache_dir:
            rec = {
                "text": completion.text,
                "provider": completion.provider,
                "model_name": completion.model_name,
                "token_usage": list(completion.token_usage),
            }
            self._cache_path(key).write_text(
                json.dumps(rec, ensure_ascii=False), encoding="utf-8"
            )
        return completion

    def judge(self, question: str, gold: str, predicted: str) -> str:
        """Deterministic correctness verdict: "correct" or "incorrect"."""
        for label, value in (("question", question), ("gold", gold), ("predicted", predicted)):
            if not value.strip():
                raise GatewayError(f"judge {label} must be non-blank")
        decoding = DecodingConfig(temperature=0.0, deterministic=True)
        assert decoding.deterministic  # the judge is never sampled
        completion = self.complete(
            "judge",
            {"question": question, "gold": gold, "predicted": predicted},
            decoding,
        )
        head = completion.text.strip().split()
        first = head[0].strip(".,:;!\"'").lower() if head else ""
        if first == "correct":
            return "correct"
        if first == "incorrect":
            return "incorrect"
        raise JudgeParseError(f"unmappable judge output: {completion.text[:120]!r}")
