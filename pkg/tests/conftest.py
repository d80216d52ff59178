import json

import pytest

from hopforge.corpus import Document, DocumentStore
from hopforge.gateway import LLMGateway, ScriptedStubProvider, StubRule, default_registry


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def three_doc_store():
    store = DocumentStore()
    store.add(Document(
        id="d1", title="Omega Persei",
        text="Omega Persei is a star radiating at an effective temperature of 4,586 K.",
    ))
    store.add(Document(
        id="d2", title="HD 195564",
        text="The effective temperature of the stellar atmosphere of HD 195564 is 5,421 K.",
    ))
    store.add(Document(
        id="d3", title="Wesleyanism",
        text="The Wesleyan tradition has been associated with Arminianism.",
    ))
    return store


def stub_gateway(rules, registry=None, model_name="stub", **kwargs):
    """Gateway over an in-memory rule list; rules are (template_id, substrings, respond)."""
    stub_rules = [
        StubRule(respond=respond, template_id=template_id, var_substrings=list(substrings))
        for template_id, substrings, respond in rules
    ]
    provider = ScriptedStubProvider(stub_rules, model_name=model_name)
    return LLMGateway(provider, registry=registry or default_registry(),
                      sleep=lambda _s: None, **kwargs)


def write_script(path, rules):
    """Write (template_id, substrings, respond) rules as a stub script file."""
    with open(path, "w", encoding="utf-8") as fh:
        for template_id, substrings, respond in rules:
            match = {}
            if template_id:
                match["template_id"] = template_id
            if substrings:
                match["var_substrings"] = list(substrings)
            fh.write(json.dumps({"match": match, "respond": respond}) + "\n")
    return path
