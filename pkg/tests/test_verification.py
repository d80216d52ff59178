import pytest

from hopforge.errors import VerificationUndetermined
from hopforge.fixtures import CHAIN_DOCS
from hopforge.synthesis import Topology
from hopforge.verification import (
    STAGE_ORDER,
    VerificationLedger,
    Verifier,
    leakage_pre_check,
)

from conftest import stub_gateway
from itemfactory import build_item, fixture_gateway, fixture_store


@pytest.fixture
def verifier():
    return Verifier(fixture_gateway(), fixture_store())


def leaky_three_hop():
    """3-hop item whose final question reveals the hop-2 intermediate answer."""
    item = build_item(Topology.INFERENCE, 3)
    item.final_question = (
        "Who is the Dutch Reformed theologian associated with Arminianism, the "
        "theological perspective of the church established in Amherst?"
    )
    item.ladder[-1] = type(item.ladder[-1])(
        hop_index=3, atomic=item.ladder[-1].atomic,
        composed_question=item.final_question,
        composed_answer=item.final_answer,
    )
    return item


def test_leakage_pre_check_fails_on_intermediate_answer():
    result = leakage_pre_check(leaky_three_hop())
    assert not result.passed
    assert "information_leakage" in result.reason
    assert "hop 2" in result.reason


def test_leakage_pre_check_passes_clean_chain():
    # the real 3-hop question contains no intermediate answer string
    assert leakage_pre_check(build_item(Topology.INFERENCE, 3)).passed


def test_leakage_final_answer_rule_inference():
    item = build_item(Topology.INFERENCE, 2)
    item.final_question = "Is Arminianism the theological perspective of the Amherst church?"
    item.ladder[-1] = type(item.ladder[-1])(
        hop_index=2, atomic=item.ladder[-1].atomic,
        composed_question=item.final_question, composed_answer=item.final_answer,
    )
    result = leakage_pre_check(item)
    assert not result.passed
    assert "final answer" in result.reason


def test_leakage_exempts_comparison_verdict():
    # a comparison question must name both entities, including the winner
    assert leakage_pre_check(build_item(Topology.COMPARISON, 2)).passed


def test_structural_llm_audit_failure():
    gateway = fixture_gateway(extra_rules=[{
        "match": {"template_id": "structural_audit"},
        "respond": "FAIL: trivial concatenation",
    }])
    verifier = Verifier(gateway, fixture_store())
    result = verifier.verify_structural(build_item(Topology.INFERENCE, 2))
    assert not result.passed
    assert result.reason == "trivial concatenation"


def test_semantic_audit_incommensurable_comparison():
    gateway = fixture_gateway(extra_rules=[{
        "match": {"template_id": "semantic_audit_comparison"},
        "respond": "FAIL: incommensurable attributes",
    }])
    verifier = Verifier(gateway, fixture_store())
    result = verifier.verify_semantic(build_item(Topology.COMPARISON, 2))
    assert not result.passed
    assert "incommensurable" in result.reason


def test_unparseable_audit_is_undetermined():
    gateway = fixture_gateway(extra_rules=[{
        "match": {"template_id": "semantic_audit_inference"},
        "respond": "hmm, not sure",
    }])
    verifier = Verifier(gateway, fixture_store())
    with pytest.raises(VerificationUndetermined) as exc:
        verifier.verify_semantic(build_item(Topology.INFERENCE, 2))
    assert exc.value.stage == "semantic"


def test_all_docs_required_oracle_passes_every_fixture(verifier):
    for topology in (Topology.INFERENCE, Topology.COMPARISON):
        for hops in (2, 3, 4):
            record = verifier.verify(build_item(topology, hops))
            assert record.passed_all, (topology, hops, record.stage_results)
            assert record.evaluated_stages() == list(STAGE_ORDER)
            assert len(record.hop_removal_verdicts) == hops
            assert set(record.hop_removal_verdicts.values()) == {"incorrect"}


def _marker(doc_id):
    return next(d.marker for d in CHAIN_DOCS if d.id == doc_id)


def reducible_gateway():
    """Oracle that still answers the 2-hop inference item with hop 2's doc removed."""
    return fixture_gateway(extra_rules=[{
        "match": {"template_id": "multihop_answer",
                  "var_substrings": ["With which theological perspective is the type",
                                     _marker("d-amherst")]},
        "respond": "Arminianism",
    }])


def test_reducible_item_fails_irreducibility_naming_hop_2():
    verifier = Verifier(reducible_gateway(), fixture_store())
    record = verifier.verify(build_item(Topology.INFERENCE, 2))
    assert not record.passed_all
    assert record.stage_results["irreducibility"].passed is False
    assert "hop 2" in record.stage_results["irreducibility"].reason
    assert record.hop_removal_verdicts == {1: "incorrect", 2: "correct"}
    # solvability is short-circuited away
    assert "solvability" not in record.stage_results
    assert record.evaluated_stages() == ["structural", "semantic", "necessity", "irreducibility"]


def test_well_formed_twin_passes(verifier):
    record = verifier.verify(build_item(Topology.INFERENCE, 2))
    assert record.passed_all


def test_closed_book_success_fails_necessity_and_skips_rest():
    gateway = fixture_gateway(extra_rules=[{
        "match": {"template_id": "closed_book",
                  "var_substrings": ["With which theological perspective is the type"]},
        "respond": "Arminianism",
    }])
    verifier = Verifier(gateway, fixture_store())
    record = verifier.verify(build_item(Topology.INFERENCE, 2))
    assert record.stage_results["necessity"].passed is False
    assert record.evaluated_stages() == ["structural", "semantic", "necessity"]
    assert record.hop_removal_verdicts == {}


def test_evaluated_stages_always_a_prefix(verifier):
    records = [
        verifier.verify(build_item(Topology.INFERENCE, 2)),
        Verifier(reducible_gateway(), fixture_store()).verify(build_item(Topology.INFERENCE, 2)),
    ]
    for record in records:
        evaluated = record.evaluated_stages()
        assert evaluated == list(STAGE_ORDER)[: len(evaluated)]


def test_structural_leakage_skips_gateway_entirely():
    # no stub rules at all: a leaky item must still fail deterministically
    verifier = Verifier(stub_gateway([]), fixture_store())
    result = verifier.verify_structural(leaky_three_hop())
    assert not result.passed


def test_ledger_appends_and_preserves_order(tmp_path, verifier):
    ledger = VerificationLedger(tmp_path / "ledger.jsonl")
    item = build_item(Topology.INFERENCE, 2)
    record = verifier.verify(item)
    ledger.append(item.item_id, record)
    reducible = Verifier(reducible_gateway(), fixture_store())
    record2 = reducible.verify(item)
    ledger.append(item.item_id, record2)

    entries = ledger.entries()
    assert len(entries) == 2
    assert list(entries[0]["stage_results"]) == list(STAGE_ORDER)
    assert list(entries[1]["stage_results"]) == ["structural", "semantic", "necessity",
                                                 "irreducibility"]
    assert entries[0]["passed_all"] is True
    assert entries[1]["passed_all"] is False
