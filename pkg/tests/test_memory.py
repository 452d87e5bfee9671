"""Memory set semantics: classification, application, strategies."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadmem.memory import (
    EVERYDAY_LANGUAGE,
    MemoryCategory,
    MemoryItem,
    MemoryKind,
    ResolvedUpdate,
    SelectionScope,
    UnknownItemReference,
    UpdateAction,
    accumulate_strategy,
    apply_update,
    candidate_pool,
    classify_update_relation,
    compress_all_strategy,
    empty_memory,
    recursive_summary_strategy,
    resolve_updates,
    seed_memory,
    update_with_rules,
)
from dyadmem.screenplay import Dyad

DYAD = Dyad.of("ALICE", "BOB")

UPDATE_ACTION_ROWS = [
    (
        "John and Alice are planning a trip together.",
        "John and Alice have finalized the details of their trip.",
        UpdateAction.ACCUMULATE,
    ),
    (
        "Tom recently got a new job.",
        "Tom successfully completed his first project at the new job.",
        UpdateAction.CONNECT_SEQUENTIAL,
    ),
    (
        "Ellie did not enjoy her recent trip.",
        "Ellie is looking forward to traveling again.",
        UpdateAction.UPDATE_CONFLICTING,
    ),
    (
        "Michael mentioned that he felt a lot of emotions on his wedding day.",
        "Michael felt a lot of love from his family at the wedding.",
        UpdateAction.DEDUPLICATE,
    ),
]


@pytest.mark.parametrize("previous,current,expected", UPDATE_ACTION_ROWS)
def test_update_relation_reference_rows(previous, current, expected):
    assert classify_update_relation(previous, current) is expected


def test_identical_sentences_deduplicate():
    s = "Tom recently got a new job."
    assert classify_update_relation(s, s) is UpdateAction.DEDUPLICATE


def test_unrelated_same_subject_accumulates():
    assert (
        classify_update_relation("JANE likes spicy food.", "JANE dislikes math.")
        is UpdateAction.ACCUMULATE
    )


def _item(text, category=MemoryCategory.PERSONA, owner="ALICE", item_id=""):
    kind = MemoryKind(category, owner if category in (MemoryCategory.PERSONA, MemoryCategory.PERSONAL_EVENT) else None)
    return MemoryItem(item_id, kind, text)


def test_apply_update_accumulate_keeps_both():
    memory = seed_memory(DYAD, persona_u=("ALICE likes spicy food.",))
    updated = update_with_rules(memory, [_item("ALICE dislikes math.")])
    texts = {it.text for it in updated.active_items()}
    assert texts == {"ALICE likes spicy food.", "ALICE dislikes math."}
    assert updated.version == memory.version + 1


def test_mutual_event_promoted_to_shared():
    memory = empty_memory(DYAD)
    item = _item(
        "John and Alice planned a trip together and have finalized the details.",
        MemoryCategory.MUTUAL_EVENT,
    )
    updated = update_with_rules(memory, [item])
    assert len(updated.shared) == 1
    promoted = updated.shared[0]
    assert promoted.kind.category is MemoryCategory.SHARED_MEMORY
    assert promoted.needs_past_tense
    for coll_name, items in updated.collections().items():
        if coll_name != "shared":
            assert items == ()


def test_empty_update_bumps_version_only():
    memory = seed_memory(DYAD, persona_u=("ALICE paints.",))
    updated = apply_update(memory, [])
    assert updated.version == memory.version + 1
    assert [it.text for it in updated.active_items()] == ["ALICE paints."]


def test_supersession_marks_previous():
    memory = seed_memory(DYAD, events_u=("ALICE recently got a new job.",))
    new = _item(
        "ALICE recently got a new job and was very nervous on her first day.",
        MemoryCategory.PERSONAL_EVENT,
    )
    updated = update_with_rules(memory, [new])
    old = updated.get(memory.events_u[0].item_id)
    assert old.status == "superseded"
    assert old.superseded_by
    replacement = updated.get(old.superseded_by)
    assert replacement.active


def test_unknown_item_reference():
    memory = empty_memory(DYAD)
    bogus = ResolvedUpdate(
        _item("ALICE sails."), UpdateAction.CONNECT_SEQUENTIAL, ("missing",)
    )
    with pytest.raises(UnknownItemReference):
        apply_update(memory, [bogus])


def test_dedup_idempotence():
    memory = seed_memory(DYAD, persona_u=("ALICE paints.",))
    batch = [
        _item("ALICE collects maps."),
        _item("BOB hates mornings.", owner="BOB"),
    ]
    once = update_with_rules(memory, batch)
    twice = update_with_rules(once, batch)
    assert sorted(it.text for it in once.active_items()) == sorted(
        it.text for it in twice.active_items()
    )


def test_accumulate_strategy_exactly_additive():
    memory = empty_memory(DYAD)
    batch = [_item(f"ALICE fact {i}.") for i in range(3)]
    for step in range(1, 4):
        memory = accumulate_strategy(memory, batch)
        assert len(memory.active_items()) == 3 * step
    # duplicates retained by definition of the baseline
    texts = [it.text for it in memory.active_items()]
    assert texts.count("ALICE fact 0.") == 3


def test_candidate_pool_scopes():
    memory = seed_memory(
        DYAD,
        persona_u=("ALICE paints.", "ALICE sails."),
        shared=("ALICE and BOB met at sea.",),
    )
    full = candidate_pool(memory, SelectionScope.FULL)
    assert full[-1].text == EVERYDAY_LANGUAGE
    assert len(full) == 4

    indiv = candidate_pool(memory, SelectionScope.INDIVIDUAL_ONLY, responder="ALICE")
    assert len(indiv) == 3  # two personas + sentinel
    assert all("met at sea" not in c.text for c in indiv)

    noshared = candidate_pool(memory, SelectionScope.NO_SHARED)
    assert all("met at sea" not in c.text for c in noshared)

    empty = candidate_pool(empty_memory(DYAD), SelectionScope.FULL)
    assert [c.text for c in empty] == [EVERYDAY_LANGUAGE]


def test_candidate_pool_annotations():
    memory = seed_memory(DYAD, persona_u=("ALICE paints.",), shared=("ALICE and BOB met.",))
    texts = [c.text for c in candidate_pool(memory, SelectionScope.FULL)]
    assert "ALICE paints. (ALICE's persona)" in texts
    assert "ALICE and BOB met. (Shared memories)" in texts


def test_superseded_items_never_offered():
    memory = seed_memory(DYAD, events_u=("ALICE recently got a new job.",))
    memory = update_with_rules(
        memory,
        [_item("ALICE recently got a new job and finished her first week.", MemoryCategory.PERSONAL_EVENT)],
    )
    texts = [c.text for c in candidate_pool(memory, SelectionScope.FULL)]
    assert not any(t.startswith("ALICE recently got a new job. ") for t in texts)


@st.composite
def extraction_batches(draw):
    n = draw(st.integers(min_value=0, max_value=5))
    topics = ["paints", "sails", "maps", "chess", "tea"]
    items = []
    for i in range(n):
        cat = draw(
            st.sampled_from(
                [MemoryCategory.PERSONA, MemoryCategory.PERSONAL_EVENT, MemoryCategory.MUTUAL_EVENT, MemoryCategory.SHARED_MEMORY]
            )
        )
        owner = draw(st.sampled_from(["ALICE", "BOB"]))
        topic = draw(st.sampled_from(topics))
        if cat in (MemoryCategory.MUTUAL_EVENT, MemoryCategory.SHARED_MEMORY):
            text = f"ALICE and BOB {topic} together {i}."
            items.append(MemoryItem("", MemoryKind(cat), text))
        else:
            text = f"{owner} {topic} {i}."
            items.append(MemoryItem("", MemoryKind(cat, owner), text))
    return items


@given(st.lists(extraction_batches(), min_size=1, max_size=4))
@settings(max_examples=50, deadline=None)
def test_randomized_update_invariants(batches):
    memory = empty_memory(DYAD)
    versions = [memory.version]
    for batch in batches:
        memory = update_with_rules(memory, batch)
        versions.append(memory.version)
        # promotion totality
        assert all(
            it.kind.category is not MemoryCategory.MUTUAL_EVENT
            for it in memory.all_items()
        )
        # supersession chains are acyclic and end in an active item
        for item in memory.all_items():
            seen = set()
            cur = item
            while cur.status == "superseded":
                assert cur.item_id not in seen
                seen.add(cur.item_id)
                cur = memory.get(cur.superseded_by)
            assert cur.active
    assert versions == sorted(set(versions))  # strictly increasing


def test_resolve_updates_catches_intra_batch_duplicates():
    memory = empty_memory(DYAD)
    item = _item("ALICE collects maps.")
    resolved = resolve_updates(memory, [item, item])
    assert resolved[0].action is UpdateAction.ACCUMULATE
    assert resolved[1].action is UpdateAction.DEDUPLICATE


def test_compress_all_strategy():
    calls = []

    def chat(prompt):
        calls.append(prompt)
        return "They fixed the boat and argued about money."

    out = compress_all_strategy(["A: hi\nB: hey", "A: again\nB: sure"], chat)
    assert out == "They fixed the boat and argued about money."
    assert len(calls) == 1
    assert "Session 1" in calls[0] and "Session 2" in calls[0]

    with pytest.raises(ValueError):
        compress_all_strategy([], chat)


def test_recursive_summary_strategy_call_count():
    calls = []

    def chat(prompt):
        calls.append(prompt)
        return f"summary-{len(calls)}"

    summary = ""
    for transcript in ("s1", "s2", "s3"):
        summary = recursive_summary_strategy(summary, transcript, chat)
    assert len(calls) == 3
    assert summary == "summary-3"
    assert "summary-2" in calls[2]  # previous summary folded in
