"""Dyadic memory sets and their update semantics.

A memory set holds five collections: one persona and one event list per
speaker, plus the memories the pair shares. Mutual events extracted from a
live session never persist as-is; they are promoted into shared memory when
an update commits.

Updates resolve each incoming sentence against existing items into one of
four actions: accumulate it, connect it to a sequentially related item,
replace a conflicting item, or drop it as a duplicate. A deterministic
rule classifier implements that resolution so every property is testable
without a model; the backend-mediated updater reuses it to diff model
output against the previous snapshot.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Callable, Iterable, Sequence

from .screenplay import Dyad

EVERYDAY_LANGUAGE = "Everyday Language"


class UnknownItemReference(KeyError):
    """An update action targeted an item id absent from the snapshot."""


class MemoryCategory(str, Enum):
    PERSONA = "persona"
    PERSONAL_EVENT = "personal_event"
    MUTUAL_EVENT = "mutual_event"
    SHARED_MEMORY = "shared_memory"


@dataclass(frozen=True)
class MemoryKind:
    """Category plus owner; owner is set iff the category is per-speaker."""

    category: MemoryCategory
    owner: str | None = None

    def __post_init__(self) -> None:
        per_speaker = self.category in (
            MemoryCategory.PERSONA,
            MemoryCategory.PERSONAL_EVENT,
        )
        if per_speaker and not self.owner:
            raise ValueError(f"{self.category.value} requires an owner")
        if not per_speaker and self.owner is not None:
            raise ValueError(f"{self.category.value} must not carry an owner")

    def tag(self) -> str:
        """Human-readable annotation used in candidate pools and cues."""
        if self.category is MemoryCategory.PERSONA:
            return f"{self.owner}'s persona"
        if self.category is MemoryCategory.PERSONAL_EVENT:
            return f"{self.owner}'s temporal information"
        if self.category is MemoryCategory.SHARED_MEMORY:
            return "Shared memories"
        return "Mutual event"


class UpdateAction(IntEnum):
    ACCUMULATE = 1
    CONNECT_SEQUENTIAL = 2
    UPDATE_CONFLICTING = 3
    DEDUPLICATE = 4


class SelectionScope(str, Enum):
    FULL = "full"
    INDIVIDUAL_ONLY = "individual_only"
    NO_SHARED = "no_shared"


@dataclass(frozen=True)
class MemoryItem:
    item_id: str
    kind: MemoryKind
    text: str
    origin_session: int | str = "seed"
    status: str = "active"  # active | superseded
    superseded_by: str | None = None
    needs_past_tense: bool = False

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("memory text must be nonempty")

    @property
    def active(self) -> bool:
        return self.status == "active"


@dataclass(frozen=True)
class MemorySet:
    """Immutable snapshot of the five collections for one dyad."""

    dyad: Dyad
    persona_u: tuple[MemoryItem, ...] = ()
    persona_v: tuple[MemoryItem, ...] = ()
    events_u: tuple[MemoryItem, ...] = ()
    events_v: tuple[MemoryItem, ...] = ()
    shared: tuple[MemoryItem, ...] = ()
    version: int = 0
    item_seq: int = 0

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for item in self.all_items():
            if item.item_id in seen:
                raise ValueError(f"duplicate item id {item.item_id}")
            seen.add(item.item_id)
            if item.kind.category is MemoryCategory.MUTUAL_EVENT:
                raise ValueError("mutual events must be promoted before commit")

    def collections(self) -> dict[str, tuple[MemoryItem, ...]]:
        return {
            "persona_u": self.persona_u,
            "persona_v": self.persona_v,
            "events_u": self.events_u,
            "events_v": self.events_v,
            "shared": self.shared,
        }

    def all_items(self) -> Iterable[MemoryItem]:
        for coll in (
            self.persona_u,
            self.persona_v,
            self.events_u,
            self.events_v,
            self.shared,
        ):
            yield from coll

    def active_items(self) -> list[MemoryItem]:
        return [it for it in self.all_items() if it.active]

    def get(self, item_id: str) -> MemoryItem:
        for item in self.all_items():
            if item.item_id == item_id:
                return item
        raise UnknownItemReference(item_id)

    def collection_for(self, kind: MemoryKind) -> str:
        if kind.category in (MemoryCategory.SHARED_MEMORY, MemoryCategory.MUTUAL_EVENT):
            return "shared"
        side = "u" if kind.owner == self.dyad.u else "v"
        if kind.owner not in self.dyad.members():
            raise ValueError(f"owner {kind.owner!r} not in dyad")
        return ("persona_" if kind.category is MemoryCategory.PERSONA else "events_") + side


@dataclass(frozen=True)
class ResolvedUpdate:
    """One incoming sentence with its action and the items it touches."""

    item: MemoryItem
    action: UpdateAction
    previous_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class UpdateRules:
    """Fixed constants for the deterministic relation classifier."""

    dedup_overlap: float = 0.9
    absorb_containment: float = 0.8
    restatement_min_shared: int = 2
    negation_markers: tuple[str, ...] = ("not", "never", "none", "cannot")
    transition_markers: tuple[str, ...] = ("no longer", "but now", "anymore", "any more")
    progression_markers: tuple[str, ...] = (
        "completed",
        "finished",
        "since",
        "successfully",
        "started",
        "began",
        "later",
        "went on",
        "achieved",
        "graduated",
        "has now",
        "have now",
        "then",
    )


DEFAULT_RULES = UpdateRules()

_STOPWORDS = frozenset(
    """a an the is are was were be been being has have had do does did
    he she it they his her its their him them i you we me us my your our
    and or but to of in on at for with from by as that this these those
    so too also would will shall should could can may might must very
    about into over under again there here when where who whom what which
    why how all any both each own same s t just don now said says""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower().replace("’", "'"))


def _content(tokens: Sequence[str]) -> set[str]:
    return {t for t in tokens if t not in _STOPWORDS}


def _normalized(text: str) -> str:
    return " ".join(_tokens(text))


_DYADIC_RE = re.compile(r"^\s*([A-Z][\w.'-]*)\s+and\s+([A-Z][\w.'-]*)\b", re.IGNORECASE)


def _subject(text: str) -> str | None:
    tokens = _tokens(text)
    return tokens[0] if tokens else None


def _is_dyadic(text: str) -> bool:
    return bool(_DYADIC_RE.match(text.strip()))


def _has_negation(text: str, rules: UpdateRules) -> bool:
    lowered = " ".join(_tokens(text))
    if any(re.search(rf"\b{re.escape(m)}\b", lowered) for m in rules.negation_markers):
        return True
    return "n't" in text.lower()


def _has_transition(text: str, rules: UpdateRules) -> bool:
    lowered = " ".join(_tokens(text))
    return any(m in lowered for m in rules.transition_markers)


def _has_progression(text: str, rules: UpdateRules) -> bool:
    lowered = " ".join(_tokens(text))
    return any(
        re.search(rf"\b{re.escape(m)}\b", lowered) for m in rules.progression_markers
    )


def _text_of(item: MemoryItem | str) -> str:
    return item.text if isinstance(item, MemoryItem) else item


def classify_update_relation(
    previous: MemoryItem | str,
    extracted: MemoryItem | str,
    rules: UpdateRules = DEFAULT_RULES,
) -> UpdateAction:
    """Deterministic relation between an existing and an incoming sentence.

    Order of tests:

    1. identical text, or near-total token overlap -> deduplicate;
    2. shared subject with an explicit transition marker or an asymmetric
       negation -> conflicting update;
    3. a dyadic subject ("X and Y ...") marks a mutual event -> accumulate;
    4. shared single subject whose previous content is absorbed by the new
       sentence, or whose new sentence carries a progression marker plus a
       common topic word -> sequential connection;
    5. shared single subject restating enough of the same content words ->
       deduplicate;
    6. anything else -> accumulate.
    """
    prev_text = _text_of(previous)
    new_text = _text_of(extracted)

    if _normalized(prev_text) == _normalized(new_text):
        return UpdateAction.DEDUPLICATE

    prev_content = _content(_tokens(prev_text))
    new_content = _content(_tokens(new_text))
    union = prev_content | new_content
    overlap = len(prev_content & new_content) / len(union) if union else 1.0
    if overlap >= rules.dedup_overlap:
        return UpdateAction.DEDUPLICATE

    subj_prev, subj_new = _subject(prev_text), _subject(new_text)
    same_subject = subj_prev is not None and subj_prev == subj_new

    if same_subject and (
        _has_transition(new_text, rules)
        or _has_negation(prev_text, rules) != _has_negation(new_text, rules)
    ):
        return UpdateAction.UPDATE_CONFLICTING

    if _is_dyadic(new_text):
        return UpdateAction.ACCUMULATE

    if same_subject:
        shared = (prev_content & new_content) - {subj_prev}
        containment = (
            len(prev_content & new_content) / len(prev_content) if prev_content else 0.0
        )
        if containment >= rules.absorb_containment:
            return UpdateAction.CONNECT_SEQUENTIAL
        if shared and _has_progression(new_text, rules):
            return UpdateAction.CONNECT_SEQUENTIAL
        if len(shared) >= rules.restatement_min_shared:
            return UpdateAction.DEDUPLICATE

    return UpdateAction.ACCUMULATE


def resolve_against(
    previous: MemorySet,
    item: MemoryItem,
    rules: UpdateRules = DEFAULT_RULES,
    same_collection_only: bool = True,
) -> ResolvedUpdate:
    """Diff one incoming item against the snapshot's active items.

    A duplicate relation wins outright; otherwise every item the sentence
    supersedes (sequential or conflicting) is collected, conflict taking
    precedence for the label. Unrelated sentences accumulate.
    """
    if same_collection_only:
        coll = previous.collection_for(item.kind)
        candidates = [it for it in previous.collections()[coll] if it.active]
    else:
        candidates = previous.active_items()

    superseded: list[str] = []
    saw_conflict = False
    for existing in candidates:
        action = classify_update_relation(existing, item, rules)
        if action is UpdateAction.DEDUPLICATE:
            return ResolvedUpdate(item, UpdateAction.DEDUPLICATE, (existing.item_id,))
        if action is UpdateAction.CONNECT_SEQUENTIAL:
            superseded.append(existing.item_id)
        elif action is UpdateAction.UPDATE_CONFLICTING:
            superseded.append(existing.item_id)
            saw_conflict = True

    if superseded:
        label = (
            UpdateAction.UPDATE_CONFLICTING if saw_conflict else UpdateAction.CONNECT_SEQUENTIAL
        )
        return ResolvedUpdate(item, label, tuple(superseded))
    return ResolvedUpdate(item, UpdateAction.ACCUMULATE)


def apply_update(previous: MemorySet, parsed_update: Sequence[ResolvedUpdate]) -> MemorySet:
    """Commit resolved updates onto a snapshot, returning the next version.

    Accumulate appends; sequential/conflicting supersede their targets and
    insert the new sentence; deduplicate is a no-op. Mutual events land in
    shared memory carrying the past-tense flag. The version advances exactly
    once per commit, even for an empty update.
    """
    colls = {name: list(items) for name, items in previous.collections().items()}
    index: dict[str, tuple[str, int]] = {
        item.item_id: (name, i)
        for name, items in colls.items()
        for i, item in enumerate(items)
    }
    seq = previous.item_seq

    def promote(item: MemoryItem) -> MemoryItem:
        if item.kind.category is MemoryCategory.MUTUAL_EVENT:
            return replace(
                item,
                kind=MemoryKind(MemoryCategory.SHARED_MEMORY),
                needs_past_tense=True,
            )
        return item

    for update in parsed_update:
        if update.action is UpdateAction.DEDUPLICATE:
            continue
        new_item = promote(update.item)
        if not new_item.item_id:
            seq += 1
            new_item = replace(new_item, item_id=f"i{seq:05d}")
        target_coll = previous.collection_for(new_item.kind)
        if update.action in (
            UpdateAction.CONNECT_SEQUENTIAL,
            UpdateAction.UPDATE_CONFLICTING,
        ):
            if not update.previous_ids:
                raise UnknownItemReference("supersession requires previous ids")
            for prev_id in update.previous_ids:
                if prev_id not in index:
                    raise UnknownItemReference(prev_id)
                name, i = index[prev_id]
                colls[name][i] = replace(
                    colls[name][i], status="superseded", superseded_by=new_item.item_id
                )
        colls[target_coll].append(new_item)
        index[new_item.item_id] = (target_coll, len(colls[target_coll]) - 1)

    return MemorySet(
        dyad=previous.dyad,
        persona_u=tuple(colls["persona_u"]),
        persona_v=tuple(colls["persona_v"]),
        events_u=tuple(colls["events_u"]),
        events_v=tuple(colls["events_v"]),
        shared=tuple(colls["shared"]),
        version=previous.version + 1,
        item_seq=seq,
    )


@dataclass(frozen=True)
class Candidate:
    """A selection-pool entry: rendered text plus its backing item, if any."""

    text: str
    item: MemoryItem | None = None

    @property
    def is_sentinel(self) -> bool:
        return self.item is None


def candidate_pool(
    memory: MemorySet,
    scope: SelectionScope = SelectionScope.FULL,
    responder: str | None = None,
) -> list[Candidate]:
    """Active in-scope items rendered with kind annotations, plus the sentinel.

    The pool is returned in stable collection order; shuffling is the
    caller's job. ``responder`` is required for the individual-only scope.
    """
    if scope is SelectionScope.INDIVIDUAL_ONLY and not responder:
        raise ValueError("individual_only scope needs the responding speaker")

    pool: list[Candidate] = []
    for item in memory.all_items():
        if not item.active:
            continue
        cat = item.kind.category
        if scope is SelectionScope.NO_SHARED and cat is MemoryCategory.SHARED_MEMORY:
            continue
        if scope is SelectionScope.INDIVIDUAL_ONLY and item.kind.owner != responder:
            continue
        pool.append(Candidate(f"{item.text} ({item.kind.tag()})", item))
    pool.append(Candidate(EVERYDAY_LANGUAGE))
    return pool


# Update strategies ----------------------------------------------------------

ChatFn = Callable[[str], str]


def resolve_updates(
    previous: MemorySet,
    extracted: Sequence[MemoryItem],
    rules: UpdateRules = DEFAULT_RULES,
) -> list[ResolvedUpdate]:
    """Resolve a batch against the snapshot, each item seeing earlier ones.

    Incremental resolution makes duplicates inside one extraction collapse
    the same way duplicates across extractions do.
    """
    resolved: list[ResolvedUpdate] = []
    working = previous
    for item in extracted:
        record = resolve_against(working, item, rules)
        resolved.append(record)
        working = apply_update(working, [record])
    return resolved


def update_with_rules(
    previous: MemorySet,
    extracted: Sequence[MemoryItem],
    rules: UpdateRules = DEFAULT_RULES,
) -> MemorySet:
    """Resolve and commit extracted items with the deterministic classifier."""
    return apply_update(previous, resolve_updates(previous, extracted, rules))


def accumulate_strategy(previous: MemorySet, extracted: Sequence[MemoryItem]) -> MemorySet:
    """Append everything; never supersede, never deduplicate."""
    resolved = [ResolvedUpdate(item, UpdateAction.ACCUMULATE) for item in extracted]
    return apply_update(previous, resolved)


_COMPRESS_PROMPT = (
    "Condense the following conversation sessions between two people into a "
    "single concise memory record covering who they are, what happened between "
    "them, and what they went through together. Write declarative sentences.\n\n"
    "{transcripts}\n\nMemory record:"
)

_RSUM_PROMPT = (
    "Here is the running summary of everything two people have discussed so "
    "far, followed by their latest conversation session. Fold the new session "
    "into the summary and return the updated summary only.\n\n"
    "Summary so far:\n{summary}\n\nLatest session:\n{session}\n\nUpdated summary:"
)


def compress_all_strategy(session_transcripts: Sequence[str], chat: ChatFn) -> str:
    """Replace the structured memory set with one model-written record."""
    if not session_transcripts:
        raise ValueError("compress_all needs at least one completed session")
    joined = "\n\n".join(
        f"Session {i + 1}:\n{t}" for i, t in enumerate(session_transcripts)
    )
    return chat(_COMPRESS_PROMPT.format(transcripts=joined))


def recursive_summary_strategy(
    previous_summary: str, session_transcript: str, chat: ChatFn
) -> str:
    """Fold one finished session into the running summary."""
    return chat(
        _RSUM_PROMPT.format(summary=previous_summary or "(empty)", session=session_transcript)
    )


def empty_memory(dyad: Dyad) -> MemorySet:
    return MemorySet(dyad=dyad)


def seed_memory(dyad: Dyad, **collections: Sequence[str]) -> MemorySet:
    """Convenience constructor from plain sentences, used by tests and the CLI."""
    kinds = {
        "persona_u": MemoryKind(MemoryCategory.PERSONA, dyad.u),
        "persona_v": MemoryKind(MemoryCategory.PERSONA, dyad.v),
        "events_u": MemoryKind(MemoryCategory.PERSONAL_EVENT, dyad.u),
        "events_v": MemoryKind(MemoryCategory.PERSONAL_EVENT, dyad.v),
        "shared": MemoryKind(MemoryCategory.SHARED_MEMORY),
    }
    seq = 0
    built: dict[str, tuple[MemoryItem, ...]] = {}
    for name, kind in kinds.items():
        items = []
        for text in collections.get(name, ()):  # type: ignore[call-overload]
            seq += 1
            items.append(MemoryItem(f"i{seq:05d}", kind, text))
        built[name] = tuple(items)
    return MemorySet(dyad=dyad, item_seq=seq, **built)
