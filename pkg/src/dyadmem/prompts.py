"""Prompt rendering and wire-format parsing.

Every format contract lives here: the extraction output separated by
``***``, numbered fact lists, per-utterance label blocks, selection output
separated by ``###``, the updated-memory section, and judge score lines.
Parsers tolerate prose around the structured payload because chat models
add preambles; each one either returns a value or raises its declared
error, nothing else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .memory import (
    EVERYDAY_LANGUAGE,
    MemoryCategory,
    MemoryItem,
    MemoryKind,
    MemorySet,
    ResolvedUpdate,
    UpdateRules,
    DEFAULT_RULES,
    resolve_against,
    _normalized,
    _tokens,
)

PROMPT_VERSION = "1"


class MissingSlot(KeyError):
    """A required template slot was left unbound."""


class MalformedExtraction(ValueError):
    """Extraction output did not contain exactly six category segments."""


class NoFactsFound(ValueError):
    """No numbered fact lines present."""


class LabelCountMismatch(ValueError):
    """Label block count differs from the dialogue's utterance count."""


class NoUpdatedMemorySection(ValueError):
    """Updater output lacks an 'Updated memory:' section."""


class UnparsableScore(ValueError):
    """Judge output carries no integer score in range."""


TEMPLATE_IDS = (
    "extraction",
    "extraction_training_variant",
    "persona_parse",
    "labeling",
    "selection",
    "generate_with_memory",
    "generate_without_memory",
    "memory_update",
    "judge_coherence",
    "judge_engagingness",
    "judge_closeness",
    "judge_reflectiveness",
    "judge_consistency_episode",
    "judge_reflectiveness_episode",
    "judge_engagingness_episode",
)

_SLOT_RE = re.compile(r"\{([a-z0-9_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_slots: frozenset[str]

    def render(self, slots: dict[str, str]) -> str:
        missing = self.required_slots - slots.keys()
        if missing:
            raise MissingSlot(
                f"{self.template_id}: missing slots {sorted(missing)}"
            )

        def sub(match: re.Match[str]) -> str:
            name = match.group(1)
            return str(slots[name]) if name in self.required_slots else match.group(0)

        return _SLOT_RE.sub(sub, self.body)


def _load_templates() -> dict[str, PromptTemplate]:
    templates = {}
    pkg = resources.files(__package__) / "prompt_assets"
    for template_id in TEMPLATE_IDS:
        body = (pkg / f"{template_id}.txt").read_text(encoding="utf-8")
        slots = frozenset(_SLOT_RE.findall(body))
        templates[template_id] = PromptTemplate(template_id, body, slots)
    return templates


TEMPLATES = _load_templates()


def render_prompt(template_id: str, slots: dict[str, str]) -> str:
    if template_id not in TEMPLATES:
        raise KeyError(f"unknown template {template_id!r}")
    return TEMPLATES[template_id].render(slots)


# Extraction output ----------------------------------------------------------

_CATEGORY_PREFIX_RE = re.compile(
    r"^\s*(?:persona|temporal|shared\s+memory|mutual\s+event)\s*:\s*",
    re.IGNORECASE,
)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class ExtractionResult:
    """Six category lists in prompt order; 'None' segments parse to empty."""

    persona_u: tuple[str, ...] = ()
    persona_v: tuple[str, ...] = ()
    temporal_u: tuple[str, ...] = ()
    temporal_v: tuple[str, ...] = ()
    shared: tuple[str, ...] = ()
    mutual: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not any(
            (self.persona_u, self.persona_v, self.temporal_u, self.temporal_v,
             self.shared, self.mutual)
        )

    def to_items(self, memory: MemorySet) -> list[MemoryItem]:
        """Materialize sentences as memory items for the dyad (u, v order)."""
        dyad = memory.dyad
        buckets = (
            (self.persona_u, MemoryKind(MemoryCategory.PERSONA, dyad.u)),
            (self.persona_v, MemoryKind(MemoryCategory.PERSONA, dyad.v)),
            (self.temporal_u, MemoryKind(MemoryCategory.PERSONAL_EVENT, dyad.u)),
            (self.temporal_v, MemoryKind(MemoryCategory.PERSONAL_EVENT, dyad.v)),
            (self.shared, MemoryKind(MemoryCategory.SHARED_MEMORY)),
            (self.mutual, MemoryKind(MemoryCategory.MUTUAL_EVENT)),
        )
        return [
            MemoryItem("", kind, text)
            for texts, kind in buckets
            for text in texts
        ]


def _split_sentences(segment: str) -> tuple[str, ...]:
    parts = [p.strip() for p in _SENTENCE_SPLIT_RE.split(segment.strip())]
    return tuple(p for p in parts if p)


def parse_extraction_output(text: str) -> ExtractionResult:
    """Parse the six ``***``-separated categories of an extraction reply."""
    payload = text
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        payload = text[start + 1 : end]

    raw_parts = payload.split("***")
    parts = [p for p in (part.strip() for part in raw_parts) if p not in ("", "[", "]")]
    if len(parts) != 6:
        raise MalformedExtraction(
            f"expected 6 category segments, found {len(parts)}"
        )

    cleaned: list[tuple[str, ...]] = []
    for part in parts:
        body = _CATEGORY_PREFIX_RE.sub("", part).strip().strip("'\"")
        if body.rstrip(".").strip().lower() == "none" or not body:
            cleaned.append(())
        else:
            cleaned.append(_split_sentences(body))
    return ExtractionResult(*cleaned)


def emit_extraction_output(result: ExtractionResult) -> str:
    """Inverse of the parser, used to build well-formed synthetic outputs."""
    prefixes = ("Persona", "Persona", "Temporal", "Temporal", "Shared Memory", "Mutual Event")
    fields = (
        result.persona_u,
        result.persona_v,
        result.temporal_u,
        result.temporal_v,
        result.shared,
        result.mutual,
    )
    segments = [
        f"{prefix}: {' '.join(texts) if texts else 'None'}"
        for prefix, texts in zip(prefixes, fields)
    ]
    return "[***" + "***".join(segments) + "***]"


# Numbered fact lists --------------------------------------------------------

_NUMBERED_RE = re.compile(r"^\s*\d+[.)]\s*(\S.*?)\s*$")


def parse_numbered_facts(text: str) -> list[str]:
    facts = [m.group(1) for line in text.splitlines() if (m := _NUMBERED_RE.match(line))]
    if not facts:
        raise NoFactsFound("no numbered fact lines present")
    return facts


# Utterance labels -----------------------------------------------------------

_LABEL_CATEGORY_RE = re.compile(r"\(([^()]*)\)\s*$")
_LABEL_SPLIT_RE = re.compile(r",\s*(?![^()]*\))")
_LABELS_LINE_RE = re.compile(r"^\s*[*✱\-]*\s*Labels\s*:\s*(.*)$", re.IGNORECASE)
_UTTERANCE_LINE_RE = re.compile(r"^\s*-\s+\S")


@dataclass(frozen=True)
class LabelAssignment:
    utterance_index: int
    labels: tuple[tuple[str, str], ...]  # (memory text, category); sentinel allowed

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("an utterance needs at least one label")


def _category_token(raw: str) -> str:
    lowered = raw.lower()
    if "shared" in lowered:
        return "shared_memory"
    if "mutual" in lowered:
        return "mutual_event"
    if "temporal" in lowered or "event" in lowered:
        return "temporal"
    if "persona" in lowered:
        return "persona"
    return "everyday"


def parse_utterance_labels(
    text: str,
    dialogue: Sequence[object],
    attributes: Sequence[str] | None = None,
) -> tuple[list[LabelAssignment], list[str]]:
    """Pair each dialogue block with its Labels line.

    Returns assignments plus warning records for labels that could not be
    matched back to a provided attribute (those fall back to the everyday
    sentinel).
    """
    expected = len(dialogue)
    blocks: list[str] = []
    saw_utterance = False
    for line in text.splitlines():
        m = _LABELS_LINE_RE.match(line)
        if m and saw_utterance:
            blocks.append(m.group(1).strip())
            saw_utterance = False
        elif _UTTERANCE_LINE_RE.match(line):
            saw_utterance = True

    if len(blocks) != expected:
        raise LabelCountMismatch(
            f"{len(blocks)} label blocks for {expected} utterances"
        )

    norm_attrs = (
        [(attr, _normalized(attr)) for attr in attributes] if attributes else None
    )
    warnings: list[str] = []
    assignments: list[LabelAssignment] = []
    for index, block in enumerate(blocks):
        labels: list[tuple[str, str]] = []
        for fragment in _LABEL_SPLIT_RE.split(block):
            fragment = fragment.strip()
            if not fragment:
                continue
            cat_match = _LABEL_CATEGORY_RE.search(fragment)
            body = _LABEL_CATEGORY_RE.sub("", fragment).strip()
            if _normalized(fragment) == _normalized(EVERYDAY_LANGUAGE) or not body:
                labels.append((EVERYDAY_LANGUAGE, "everyday"))
                continue
            category = _category_token(cat_match.group(1)) if cat_match else "everyday"
            if norm_attrs is not None:
                norm_body = _normalized(body)
                matched = next(
                    (
                        attr
                        for attr, norm in norm_attrs
                        if norm and (norm in norm_body or norm_body in norm)
                    ),
                    None,
                )
                if matched is None:
                    warnings.append(f"utterance {index}: unmatched label {body!r}")
                    labels.append((EVERYDAY_LANGUAGE, "everyday"))
                    continue
                body = matched
            labels.append((body, category))
        if not labels:
            labels = [(EVERYDAY_LANGUAGE, "everyday")]
        assignments.append(LabelAssignment(index, tuple(labels)))
    return assignments, warnings


# Selection output -----------------------------------------------------------

SELECTION_OVERLAP_THRESHOLD = 0.8


def _token_overlap(a: str, b: str) -> float:
    """Overlap coefficient: |a ∩ b| / min(|a|, |b|).

    Tolerant in both directions: a fragment that echoes a candidate without
    its kind annotation, and an echo wrapped in extra words, both score 1.
    """
    ta, tb = set(_tokens(a)), set(_tokens(b))
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / min(len(ta), len(tb))


def parse_selection_output(text: str, candidates: Sequence[str]) -> list[str]:
    """Resolve ``###``-separated fragments back onto the candidate pool.

    Total by construction: anything that fails to resolve is dropped, and an
    empty resolution falls back to the everyday sentinel.
    """
    fragments = [f.strip() for f in text.split("###") if f.strip()]
    selected: list[str] = []
    for fragment in fragments:
        best: str | None = None
        best_score = 0.0
        for candidate in candidates:
            if _normalized(fragment) == _normalized(candidate):
                best, best_score = candidate, 1.0
                break
            score = _token_overlap(fragment, candidate)
            if score > best_score:
                best, best_score = candidate, score
        if best is not None and best_score >= SELECTION_OVERLAP_THRESHOLD:
            if best not in selected:
                selected.append(best)
    if not selected:
        return [EVERYDAY_LANGUAGE]
    return selected


# Updated memory -------------------------------------------------------------

_UPDATED_SECTION_RE = re.compile(r"updated\s+memory\s*:\s*", re.IGNORECASE)
_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_LEADING_WORD_RE = re.compile(r"[A-Za-z][\w'-]*")


def _known_names(previous: MemorySet) -> set[str]:
    names = {previous.dyad.u.lower(), previous.dyad.v.lower()}
    for item in previous.all_items():
        lead = _LEADING_WORD_RE.match(item.text.strip())
        if lead:
            names.add(lead.group(0).lower())
    return names


def _infer_kind(sentence: str, targets: Sequence[MemoryItem], previous: MemorySet) -> MemoryKind:
    if targets:
        kind = targets[0].kind
        if kind.category is MemoryCategory.MUTUAL_EVENT:
            return MemoryKind(MemoryCategory.SHARED_MEMORY)
        return kind
    if re.match(r"^\s*\S+\s+and\s+\S+", sentence, re.IGNORECASE):
        return MemoryKind(MemoryCategory.SHARED_MEMORY)
    lead = _LEADING_WORD_RE.match(sentence.strip())
    owner = None
    if lead:
        word = lead.group(0).lower()
        for member in previous.dyad.members():
            if member.lower() == word:
                owner = member
    if owner is None:
        owner = previous.dyad.u
    return MemoryKind(MemoryCategory.PERSONA, owner)


def parse_updated_memory(
    text: str,
    previous: MemorySet,
    rules: UpdateRules = DEFAULT_RULES,
) -> tuple[list[ResolvedUpdate], list[str]]:
    """Diff the 'Updated memory:' section against the previous snapshot.

    Sentences must start with a participant's name; offenders are rejected
    with per-line diagnostics instead of aborting the whole update. Actions
    come from the deterministic relation classifier, diffing across all
    collections because the updater's output is a flat list.
    """
    match = _UPDATED_SECTION_RE.search(text)
    if match is None:
        raise NoUpdatedMemorySection("output lacks an 'Updated memory:' section")
    section = text[match.end() :]

    names = _known_names(previous)
    rejected: list[str] = []
    updates: list[ResolvedUpdate] = []
    for raw_line in section.splitlines():
        line = _BULLET_RE.sub("", raw_line).strip()
        if not line:
            continue
        lead = _LEADING_WORD_RE.match(line)
        if lead is None or lead.group(0).lower() not in names:
            rejected.append(f"{line!r}: does not start with a participant's name")
            continue
        probe = MemoryItem("", MemoryKind(MemoryCategory.SHARED_MEMORY), line)
        resolved = resolve_against(previous, probe, rules, same_collection_only=False)
        targets = [previous.get(pid) for pid in resolved.previous_ids]
        kind = _infer_kind(line, targets, previous)
        updates.append(
            ResolvedUpdate(
                MemoryItem("", kind, line), resolved.action, resolved.previous_ids
            )
        )
    return updates, rejected


# Judge scores ---------------------------------------------------------------

_SCORE_RE = re.compile(r"score\s*[:\-]?\s*\[?\s*(\d+(?:\.\d+)?)\s*\]?", re.IGNORECASE)


def parse_judge_score(text: str) -> int:
    """First 'Score: N' occurrence as an integer in [0, 3]."""
    match = _SCORE_RE.search(text)
    if match is None:
        raise UnparsableScore(f"no score found in {text[:80]!r}")
    raw = match.group(1)
    if "." in raw:
        raise UnparsableScore(f"fractional score {raw!r} rejected")
    value = int(raw)
    if not 0 <= value <= 3:
        raise UnparsableScore(f"score {value} outside [0, 3]")
    return value
