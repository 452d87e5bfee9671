"""Movie-script parsing and corpus assembly.

Turns raw screenplay text into scenes, scenes into two-speaker sessions,
sessions into multi-session episodes, and episodes into train/valid/test
splits with summary statistics.

All functions here are pure: they never mutate their inputs and hold no
module state, so they are safe to call from concurrent workers.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence


class UnparsableScript(ValueError):
    """Raised when a script contains no scene heading and no character cue."""


class EmptyCorpus(ValueError):
    """Raised when an operation requires at least one episode."""


class ElementKind(str, Enum):
    SCENE_HEADING = "SceneHeading"
    CHARACTER_CUE = "CharacterCue"
    DIALOGUE_LINE = "DialogueLine"
    PARENTHETICAL = "Parenthetical"
    ACTION = "Action"
    TRANSITION = "Transition"


@dataclass(frozen=True)
class RawScript:
    """One movie script as ingested, byte-exact."""

    movie_id: str
    title: str
    text: str
    genres: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.movie_id:
            raise ValueError("movie_id must be nonempty")


@dataclass(frozen=True)
class ScriptElement:
    kind: ElementKind
    text: str
    line_span: tuple[int, int]  # [start, end) in source lines


@dataclass(frozen=True)
class UtteranceLabel:
    """Annotation tying an utterance to a memory item, or the everyday sentinel."""

    text: str
    category: str  # persona | temporal | shared_memory | mutual_event | everyday


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    index: int
    labels: tuple[UtteranceLabel, ...] = ()

    def __post_init__(self) -> None:
        if not self.speaker:
            raise ValueError("speaker must be nonempty")
        if not self.text.strip():
            raise ValueError("utterance text must be nonempty")


@dataclass(frozen=True)
class Dyad:
    """Unordered speaker pair; ``u`` and ``v`` are stored in sorted order."""

    u: str
    v: str

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise ValueError("dyad needs two distinct speakers")
        if self.u > self.v:
            lo, hi = self.v, self.u
            object.__setattr__(self, "u", lo)
            object.__setattr__(self, "v", hi)

    @classmethod
    def of(cls, a: str, b: str) -> "Dyad":
        lo, hi = sorted((a, b))
        return cls(lo, hi)

    def members(self) -> tuple[str, str]:
        return (self.u, self.v)

    def other(self, name: str) -> str:
        if name == self.u:
            return self.v
        if name == self.v:
            return self.u
        raise KeyError(f"{name!r} not in dyad {self.u}/{self.v}")


@dataclass(frozen=True)
class Scene:
    movie_id: str
    index: int
    heading: str
    elements: tuple[ScriptElement, ...]

    def utterances(self) -> tuple[Utterance, ...]:
        """Dialogue grouped per cue; consecutive same-speaker blocks merge."""
        out: list[Utterance] = []
        speaker: str | None = None
        chunks: list[str] = []

        def flush() -> None:
            nonlocal chunks
            if speaker and chunks:
                text = normalize_ws(" ".join(chunks))
                if text:
                    if out and out[-1].speaker == speaker:
                        merged = f"{out[-1].text} {text}"
                        out[-1] = Utterance(speaker, merged, out[-1].index)
                    else:
                        out.append(Utterance(speaker, text, len(out)))
            chunks = []

        for el in self.elements:
            if el.kind is ElementKind.CHARACTER_CUE:
                flush()
                speaker = normalize_name(el.text) or None
            elif el.kind is ElementKind.DIALOGUE_LINE:
                chunks.append(el.text)
            elif el.kind is ElementKind.PARENTHETICAL:
                continue
            else:
                flush()
                speaker = None
        flush()
        return tuple(Utterance(u.speaker, u.text, i) for i, u in enumerate(out))

    def speakers(self) -> frozenset[str]:
        return frozenset(u.speaker for u in self.utterances())


@dataclass(frozen=True)
class Session:
    session_id: str
    dyad: Dyad
    utterances: tuple[Utterance, ...]
    scene_ref: tuple[str, int]  # (movie_id, scene index)

    def __post_init__(self) -> None:
        speakers = {u.speaker for u in self.utterances}
        if speakers != set(self.dyad.members()):
            raise ValueError("session speakers must be exactly the dyad")
        if len(self.utterances) < 2:
            raise ValueError("session needs at least 2 utterances")


@dataclass(frozen=True)
class Episode:
    episode_id: str
    dyad: Dyad
    sessions: tuple[Session, ...]
    movie_id: str

    def __post_init__(self) -> None:
        if len(self.sessions) < 3:
            raise ValueError("episode needs at least 3 sessions")
        for s in self.sessions:
            if s.dyad != self.dyad:
                raise ValueError("all sessions must share the episode dyad")


@dataclass(frozen=True)
class EpisodeAnnotations:
    """Per-episode extracted memory sentences, grouped by category."""

    persona: tuple[str, ...] = ()
    personal_event: tuple[str, ...] = ()
    mutual_event: tuple[str, ...] = ()
    shared_memory: tuple[str, ...] = ()


@dataclass(frozen=True)
class CorpusStats:
    n_episodes: int
    n_sessions: int
    n_utterances: int
    avg_sessions_per_episode: float
    avg_utterances_per_session: float
    n_persona: int
    n_personal_event: int
    n_mutual_event: int
    n_shared_memory: int
    pct_episodes_with_shared_memory: float
    genre_counts: Mapping[str, int] = field(default_factory=dict)


# Screenplay grammar ---------------------------------------------------------

HEADING_PREFIXES = ("INT.", "EXT.", "INT/EXT", "I/E")
TRANSITION_STARTS = ("CUT ", "FADE ", "DISSOLVE", "SMASH ", "WIPE ", "MATCH CUT", "JUMP CUT")
CUE_QUALIFIER_RE = re.compile(r"\s*\([^)]*\)\s*")
MAX_CUE_LEN = 40

_WS_RE = re.compile(r"\s+")
_NAME_PUNCT_RE = re.compile(r"[^\w\s]")


def normalize_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def normalize_name(raw: str) -> str:
    """Canonical speaker name: uppercased, qualifiers and punctuation stripped.

    "Mrs. Smith (CONT'D)" and "MRS SMITH" normalize to the same name so that
    dyad identity is stable across scenes.
    """
    name = CUE_QUALIFIER_RE.sub(" ", raw)
    name = _NAME_PUNCT_RE.sub("", name)
    return normalize_ws(name).upper()


def is_scene_heading(line: str) -> bool:
    stripped = line.strip().upper()
    return stripped.startswith(HEADING_PREFIXES)


def is_transition(line: str) -> bool:
    stripped = line.strip().upper()
    return stripped.endswith("TO:") or any(
        stripped.startswith(p) for p in TRANSITION_STARTS
    )


def _indent(line: str) -> int:
    return len(line) - len(line.lstrip(" "))


def _looks_like_cue(line: str) -> bool:
    stripped = CUE_QUALIFIER_RE.sub(" ", line.strip()).strip()
    if not stripped or len(stripped) > MAX_CUE_LEN:
        return False
    if not any(c.isalpha() for c in stripped):
        return False
    return stripped == stripped.upper()


def _infer_action_margin(lines: Sequence[str]) -> int | None:
    """Smallest indent over non-blank lines; None when indentation is uniform.

    Screenplay layout puts action at the left margin and character cues
    deeper.  When every line shares one indent the script carries no layout
    signal and the indent test is waived.
    """
    indents = [_indent(ln) for ln in lines if ln.strip()]
    if not indents or min(indents) == max(indents):
        return None
    return min(indents)


def parse_screenplay(script: RawScript) -> list[Scene]:
    """Split a raw script into scenes of typed elements.

    Every source line lands in exactly one element span. Dialogue attaches to
    the nearest preceding character cue; cue qualifiers such as (CONT'D),
    (V.O.) and (O.S.) are stripped during name normalization.
    """
    if not script.text.strip():
        raise UnparsableScript(f"{script.movie_id}: empty script")

    lines = script.text.splitlines()
    margin = _infer_action_margin(lines)

    kinds: list[ElementKind | None] = []  # None marks a blank line
    in_dialogue = False
    for line in lines:
        stripped = line.strip()
        if not stripped:
            kinds.append(None)
            in_dialogue = False
            continue
        if is_scene_heading(line):
            kinds.append(ElementKind.SCENE_HEADING)
            in_dialogue = False
        elif is_transition(line):
            kinds.append(ElementKind.TRANSITION)
            in_dialogue = False
        elif _looks_like_cue(line) and (margin is None or _indent(line) > margin):
            kinds.append(ElementKind.CHARACTER_CUE)
            in_dialogue = True
        elif in_dialogue and stripped.startswith("(") and stripped.endswith(")"):
            kinds.append(ElementKind.PARENTHETICAL)
        elif in_dialogue:
            kinds.append(ElementKind.DIALOGUE_LINE)
        else:
            kinds.append(ElementKind.ACTION)

    if not any(
        k in (ElementKind.SCENE_HEADING, ElementKind.CHARACTER_CUE) for k in kinds
    ):
        raise UnparsableScript(
            f"{script.movie_id}: no scene heading or character cue found"
        )

    # Group consecutive same-kind lines into elements; blank lines extend the
    # previous element span so the spans tile the file exactly.
    elements: list[ScriptElement] = []
    i = 0
    n = len(lines)
    while i < n:
        kind = kinds[i]
        if kind is None:
            j = i
            while j < n and kinds[j] is None:
                j += 1
            if elements:
                prev = elements[-1]
                elements[-1] = ScriptElement(prev.kind, prev.text, (prev.line_span[0], j))
            else:
                elements.append(ScriptElement(ElementKind.ACTION, "", (i, j)))
            i = j
            continue
        if kind in (
            ElementKind.SCENE_HEADING,
            ElementKind.CHARACTER_CUE,
            ElementKind.TRANSITION,
        ):
            elements.append(ScriptElement(kind, lines[i].strip(), (i, i + 1)))
            i += 1
            continue
        j = i
        while j < n and kinds[j] is kind:
            j += 1
        text = normalize_ws(" ".join(lines[k].strip() for k in range(i, j)))
        elements.append(ScriptElement(kind, text, (i, j)))
        i = j

    scenes: list[Scene] = []
    current: list[ScriptElement] = []
    heading = ""
    opened = False

    def close() -> None:
        nonlocal current
        if opened:
            scenes.append(
                Scene(script.movie_id, len(scenes), heading, tuple(current))
            )
        current = []

    for el in elements:
        if el.kind is ElementKind.SCENE_HEADING:
            close()
            heading = el.text
            opened = True
            current = [el]  # heading element stays in the scene for span tiling
        else:
            if not opened:
                heading = ""
                opened = True
            current.append(el)
    close()
    return scenes


def extract_dyad_sessions(scenes: Iterable[Scene]) -> list[Session]:
    """Keep scenes where exactly two characters speak, with >=2 utterances."""
    sessions: list[Session] = []
    for scene in scenes:
        utts = scene.utterances()
        speakers = {u.speaker for u in utts}
        if len(speakers) != 2 or len(utts) < 2:
            continue
        dyad = Dyad.of(*sorted(speakers))
        sessions.append(
            Session(
                session_id=f"{scene.movie_id}:s{scene.index}",
                dyad=dyad,
                utterances=utts,
                scene_ref=(scene.movie_id, scene.index),
            )
        )
    return sessions


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "x"


def make_episode_id(movie_id: str, dyad: Dyad) -> str:
    return f"{_slug(movie_id)}--{_slug(dyad.u)}--{_slug(dyad.v)}"


def build_episodes(sessions: Iterable[Session]) -> list[Episode]:
    """Group sessions by (movie, dyad) in scene order; keep groups of >=3."""
    groups: dict[tuple[str, Dyad], list[Session]] = {}
    for session in sessions:
        key = (session.scene_ref[0], session.dyad)
        groups.setdefault(key, []).append(session)
    episodes = []
    for (movie_id, dyad), group in groups.items():
        group = sorted(group, key=lambda s: s.scene_ref[1])
        if len(group) < 3:
            continue
        episodes.append(
            Episode(
                episode_id=make_episode_id(movie_id, dyad),
                dyad=dyad,
                sessions=tuple(group),
                movie_id=movie_id,
            )
        )
    episodes.sort(key=lambda e: e.episode_id)
    return episodes


def split_corpus(
    episodes: Sequence[Episode],
    ratios: tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
) -> tuple[list[Episode], list[Episode], list[Episode]]:
    """Disjoint, exhaustive, seed-deterministic split.

    Validation/test sizes are floored from the ratios with the remainder
    going to train; when >=3 episodes are available each split is topped up
    to be nonempty.
    """
    if not episodes:
        raise EmptyCorpus("no episodes to split")
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")

    ordered = sorted(episodes, key=lambda e: e.episode_id)
    rng = random.Random(seed)
    rng.shuffle(ordered)

    total = sum(ratios)
    n = len(ordered)
    n_valid = n * ratios[1] // total
    n_test = n * ratios[2] // total
    n_train = n - n_valid - n_test
    if n >= 3:
        while n_valid == 0 and n_train > 1:
            n_train -= 1
            n_valid += 1
        while n_test == 0 and n_train > 1:
            n_train -= 1
            n_test += 1

    train = ordered[:n_train]
    valid = ordered[n_train : n_train + n_valid]
    test = ordered[n_train + n_valid :]
    return train, valid, test


def corpus_stats(
    episodes: Sequence[Episode],
    annotations: Mapping[str, EpisodeAnnotations] | None = None,
    genres: Mapping[str, Sequence[str]] | None = None,
) -> CorpusStats:
    """Count episodes/sessions/utterances and annotation coverage.

    ``annotations`` maps episode_id to its extracted memory sentences; when
    absent all annotation counts are zero. ``genres`` maps movie_id to genre
    labels.
    """
    annotations = annotations or {}
    n_episodes = len(episodes)
    n_sessions = sum(len(e.sessions) for e in episodes)
    n_utterances = sum(len(s.utterances) for e in episodes for s in e.sessions)

    n_persona = n_event = n_mutual = n_shared = 0
    episodes_with_shared = 0
    for episode in episodes:
        ann = annotations.get(episode.episode_id)
        if ann is None:
            continue
        n_persona += len(ann.persona)
        n_event += len(ann.personal_event)
        n_mutual += len(ann.mutual_event)
        n_shared += len(ann.shared_memory)
        if ann.shared_memory:
            episodes_with_shared += 1

    genre_counts: Counter[str] = Counter()
    if genres:
        for movie_id in {e.movie_id for e in episodes}:
            genre_counts.update(genres.get(movie_id, ()))

    return CorpusStats(
        n_episodes=n_episodes,
        n_sessions=n_sessions,
        n_utterances=n_utterances,
        avg_sessions_per_episode=n_sessions / n_episodes if n_episodes else 0.0,
        avg_utterances_per_session=n_utterances / n_sessions if n_sessions else 0.0,
        n_persona=n_persona,
        n_personal_event=n_event,
        n_mutual_event=n_mutual,
        n_shared_memory=n_shared,
        pct_episodes_with_shared_memory=(
            100.0 * episodes_with_shared / n_episodes if n_episodes else 0.0
        ),
        genre_counts=dict(genre_counts),
    )
