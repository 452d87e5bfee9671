"""Shared fixtures: mock engines, synthetic episodes, corpus generators."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from dyadmem.backend import MockBackend, MockRule
from dyadmem.engine import Engine
from dyadmem.prompts import ExtractionResult
from dyadmem.screenplay import Dyad, Episode, Session, Utterance
from dyadmem.store import Store

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
MINI_CORPUS = FIXTURES / "mini_corpus.jsonl"

EXTRACTION_REPLY = (
    "[***Persona: ALICE enjoys long walks.***Persona: BOB is fond of chess."
    "***Temporal: ALICE has a deadline tomorrow.***Temporal: None"
    "***Shared Memory: None"
    "***Mutual Event: ALICE and BOB argued about the plan.***]"
)


def make_episode(
    n_sessions: int = 6,
    utterances_per_session: int = 4,
    movie_id: str = "mov",
    speakers: tuple[str, str] = ("ALICE", "BOB"),
) -> Episode:
    dyad = Dyad.of(*speakers)
    sessions = []
    for i in range(n_sessions):
        utts = tuple(
            Utterance(
                speakers[j % 2],
                f"Session {i + 1} line {j + 1} about topic{i}.",
                j,
            )
            for j in range(utterances_per_session)
        )
        sessions.append(Session(f"{movie_id}:s{i}", dyad, utts, (movie_id, i)))
    return Episode(f"{movie_id}--alice--bob", dyad, tuple(sessions), movie_id)


def default_mock_rules() -> list[MockRule]:
    return [
        MockRule(respond=EXTRACTION_REPLY, template_id="extraction"),
        MockRule(
            respond=lambda req: "Right, let's keep at it.",
            template_id="generate_with_memory",
        ),
        MockRule(
            respond=lambda req: "Sure, tell me more.",
            template_id="generate_without_memory",
        ),
        MockRule(respond="Score: 2", pattern=r"Score\s*:"),
    ]


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "store")


@pytest.fixture
def mock_backends():
    return {
        role: MockBackend(default_mock_rules())
        for role in ("extractor", "selector", "generator", "updater", "judge")
    }


@pytest.fixture
def engine(store, mock_backends) -> Engine:
    eng = Engine(mock_backends, store)
    yield eng
    eng.shutdown(wait=True)


@pytest.fixture
def episode() -> Episode:
    return make_episode()


def random_extraction(rng: random.Random) -> ExtractionResult:
    """Well-formed synthetic extraction payload for round-trip tests."""
    words = ("maple", "harbor", "violin", "garden", "sketch", "comet", "ember", "lantern")

    def sentence(owner: str) -> str:
        body = " ".join(rng.choice(words) for _ in range(rng.randint(2, 5)))
        return f"{owner} mentioned {body}."

    def bucket(owner: str) -> tuple[str, ...]:
        return tuple(sentence(owner) for _ in range(rng.randint(0, 3)))

    return ExtractionResult(
        persona_u=bucket("Ada"),
        persona_v=bucket("Ben"),
        temporal_u=bucket("Ada"),
        temporal_v=bucket("Ben"),
        shared=tuple(
            f"Ada and Ben shared {rng.choice(words)} {i}." for i in range(rng.randint(0, 2))
        ),
        mutual=tuple(
            f"Ada and Ben are doing {rng.choice(words)} {i}." for i in range(rng.randint(0, 2))
        ),
    )


def fuzz_script(rng: random.Random) -> str:
    """Random screenplay-ish text: headings, cues, dialogue, action, noise.

    Two layout modes mirror corpus reality: fully flat text, and indented
    text where cues sit deeper than action/dialogue.
    """
    names = ["ALICE", "BOB", "CARL", "DANA", "EVE"]
    lines: list[str] = []
    indent_cues = rng.random() < 0.5
    if indent_cues:
        cue_pad = " " * rng.randint(10, 20)
        dia_pad = " " * rng.randint(2, 6)
    else:
        cue_pad = dia_pad = ""
    for _ in range(rng.randint(1, 6)):
        place = rng.choice(["LAB", "PARK", "DINER", "SHIP"])
        lines.append(f"INT. {place} - DAY")
        lines.append("")
        if rng.random() < 0.4:
            lines.append("the room hums with evening light.")
        n_speakers = rng.randint(1, 3)
        speakers = rng.sample(names, n_speakers)
        for turn in range(rng.randint(0, 6)):
            who = speakers[turn % len(speakers)]
            qualifier = rng.choice(["", " (CONT'D)", " (V.O.)"])
            lines.append(f"{cue_pad}{who}{qualifier}")
            if rng.random() < 0.2:
                lines.append(f"{cue_pad}(beat)")
            for _ in range(rng.randint(1, 2)):
                lines.append(
                    f"{dia_pad}Well, line {turn} {rng.choice(['ok', 'fine', 'no'])}."
                )
            if rng.random() < 0.5:
                lines.append("")
        if rng.random() < 0.3:
            lines.append("CUT TO:")
        lines.append("")
    return "\n".join(lines)
