#!/usr/bin/env python3
"""Regenerate the bundled ten-episode mini corpus.

Writes fixtures/mini_corpus.jsonl by running synthetic screenplays through
the real parse -> sessions -> episodes pipeline, then attaching hand-sized
annotations. The golden statistics asserted in the acceptance suite:

    10 episodes, 40 sessions, 160 utterances
    avg 4.0 sessions/episode, 4.0 utterances/session
    20 persona, 10 personal-event, 5 mutual-event, 6 shared-memory
    60.00% of episodes carry a shared memory
"""

from __future__ import annotations

from pathlib import Path

from dyadmem.screenplay import (
    EpisodeAnnotations,
    RawScript,
    build_episodes,
    extract_dyad_sessions,
    parse_screenplay,
)
from dyadmem.store import persist_corpus

ROOT = Path(__file__).resolve().parent.parent

# (movie_id, [per-scene dyads in scene order])
LAYOUT = [
    ("m01", [("ALICE", "BOB")] * 5 + [("ALICE", "CARL")] * 3),
    ("m02", [("DANA", "ERIC")] * 4 + [("DANA", "FAY")] * 3),
    ("m03", [("GUS", "HANA")] * 6 + [("IRIS", "JACK")] * 3 + [("GUS", "JACK")] * 3),
    ("m04", [("KIM", "LEO")] * 7 + [("MAY", "NED")] * 3 + [("KIM", "NED")] * 3),
]

PLACES = ["KITCHEN", "PIER", "ROOFTOP", "TRAIN CAR", "GARDEN", "OFFICE"]
OPENERS = [
    "So this is where you have been hiding.",
    "I did not expect to find you here.",
    "You look like you have news.",
    "Tell me it went better than last time.",
]
REPLIES = [
    "It went exactly how we feared.",
    "Better than that, actually.",
    "You will want to sit down for this.",
    "Only if you promise not to laugh.",
]


def scene_text(place: str, a: str, b: str, scene_idx: int) -> str:
    # Conventional layout: action at the left margin, dialogue indented,
    # character cues deepest.
    lines = [f"INT. {place} - DAY", "", "The light does what it always does here.", ""]
    pairs = [
        (a, OPENERS[scene_idx % len(OPENERS)]),
        (b, REPLIES[scene_idx % len(REPLIES)]),
        (a, f"Scene {scene_idx + 1} keeps circling back to the harbor plan."),
        (b, f"Then we settle it tonight, scene {scene_idx + 1} or not."),
    ]
    for speaker, text in pairs:
        lines.append(f"{' ' * 12}{speaker}")
        lines.append(f"{' ' * 4}{text}")
        lines.append("")
    return "\n".join(lines)


def build() -> None:
    episodes = []
    for movie_id, dyads in LAYOUT:
        text = "\n".join(
            scene_text(PLACES[i % len(PLACES)], a, b, i)
            for i, (a, b) in enumerate(dyads)
        )
        script = RawScript(movie_id, movie_id.upper(), text)
        episodes.extend(build_episodes(extract_dyad_sessions(parse_screenplay(script))))

    episodes.sort(key=lambda e: e.episode_id)
    assert len(episodes) == 10, len(episodes)

    annotations = {}
    for i, episode in enumerate(episodes):
        u, v = episode.dyad.members()
        shared = (
            (f"{u} and {v} once spent a whole winter fixing the old boat.",)
            if i < 6
            else ()
        )
        mutual = (
            (f"{u} and {v} are hashing out the harbor plan.",) if i < 5 else ()
        )
        annotations[episode.episode_id] = EpisodeAnnotations(
            persona=(f"{u} is stubborn about plans.", f"{v} enjoys the waterfront."),
            personal_event=(f"{u} has a meeting with the council this week.",),
            mutual_event=mutual,
            shared_memory=shared,
        )

    out = ROOT / "fixtures" / "mini_corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    persist_corpus(episodes, out, annotations)
    n_sessions = sum(len(e.sessions) for e in episodes)
    n_utts = sum(len(s.utterances) for e in episodes for s in e.sessions)
    print(f"wrote {out}: {len(episodes)} episodes, {n_sessions} sessions, {n_utts} utterances")


if __name__ == "__main__":
    build()
