#!/usr/bin/env python3
"""Freeze golden renders of every prompt template.

Writes fixtures/golden_prompts/<template_id>.txt with fixed slot values;
the test suite compares current renders byte-for-byte so accidental edits
to prompt bodies are caught immediately.
"""

from __future__ import annotations

from pathlib import Path

from dyadmem.prompts import TEMPLATES, render_prompt

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "golden_prompts"

GOLDEN_SLOTS = {
    "movie_name": "Harbor Nights",
    "speaker1": "ALICE",
    "speaker2": "BOB",
    "dialogues_text": "ALICE: Remember the harbor?\nBOB: Every single day.",
    "sentence": "ALICE is a stubborn planner who loves the waterfront and naps at noon.",
    "attr_text": "- ALICE loves the waterfront (ALICE's persona)",
    "candidates": "ALICE loves the waterfront (ALICE's persona)\nEveryday Language",
    "next_speaker": "BOB",
    "dia_text": "ALICE: Remember the harbor?\n(Shared memories) ALICE and BOB met at the harbor.\nBOB:",
    "previous_memory": "- ALICE loves the waterfront.",
    "current_memory": "- ALICE bought a boat.",
    "dialogue": "ALICE: Remember the harbor?\nBOB: Every single day.",
    "shared_memory": "ALICE and BOB met at the harbor.",
    **{f"dialogue{i}": f"ALICE: session {i} line.\nBOB: session {i} reply." for i in range(1, 6)},
}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for template_id, template in sorted(TEMPLATES.items()):
        slots = {name: GOLDEN_SLOTS[name] for name in template.required_slots}
        (OUT / f"{template_id}.txt").write_text(
            render_prompt(template_id, slots), encoding="utf-8"
        )
    print(f"wrote {len(TEMPLATES)} golden renders to {OUT}")


if __name__ == "__main__":
    main()
