"""CLI subcommands and exit-code contract."""

from __future__ import annotations

import json
from pathlib import Path

from click.testing import CliRunner

from dyadmem.cli import EXIT_CONFIG, EXIT_DATA, main

from conftest import MINI_CORPUS

DEMO_SCRIPT = """INT. KITCHEN - DAY

Morning light, dishes stacked.

            ALICE
    You came back.

            BOB
    I always come back.

INT. PIER - NIGHT

            ALICE
    The boat again?

            BOB
    The boat, always.

INT. GARDEN - DAY

            ALICE
    Third time this week.

            BOB
    Somebody has to water it.
"""


def test_parse_command(tmp_path):
    script = tmp_path / "demo.txt"
    script.write_text(DEMO_SCRIPT, encoding="utf-8")
    result = CliRunner().invoke(main, ["parse", str(script)])
    assert result.exit_code == 0, result.output
    assert "3 dyadic sessions" in result.output


def test_build_split_stats_pipeline(tmp_path):
    scripts_dir = tmp_path / "scripts"
    scripts_dir.mkdir()
    (scripts_dir / "demo.txt").write_text(DEMO_SCRIPT, encoding="utf-8")
    out = tmp_path / "corpus.jsonl"
    runner = CliRunner()

    built = runner.invoke(main, ["build", str(scripts_dir), "--out", str(out)])
    assert built.exit_code == 0, built.output
    assert "wrote 1 episodes" in built.output

    stats = runner.invoke(main, ["stats", str(out)])
    assert stats.exit_code == 0, stats.output
    assert "episodes:" in stats.output

    split = runner.invoke(
        main, ["split", str(MINI_CORPUS), "--seed", "3", "--out-dir", str(tmp_path / "splits")]
    )
    assert split.exit_code == 0, split.output
    assert (tmp_path / "splits" / "train.jsonl").exists()


def test_simulate_and_evaluate(tmp_path):
    config = {"store_root": str(tmp_path / "store")}
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    runner = CliRunner()

    sim = runner.invoke(
        main,
        [
            "simulate",
            str(MINI_CORPUS),
            "--limit",
            "1",
            "--config",
            str(config_path),
        ],
    )
    assert sim.exit_code == 0, sim.output
    assert "commits [1, 2, 3, 4]" in sim.output
    run_id = next(
        line.split()[1] for line in sim.output.splitlines() if line.startswith("run ")
    )

    ev = runner.invoke(
        main,
        [
            "evaluate",
            run_id,
            "--reference-corpus",
            str(MINI_CORPUS),
            "--config",
            str(config_path),
        ],
    )
    assert ev.exit_code == 0, ev.output
    summary = json.loads(ev.output[ev.output.index("{") : ev.output.rindex("}") + 1])
    assert summary["n"] > 0


def test_extract_with_mock_backend(tmp_path):
    reply = (
        "[***Persona: GUS keeps bees.***Persona: None***Temporal: None***Temporal: None"
        "***Shared Memory: GUS and HANA built a hive.***Mutual Event: None***]"
    )
    config = {
        "backend": {"kind": "mock", "rules": [{"respond": reply, "contains": "categorize"}]}
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    out = tmp_path / "annotated.jsonl"
    result = CliRunner().invoke(
        main,
        ["extract", str(MINI_CORPUS), "--out", str(out), "--config", str(config_path)],
    )
    assert result.exit_code == 0, result.output
    first = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert first["annotations"]["persona"]


def test_extract_full_annotation_pipeline(tmp_path):
    """Extraction + persona parsing + utterance labeling over one episode."""
    from dyadmem.store import persist_corpus
    from conftest import make_episode

    corpus = tmp_path / "one.jsonl"
    persist_corpus([make_episode(3, 4)], corpus)

    extraction = (
        "[***Persona: ALICE paints tiny boats and naps at noon."
        "***Persona: BOB fences.***Temporal: None***Temporal: None"
        "***Shared Memory: ALICE and BOB met at the harbor.***Mutual Event: None***]"
    )
    persona_facts = "1. ALICE paints tiny boats.\n2. ALICE naps at noon."
    labeling = "\n".join(
        [
            '- ALICE: "line"',
            "* Labels: ALICE paints tiny boats (ALICE's persona)",
            '- BOB: "line"',
            "* Labels: Everyday Language",
            '- ALICE: "line"',
            "* Labels: ALICE and BOB met at the harbor (Shared memories)",
            '- BOB: "line"',
            "* Labels: BOB fences (BOB's persona)",
        ]
    )
    config = {
        "backend": {
            "kind": "mock",
            "rules": [
                {"respond": extraction, "contains": "categorize the dialogue"},
                {"respond": persona_facts, "contains": "core factual components"},
                {"respond": labeling, "contains": "Labeling Task"},
            ],
        }
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    out = tmp_path / "annotated.jsonl"
    result = CliRunner().invoke(
        main,
        [
            "extract",
            str(corpus),
            "--out",
            str(out),
            "--parse-personas",
            "--label",
            "--config",
            str(config_path),
        ],
    )
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    # persona sentences were split into atomic facts
    assert "ALICE paints tiny boats." in record["annotations"]["persona"]
    assert "ALICE naps at noon." in record["annotations"]["persona"]
    # utterances carry labels, matched back to the extracted attributes
    first_utt = record["sessions"][0]["utterances"][0]
    assert first_utt["labels"][0]["text"] == "ALICE paints tiny boats."
    assert first_utt["labels"][0]["category"] == "persona"
    second_utt = record["sessions"][0]["utterances"][1]
    assert second_utt["labels"][0]["text"] == "Everyday Language"
    third_utt = record["sessions"][0]["utterances"][2]
    assert third_utt["labels"][0]["category"] == "shared_memory"


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    result = CliRunner().invoke(main, ["stats", str(MINI_CORPUS), "--config", str(bad)])
    assert result.exit_code == EXIT_CONFIG


def test_data_error_exit_code(tmp_path):
    result = CliRunner().invoke(main, ["stats", str(tmp_path / "missing.jsonl")])
    assert result.exit_code == EXIT_DATA
    empty_dir = tmp_path / "empty"
    empty_dir.mkdir()
    result = CliRunner().invoke(main, ["build", str(empty_dir)])
    assert result.exit_code == EXIT_DATA
