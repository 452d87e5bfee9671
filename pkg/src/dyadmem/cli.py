"""Command-line interface.

Subcommands: parse, build, stats, split, extract, simulate, evaluate,
serve, chat. Every command takes a JSON config file plus flag overrides;
the config digest is recorded in run manifests.

Exit codes: 0 success, 2 config error, 3 backend failure, 4 data error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backend import (
    Backend,
    BackendConfig,
    BackendFailure,
    HttpBackend,
    MockBackend,
    MockRule,
)
from .engine import Engine, ProtocolConfig, select_eval_episodes
from .evalkit import MetricReport, judge_metric
from .memory import SelectionScope
from .prompts import MalformedExtraction, parse_extraction_output, render_prompt
from .screenplay import (
    EmptyCorpus,
    EpisodeAnnotations,
    RawScript,
    UnparsableScript,
    build_episodes,
    corpus_stats,
    extract_dyad_sessions,
    parse_screenplay,
    split_corpus,
)
from .store import (
    SchemaVersionMismatch,
    Store,
    config_digest,
    load_corpus,
    load_corpus_with_annotations,
    new_run_manifest,
    persist_corpus,
)

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4

_DATA_ERRORS = (
    UnparsableScript,
    EmptyCorpus,
    SchemaVersionMismatch,
    MalformedExtraction,
    FileNotFoundError,
    json.JSONDecodeError,
)


class ConfigError(ValueError):
    pass


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except BackendFailure as exc:
            click.echo(f"backend failure: {exc}", err=True)
            sys.exit(EXIT_BACKEND)
        except _DATA_ERRORS as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def build_backend(cfg: dict) -> Backend:
    kind = cfg.get("kind", "mock")
    if kind == "mock":
        rules = [
            MockRule(
                respond=r["respond"],
                template_id=r.get("template_id"),
                contains=r.get("contains"),
                pattern=r.get("pattern"),
            )
            for r in cfg.get("rules", [])
        ]
        return MockBackend(rules)
    if kind == "http":
        fields = {k: v for k, v in cfg.items() if k != "kind"}
        try:
            return HttpBackend(BackendConfig(**fields))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad backend config: {exc}") from exc
    raise ConfigError(f"unknown backend kind {kind!r}")


def build_backends(config: dict) -> dict[str, Backend]:
    base = config.get("backend", {"kind": "mock"})
    overrides = config.get("backends", {})
    backends = {}
    for role in ("extractor", "selector", "generator", "updater", "judge"):
        backends[role] = build_backend(overrides.get(role, base))
    return backends


def build_engine(config: dict) -> Engine:
    store = Store(config.get("store_root", "dyadmem_store"))
    return Engine(build_backends(config), store)


def protocol_config(config: dict, **overrides) -> ProtocolConfig:
    raw = dict(config.get("protocol", {}))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "scope" in raw and not isinstance(raw["scope"], SelectionScope):
        raw["scope"] = SelectionScope(raw["scope"])
    try:
        return ProtocolConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad protocol config: {exc}") from exc


def _read_script(path: Path, movie_id: str | None = None) -> RawScript:
    meta_path = path.with_suffix(".meta.json")
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return RawScript(
        movie_id=movie_id or meta.get("movie_id", path.stem),
        title=meta.get("title", path.stem),
        genres=tuple(meta.get("genres", ())),
        text=path.read_text(encoding="utf-8"),
    )


@click.group()
def main() -> None:
    """Long-term dyadic dialogue engine."""


@main.command()
@click.argument("script", type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def parse(script: Path, config_path: str | None) -> None:
    """Parse one screenplay and report its scenes and dyadic sessions."""
    load_config(config_path)
    raw = _read_script(script)
    scenes = parse_screenplay(raw)
    sessions = extract_dyad_sessions(scenes)
    click.echo(f"{raw.movie_id}: {len(scenes)} scenes, {len(sessions)} dyadic sessions")
    for session in sessions:
        click.echo(
            f"  {session.session_id}  {session.dyad.u} / {session.dyad.v}"
            f"  ({len(session.utterances)} utterances)"
        )


@main.command()
@click.argument("scripts_dir", type=click.Path(path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("corpus.jsonl"))
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def build(scripts_dir: Path, out: Path, config_path: str | None) -> None:
    """Build an episode corpus from a directory of script files."""
    load_config(config_path)
    sessions = []
    files = sorted(scripts_dir.glob("*.txt"))
    if not files:
        raise EmptyCorpus(f"no .txt scripts in {scripts_dir}")
    for path in files:
        raw = _read_script(path)
        try:
            sessions.extend(extract_dyad_sessions(parse_screenplay(raw)))
        except UnparsableScript as exc:
            click.echo(f"skipping {path.name}: {exc}", err=True)
    episodes = build_episodes(sessions)
    persist_corpus(episodes, out)
    click.echo(f"wrote {len(episodes)} episodes to {out}")


@main.command()
@click.argument("corpus", type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def stats(corpus: Path, config_path: str | None) -> None:
    """Print corpus statistics."""
    load_config(config_path)
    episodes, annotations = load_corpus_with_annotations(corpus)
    report = corpus_stats(episodes, annotations)
    click.echo(f"episodes:                     {report.n_episodes}")
    click.echo(f"sessions:                     {report.n_sessions}")
    click.echo(f"utterances:                   {report.n_utterances}")
    click.echo(f"avg sessions / episode:       {report.avg_sessions_per_episode:.2f}")
    click.echo(f"avg utterances / session:     {report.avg_utterances_per_session:.2f}")
    click.echo(f"persona annotations:          {report.n_persona}")
    click.echo(f"personal events:              {report.n_personal_event}")
    click.echo(f"mutual events:                {report.n_mutual_event}")
    click.echo(f"shared memories:              {report.n_shared_memory}")
    click.echo(
        f"episodes w/ shared memory:    {report.pct_episodes_with_shared_memory:.2f}%"
    )


@main.command()
@click.argument("corpus", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0)
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("corpus"))
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def split(corpus: Path, seed: int, out_dir: Path, config_path: str | None) -> None:
    """Split a corpus 8:1:1 into train/valid/test files."""
    load_config(config_path)
    episodes = load_corpus(corpus)
    train, valid, test = split_corpus(episodes, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        persist_corpus(part, out_dir / f"{name}.jsonl")
        click.echo(f"{name}: {len(part)} episodes")


@main.command()
@click.argument("corpus", type=click.Path(path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("annotated.jsonl"))
@click.option(
    "--parse-personas/--no-parse-personas",
    default=False,
    help="Break extracted persona sentences into numbered atomic facts.",
)
@click.option(
    "--label/--no-label",
    "label_utterances",
    default=False,
    help="Map each utterance back to the memory items it reveals.",
)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def extract(
    corpus: Path,
    out: Path,
    parse_personas: bool,
    label_utterances: bool,
    config_path: str | None,
) -> None:
    """Annotate a corpus: extraction, optional persona parsing and labeling."""
    import dataclasses

    from .backend import user_request
    from .engine import render_dialogue_text
    from .prompts import NoFactsFound, parse_numbered_facts, parse_utterance_labels
    from .screenplay import UtteranceLabel

    config = load_config(config_path)
    backends = build_backends(config)
    episodes = load_corpus(corpus)

    def complete(role: str, template_id: str, slots: dict) -> str:
        prompt = render_prompt(template_id, slots)
        request = user_request(prompt, max_tokens=500, tags={"template_id": template_id})
        return backends[role].complete(request).text

    def split_personas(sentences: tuple[str, ...]) -> list[str]:
        if not parse_personas:
            return list(sentences)
        facts: list[str] = []
        for sentence in sentences:
            try:
                facts.extend(
                    parse_numbered_facts(
                        complete("extractor", "persona_parse", {"sentence": sentence})
                    )
                )
            except NoFactsFound:
                facts.append(sentence)
        return facts

    annotated: list = []
    annotations: dict[str, EpisodeAnnotations] = {}
    n_labeled = 0
    for episode in episodes:
        persona: list[str] = []
        events: list[str] = []
        mutual: list[str] = []
        shared: list[str] = []
        sessions = []
        for session in episode.sessions:
            dialogues_text = render_dialogue_text(session.utterances)
            try:
                result = parse_extraction_output(
                    complete(
                        "extractor",
                        "extraction",
                        {
                            "movie_name": episode.movie_id,
                            "speaker1": episode.dyad.u,
                            "speaker2": episode.dyad.v,
                            "dialogues_text": dialogues_text,
                        },
                    )
                )
            except MalformedExtraction:
                sessions.append(session)
                continue
            session_persona = split_personas(result.persona_u + result.persona_v)
            session_events = list(result.temporal_u + result.temporal_v)
            persona.extend(session_persona)
            events.extend(session_events)
            shared.extend(result.shared)
            mutual.extend(result.mutual)

            if label_utterances:
                attrs = session_persona + session_events + list(result.shared) + list(result.mutual)
                attr_text = "\n".join(f"- {a}" for a in attrs) or "(none)"
                reply = complete(
                    "extractor",
                    "labeling",
                    {"dialogues_text": dialogues_text, "attr_text": attr_text},
                )
                try:
                    assignments, warnings = parse_utterance_labels(
                        reply, session.utterances, attributes=attrs
                    )
                except Exception as exc:  # labeling is best-effort per session
                    click.echo(f"labeling skipped for {session.session_id}: {exc}", err=True)
                    sessions.append(session)
                    continue
                for warning in warnings:
                    click.echo(f"{session.session_id}: {warning}", err=True)
                labeled = tuple(
                    dataclasses.replace(
                        utterance,
                        labels=tuple(
                            UtteranceLabel(text, category)
                            for text, category in assignments[i].labels
                        ),
                    )
                    for i, utterance in enumerate(session.utterances)
                )
                session = dataclasses.replace(session, utterances=labeled)
                n_labeled += len(labeled)
            sessions.append(session)
        annotated.append(dataclasses.replace(episode, sessions=tuple(sessions)))
        annotations[episode.episode_id] = EpisodeAnnotations(
            persona=tuple(persona),
            personal_event=tuple(events),
            mutual_event=tuple(mutual),
            shared_memory=tuple(shared),
        )
    persist_corpus(annotated, out, annotations)
    suffix = f", {n_labeled} utterances labeled" if label_utterances else ""
    click.echo(f"annotated {len(annotated)} episodes -> {out}{suffix}")


@main.command()
@click.argument("corpus", type=click.Path(path_type=Path))
@click.option("--protocol", "protocol_name", type=click.Choice(["multisession", "episode"]), default="multisession")
@click.option("--strategy", type=click.Choice(["episode_update", "accumulate", "compress_all", "recursive_summary"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--limit", type=int, default=None, help="Max episodes to simulate.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def simulate(
    corpus: Path,
    protocol_name: str,
    strategy: str | None,
    seed: int | None,
    limit: int | None,
    config_path: str | None,
) -> None:
    """Run an evaluation protocol over eligible corpus episodes."""
    config = load_config(config_path)
    engine = build_engine(config)
    pconf = protocol_config(config, strategy=strategy, seed=seed)
    episodes = load_corpus(corpus)
    min_sessions = 6 if protocol_name == "multisession" else 5
    chosen = select_eval_episodes(episodes, min_sessions, limit)
    if not chosen:
        raise EmptyCorpus(f"no episodes with >= {min_sessions} sessions")

    manifest = new_run_manifest(
        config={"protocol": protocol_name, "config": config, "seed": pconf.seed},
        strategy=pconf.strategy,
        protocol=protocol_name,
        backends={},
    )
    engine.store.write_manifest(manifest)
    for episode in chosen:
        runner = (
            engine.run_multisession_protocol
            if protocol_name == "multisession"
            else engine.run_episode_protocol
        )
        result = runner(episode, pconf)
        for record in result.transcript_dicts():
            engine.store.append_transcript(manifest.run_id, record)
        click.echo(
            f"{episode.episode_id}: {len(result.sessions)} sessions, "
            f"commits {result.commit_versions}"
        )
    click.echo(f"run {manifest.run_id} (config digest {manifest.config_digest[:12]})")


@main.command()
@click.argument("run_id")
@click.option("--reference-corpus", type=click.Path(path_type=Path), required=True)
@click.option("--judge-metrics", multiple=True, default=())
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def evaluate(
    run_id: str,
    reference_corpus: Path,
    judge_metrics: tuple[str, ...],
    config_path: str | None,
) -> None:
    """Score a simulation run against ground-truth references."""
    config = load_config(config_path)
    store = Store(config.get("store_root", "dyadmem_store"))
    backends = build_backends(config)
    episodes = {e.episode_id: e for e in load_corpus(reference_corpus)}
    transcripts = store.read_transcripts(run_id)
    if not transcripts:
        raise FileNotFoundError(f"run {run_id} has no transcripts")

    report = MetricReport(method=run_id)
    by_session: dict[str, list[dict]] = {}
    for record in transcripts:
        by_session.setdefault(record["session_id"], []).append(record)
    responses = []
    for session_id, records in sorted(by_session.items()):
        base_episode = session_id.split("::", 1)[0]
        episode = episodes.get(base_episode)
        if episode is None:
            continue
        ordinal = int(session_id.rsplit("gen", 1)[-1])
        if ordinal > len(episode.sessions):
            continue
        reference = episode.sessions[ordinal - 1]
        generated = sorted(records, key=lambda r: r["turn_index"])
        for rec in generated[2:]:
            responses.append(rec["text"])
            ref_idx = rec["turn_index"]
            if ref_idx < len(reference.utterances):
                report.add_pair(
                    rec["text"], reference.utterances[ref_idx].text, session_id
                )
    summary = report.aggregate(responses)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    header = (
        f"{'method':<28} {'BLEU-3':>8} {'BLEU-4':>8} {'ROUGE-1':>8} {'ROUGE-2':>8} "
        f"{'ROUGE-L':>8} {'Dist-1':>7} {'Dist-2':>7}"
    )
    click.echo(header)
    click.echo("-" * len(header))
    click.echo(
        f"{summary['method'][:28]:<28} {summary['bleu_3']:>8.4f} {summary['bleu_4']:>8.4f} "
        f"{summary['rouge_1']:>8.4f} {summary['rouge_2']:>8.4f} {summary['rouge_l']:>8.4f} "
        f"{summary.get('distinct_1', 0.0):>7.4f} {summary.get('distinct_2', 0.0):>7.4f}"
    )

    for metric in judge_metrics:
        dialogue = "\n".join(r["speaker"] + ": " + r["text"] for r in transcripts[:40])
        score = judge_metric(metric, [dialogue], backends["judge"])
        click.echo(f"{metric}: mean={score.mean:.3f} reps={list(score.repetitions)}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8234)
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def serve(host: str, port: int, config_path: str | None) -> None:
    """Serve the HTTP API."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    app = create_app(build_engine(config))
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--episode-id", default="repl")
@click.option("--speaker-a", default="YOU")
@click.option("--speaker-b", default="AGENT")
@click.option("--config", "config_path", type=click.Path(), default=None)
@_guarded
def chat(episode_id: str, speaker_a: str, speaker_b: str, config_path: str | None) -> None:
    """Terminal REPL against a local engine."""
    config = load_config(config_path)
    engine = build_engine(config)
    from .screenplay import Dyad

    state = engine.open_episode(episode_id, Dyad.of(speaker_a, speaker_b))
    session = engine.open_session(episode_id)
    click.echo(f"session {session.session_id}; /close ends the session, /quit exits")
    while True:
        try:
            line = click.prompt(speaker_a, prompt_suffix="> ")
        except (EOFError, KeyboardInterrupt, click.Abort):
            break
        if line.strip() == "/quit":
            break
        if line.strip() == "/close":
            job = engine.close_session(session.session_id)
            job.wait(30)
            click.echo(f"[update {job.status}; memory v{state.memory.version}]")
            session = engine.open_session(episode_id)
            continue
        reply, cues, version, degraded = engine.post_message(
            session.session_id, speaker_a, line
        )
        suffix = " (degraded)" if degraded else ""
        click.echo(f"{reply.speaker}: {reply.text}")
        click.echo(f"  [v{version}{suffix} cues: {'; '.join(cues)}]")


if __name__ == "__main__":
    main()
