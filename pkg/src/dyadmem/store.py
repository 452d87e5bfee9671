"""Line-delimited JSON persistence.

Layout under one root:

    corpus/{split}.jsonl        one episode per line
    snapshots/{episode_id}.jsonl  memory snapshots, versions contiguous from 0
    runs/{run_id}/manifest.json
    runs/{run_id}/transcripts.jsonl
    cache/completions.jsonl     fingerprint -> response text, immutable

Every record carries a schema_version; readers reject unknown major
versions. A truncated trailing line (crash mid-append) is skipped on load
so recovery always lands on the last complete record.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .memory import MemoryCategory, MemoryItem, MemoryKind, MemorySet
from .screenplay import Dyad, Episode, EpisodeAnnotations, Session, Utterance, UtteranceLabel

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


class SchemaVersionMismatch(ValueError):
    pass


class VersionConflict(ValueError):
    """Snapshot commit out of contiguous order."""


def _check_schema(record: Mapping) -> None:
    version = str(record.get("schema_version", ""))
    if not version:
        raise SchemaVersionMismatch("record lacks schema_version")
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise SchemaVersionMismatch(f"unsupported schema_version {version}")


def _read_jsonl(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    records: list[dict] = []
    for lineno, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            # A torn trailing line means a crash mid-append; keep what is
            # complete, refuse corruption anywhere else.
            if lineno == len(lines) - 1:
                log.warning("%s: dropping torn trailing line %d", path, lineno + 1)
                break
            raise
    return records


def _append_jsonl(path: Path, record: Mapping, durable: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        if durable:
            fh.flush()
            os.fsync(fh.fileno())


def _repair_trailing(path: Path) -> None:
    """Drop a torn trailing line (crash mid-append) before appending again."""
    if not path.exists():
        return
    data = path.read_text(encoding="utf-8")
    if not data:
        return
    body, sep, tail = data.rpartition("\n")
    if not tail:
        return  # file ends cleanly with a newline
    try:
        json.loads(tail)
    except json.JSONDecodeError:
        log.warning("%s: truncating torn trailing line", path)
        path.write_text(body + sep, encoding="utf-8")
    else:
        path.write_text(data + "\n", encoding="utf-8")


# Episode (de)serialization ---------------------------------------------------


def _utterance_to_dict(u: Utterance) -> dict:
    out: dict = {"speaker": u.speaker, "text": u.text, "index": u.index}
    if u.labels:
        out["labels"] = [{"text": l.text, "category": l.category} for l in u.labels]
    return out


def _utterance_from_dict(d: Mapping) -> Utterance:
    labels = tuple(
        UtteranceLabel(l["text"], l["category"]) for l in d.get("labels", ())
    )
    return Utterance(d["speaker"], d["text"], int(d["index"]), labels)


def episode_to_dict(episode: Episode, annotations: EpisodeAnnotations | None = None) -> dict:
    record = {
        "schema_version": SCHEMA_VERSION,
        "episode_id": episode.episode_id,
        "movie_id": episode.movie_id,
        "dyad": list(episode.dyad.members()),
        "sessions": [
            {
                "session_id": s.session_id,
                "scene_ref": list(s.scene_ref),
                "utterances": [_utterance_to_dict(u) for u in s.utterances],
            }
            for s in episode.sessions
        ],
    }
    if annotations is not None:
        record["annotations"] = {
            "persona": list(annotations.persona),
            "personal_event": list(annotations.personal_event),
            "mutual_event": list(annotations.mutual_event),
            "shared_memory": list(annotations.shared_memory),
        }
    return record


def episode_from_dict(record: Mapping) -> tuple[Episode, EpisodeAnnotations | None]:
    _check_schema(record)
    dyad = Dyad.of(*record["dyad"])
    sessions = tuple(
        Session(
            session_id=s["session_id"],
            dyad=dyad,
            utterances=tuple(_utterance_from_dict(u) for u in s["utterances"]),
            scene_ref=(s["scene_ref"][0], int(s["scene_ref"][1])),
        )
        for s in record["sessions"]
    )
    episode = Episode(
        episode_id=record["episode_id"],
        dyad=dyad,
        sessions=sessions,
        movie_id=record["movie_id"],
    )
    ann_rec = record.get("annotations")
    annotations = (
        EpisodeAnnotations(
            persona=tuple(ann_rec.get("persona", ())),
            personal_event=tuple(ann_rec.get("personal_event", ())),
            mutual_event=tuple(ann_rec.get("mutual_event", ())),
            shared_memory=tuple(ann_rec.get("shared_memory", ())),
        )
        if ann_rec is not None
        else None
    )
    return episode, annotations


def persist_corpus(
    episodes: Sequence[Episode],
    path: str | Path,
    annotations: Mapping[str, EpisodeAnnotations] | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    annotations = annotations or {}
    with path.open("w", encoding="utf-8") as fh:
        for episode in episodes:
            record = episode_to_dict(episode, annotations.get(episode.episode_id))
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[Episode]:
    return [episode_from_dict(rec)[0] for rec in _read_jsonl(Path(path))]


def load_corpus_with_annotations(
    path: str | Path,
) -> tuple[list[Episode], dict[str, EpisodeAnnotations]]:
    episodes: list[Episode] = []
    annotations: dict[str, EpisodeAnnotations] = {}
    for record in _read_jsonl(Path(path)):
        episode, ann = episode_from_dict(record)
        episodes.append(episode)
        if ann is not None:
            annotations[episode.episode_id] = ann
    return episodes, annotations


# Memory snapshots ------------------------------------------------------------


def _item_to_dict(item: MemoryItem) -> dict:
    return {
        "item_id": item.item_id,
        "category": item.kind.category.value,
        "owner": item.kind.owner,
        "text": item.text,
        "origin_session": item.origin_session,
        "status": item.status,
        "superseded_by": item.superseded_by,
        "needs_past_tense": item.needs_past_tense,
    }


def _item_from_dict(d: Mapping) -> MemoryItem:
    return MemoryItem(
        item_id=d["item_id"],
        kind=MemoryKind(MemoryCategory(d["category"]), d.get("owner")),
        text=d["text"],
        origin_session=d.get("origin_session", "seed"),
        status=d.get("status", "active"),
        superseded_by=d.get("superseded_by"),
        needs_past_tense=bool(d.get("needs_past_tense", False)),
    )


def memoryset_to_dict(memory: MemorySet) -> dict:
    return {
        "dyad": list(memory.dyad.members()),
        "version": memory.version,
        "item_seq": memory.item_seq,
        "collections": {
            name: [_item_to_dict(i) for i in items]
            for name, items in memory.collections().items()
        },
    }


def memoryset_from_dict(d: Mapping) -> MemorySet:
    colls = {
        name: tuple(_item_from_dict(i) for i in d["collections"].get(name, ()))
        for name in ("persona_u", "persona_v", "events_u", "events_v", "shared")
    }
    return MemorySet(
        dyad=Dyad.of(*d["dyad"]),
        version=int(d["version"]),
        item_seq=int(d.get("item_seq", 0)),
        **colls,
    )


@dataclass(frozen=True)
class SnapshotRecord:
    episode_id: str
    version: int
    memory: MemorySet
    provenance: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    config_digest: str
    split_seed: int | None
    backends: Mapping[str, Mapping]
    strategy: str
    protocol: str
    started_at: float
    finished_at: float | None = None
    artifacts: Mapping[str, str] = field(default_factory=dict)


def config_digest(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Store:
    """Filesystem-backed persistence rooted at one directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, str] | None = None

    # -- corpus --

    def corpus_path(self, split: str) -> Path:
        return self.root / "corpus" / f"{split}.jsonl"

    def persist_split(
        self,
        split: str,
        episodes: Sequence[Episode],
        annotations: Mapping[str, EpisodeAnnotations] | None = None,
    ) -> Path:
        path = self.corpus_path(split)
        persist_corpus(episodes, path, annotations)
        return path

    def load_split(self, split: str) -> list[Episode]:
        return load_corpus(self.corpus_path(split))

    # -- snapshots --

    def snapshot_path(self, episode_id: str) -> Path:
        return self.root / "snapshots" / f"{episode_id}.jsonl"

    def _snapshot_records(self, episode_id: str) -> list[dict]:
        path = self.snapshot_path(episode_id)
        if not path.exists():
            return []
        return list(_read_jsonl(path))

    def latest_version(self, episode_id: str) -> int | None:
        records = self._snapshot_records(episode_id)
        return int(records[-1]["version"]) if records else None

    def commit_snapshot(self, record: SnapshotRecord) -> None:
        _repair_trailing(self.snapshot_path(record.episode_id))
        latest = self.latest_version(record.episode_id)
        expected = 0 if latest is None else latest + 1
        if record.version != expected:
            raise VersionConflict(
                f"{record.episode_id}: commit v{record.version}, expected v{expected}"
            )
        _append_jsonl(
            self.snapshot_path(record.episode_id),
            {
                "schema_version": SCHEMA_VERSION,
                "episode_id": record.episode_id,
                "version": record.version,
                "memory": memoryset_to_dict(record.memory),
                "provenance": dict(record.provenance),
            },
            durable=True,
        )

    def load_snapshot(self, episode_id: str, version: int | str = "latest") -> SnapshotRecord:
        records = self._snapshot_records(episode_id)
        if not records:
            raise KeyError(f"no snapshots for {episode_id}")
        if version == "latest":
            chosen = records[-1]
        else:
            matches = [r for r in records if int(r["version"]) == int(version)]
            if not matches:
                raise KeyError(f"{episode_id} has no snapshot v{version}")
            chosen = matches[0]
        _check_schema(chosen)
        return SnapshotRecord(
            episode_id=chosen["episode_id"],
            version=int(chosen["version"]),
            memory=memoryset_from_dict(chosen["memory"]),
            provenance=chosen.get("provenance", {}),
        )

    def snapshot_provenance(self, episode_id: str) -> list[dict]:
        return [
            {"version": int(r["version"]), **r.get("provenance", {})}
            for r in self._snapshot_records(episode_id)
        ]

    def reset_snapshots(self, episode_id: str) -> None:
        path = self.snapshot_path(episode_id)
        if path.exists():
            path.unlink()

    # -- completion cache --

    def cache_path(self) -> Path:
        return self.root / "cache" / "completions.jsonl"

    def _load_cache(self) -> dict[str, str]:
        if self._cache is None:
            self._cache = {}
            path = self.cache_path()
            if path.exists():
                for record in _read_jsonl(path):
                    self._cache[record["fingerprint"]] = record["text"]
        return self._cache

    def cache_lookup(self, fingerprint: str) -> str | None:
        return self._load_cache().get(fingerprint)

    def cache_put(self, fingerprint: str, text: str) -> bool:
        cache = self._load_cache()
        if fingerprint in cache:
            if cache[fingerprint] != text:
                log.warning(
                    "cache entry %s is immutable; rejecting divergent rewrite",
                    fingerprint[:12],
                )
                return False
            return True
        cache[fingerprint] = text
        _append_jsonl(
            self.cache_path(),
            {"schema_version": SCHEMA_VERSION, "fingerprint": fingerprint, "text": text},
        )
        return True

    # adapter matching the CachedBackend protocol
    def lookup(self, fingerprint: str) -> str | None:
        return self.cache_lookup(fingerprint)

    def put(self, fingerprint: str, text: str) -> bool:
        return self.cache_put(fingerprint, text)

    # -- runs --

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def write_manifest(self, manifest: RunManifest) -> Path:
        run_dir = self.run_dir(manifest.run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / "manifest.json"
        record = {"schema_version": SCHEMA_VERSION, **asdict(manifest)}
        path.write_text(json.dumps(record, indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    def read_manifest(self, run_id: str) -> dict:
        record = json.loads((self.run_dir(run_id) / "manifest.json").read_text("utf-8"))
        _check_schema(record)
        return record

    def append_transcript(self, run_id: str, record: Mapping) -> None:
        _append_jsonl(
            self.run_dir(run_id) / "transcripts.jsonl",
            {"schema_version": SCHEMA_VERSION, **record},
        )

    def read_transcripts(self, run_id: str) -> list[dict]:
        path = self.run_dir(run_id) / "transcripts.jsonl"
        if not path.exists():
            return []
        return list(_read_jsonl(path))


def new_run_manifest(
    config: Mapping,
    strategy: str,
    protocol: str,
    split_seed: int | None = None,
    backends: Mapping[str, object] | None = None,
) -> RunManifest:
    digest = config_digest(config)
    return RunManifest(
        run_id=f"run-{int(time.time())}-{digest[:8]}",
        config_digest=digest,
        split_seed=split_seed,
        backends={
            role: cfg.redacted() if hasattr(cfg, "redacted") else dict(cfg)
            for role, cfg in (backends or {}).items()
        },
        strategy=strategy,
        protocol=protocol,
        started_at=time.time(),
    )
