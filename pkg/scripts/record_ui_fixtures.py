#!/usr/bin/env python3
"""Record API fixtures for the web UI test suite.

Drives the real HTTP service (mock backend, in-process) through the chat,
close-session, and memory-diff flows and captures every response verbatim
into frontend/tests/fixtures.json. The seeded memory and extraction reply
are arranged so one commit exercises all four update actions.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from fastapi.testclient import TestClient

from dyadmem.backend import BackendFailure, MockBackend, MockRule
from dyadmem.engine import Engine
from dyadmem.memory import seed_memory
from dyadmem.screenplay import Dyad
from dyadmem.service import create_app
from dyadmem.store import Store

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "frontend" / "tests" / "fixtures.json"

# Against the seeded memory below: one accumulate, one sequential connect,
# one conflicting update, one exact duplicate.
EXTRACTION_REPLY = (
    "[***Persona: ALICE dislikes math."
    "***Persona: BOB is looking forward to traveling again."
    "***Temporal: ALICE recently got a new job and finished her first week."
    "***Temporal: None"
    "***Shared Memory: ALICE and BOB met at the harbor."
    "***Mutual Event: None***]"
)


def seeded_memory():
    return seed_memory(
        Dyad.of("ALICE", "BOB"),
        persona_u=("ALICE likes spicy food.",),
        persona_v=("BOB did not enjoy his recent trip.",),
        events_u=("ALICE recently got a new job.",),
        shared=("ALICE and BOB met at the harbor.",),
    )


def pick_harbor(req):
    return next(line for line in req.text().splitlines() if "harbor" in line)


def main() -> None:
    fixtures: dict[str, dict] = {}
    gate = threading.Event()

    def gated_extract(req):
        gate.wait(10)
        return EXTRACTION_REPLY

    backends = {
        "extractor": MockBackend([MockRule(respond=gated_extract, template_id="extraction")]),
        "selector": MockBackend([MockRule(respond=pick_harbor, template_id="selection")]),
        "generator": MockBackend(
            [MockRule(respond="The harbor, of course. Where else?", template_id="generate_with_memory")]
        ),
        "updater": MockBackend(),
        "judge": MockBackend(),
    }
    engine = Engine(backends, Store(ROOT / "frontend" / ".fixture_store"))
    client = TestClient(create_app(engine))

    def record(name: str, response) -> dict:
        fixtures[name] = {
            "status": response.status_code,
            "body": response.json(),
            "headers": {
                k: v for k, v in response.headers.items() if k.lower() == "x-snapshot-version"
            },
        }
        return fixtures[name]["body"]

    # episode + session + chatting
    engine_state = engine.open_episode("demo", Dyad.of("ALICE", "BOB"), seeded_memory())
    fixtures["openEpisode"] = {
        "status": 201,
        "body": {
            "episode_id": "demo",
            "dyad": ["ALICE", "BOB"],
            "snapshot_version": engine_state.memory.version,
        },
        "headers": {},
    }
    session = record("openSession", client.post("/episodes/demo/sessions"))
    sid = session["session_id"]
    record(
        "message",
        client.post(
            f"/sessions/{sid}/messages",
            json={"speaker": "ALICE", "text": "Remember the harbor?"},
        ),
    )

    # close -> pending poll (extractor gated) -> committed poll
    close_body = record("close", client.post(f"/sessions/{sid}/close"))
    record("jobPending", client.get(f"/jobs/{close_body['job_id']}"))
    gate.set()
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        response = client.get(f"/jobs/{close_body['job_id']}")
        if response.status_code == 200:
            record("jobCommitted", response)
            break
        time.sleep(0.01)

    record("memoryV0", client.get("/episodes/demo/memory", params={"version": 0}))
    record("memoryV1", client.get("/episodes/demo/memory", params={"version": 1}))
    record("diffAll", client.get("/episodes/demo/memory/diff", params={"v1": 0, "v2": 1}))
    record("diffEmpty", client.get("/episodes/demo/memory/diff", params={"v1": 1, "v2": 1}))

    # degraded reply: selector that always fails
    def explode(req):
        raise BackendFailure("selector offline")

    engine.backends["selector"] = MockBackend([MockRule(respond=explode)])
    sid2 = client.post("/episodes/demo/sessions").json()["session_id"]
    record(
        "messageDegraded",
        client.post(
            f"/sessions/{sid2}/messages",
            json={"speaker": "BOB", "text": "Anything new?"},
        ),
    )

    # failed update job: broken extraction output
    engine.backends["extractor"] = MockBackend(
        [MockRule(respond="*** broken ***", template_id="extraction")]
    )
    engine.open_episode("demo2", Dyad.of("ALICE", "BOB"))
    sid3 = client.post("/episodes/demo2/sessions").json()["session_id"]
    client.post(f"/sessions/{sid3}/messages", json={"speaker": "ALICE", "text": "hi"})
    failed_close = client.post(f"/sessions/{sid3}/close").json()
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        response = client.get(f"/jobs/{failed_close['job_id']}")
        if response.status_code == 200:
            record("jobFailed", response)
            break
        time.sleep(0.01)
    record("memoryAfterFailure", client.get("/episodes/demo2/memory"))

    # error shapes
    record(
        "error404",
        client.post("/sessions/missing/messages", json={"speaker": "A", "text": "x"}),
    )
    record("error409", client.post(f"/sessions/{sid}/close"))

    engine.shutdown()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixtures, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    actions = sorted({e["action_name"] for e in fixtures["diffAll"]["body"]["entries"]})
    print(f"wrote {OUT} ({len(fixtures)} fixtures); diff actions: {actions}")
    assert actions == ["accumulate", "connect_sequential", "deduplicate", "update_conflicting"], actions


if __name__ == "__main__":
    main()
