// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient, DiffEntry, MemoryView } from '../src/api.js';
import { ChatView } from '../src/chat.js';
import { TimelineView } from '../src/timeline.js';
import { MockService, fixtures, undocumentedCalls } from './mock_service.js';

beforeEach(() => {
  document.body.replaceChildren();
});

describe('API contract', () => {
  it('touches only the documented endpoints across full flows', async () => {
    const service = new MockService({ pendingPolls: 1 });
    const api = new ApiClient(service.fetch);

    await api.openEpisode('demo', 'ALICE', 'BOB');
    const session = await api.openSession('demo');

    const chatRoot = document.createElement('div');
    const timelineRoot = document.createElement('div');
    document.body.append(chatRoot, timelineRoot);
    const timeline = new TimelineView(timelineRoot, api, {
      episodeId: 'demo',
      wait: () => Promise.resolve(),
    });
    const chat = new ChatView(chatRoot, api, {
      sessionId: session.session_id,
      speaker: 'ALICE',
      onCueClick: (cue) => timeline.highlightCue(cue),
    });

    await timeline.load();
    await chat.send('Remember the harbor?');
    await timeline.showDiff(0, 1);
    await timeline.showDiff(1, 1);
    await timeline.closeSession(session.session_id);

    expect(service.calls.length).toBeGreaterThan(5);
    expect(undocumentedCalls(service.calls)).toEqual([]);
  });

  it('keeps no memory logic client-side: views re-render payloads verbatim', async () => {
    const service = new MockService();
    const api = new ApiClient(service.fetch);
    const root = document.createElement('div');
    document.body.append(root);
    const timeline = new TimelineView(root, api, {
      episodeId: 'demo',
      wait: () => Promise.resolve(),
    });
    await timeline.load();
    await timeline.showDiff(0, 1);

    // every rendered item string exists in the payload, and vice versa:
    // the client adds, removes, reclassifies, and dedupes nothing
    const payload = fixtures.memoryV1.body as MemoryView;
    const payloadTexts = Object.values(payload.memory.collections)
      .flat()
      .map((item) => item.text)
      .sort();
    const renderedTexts = Array.from(
      root.querySelectorAll('.item'),
      (node) => node.textContent ?? '',
    ).sort();
    expect(renderedTexts).toEqual(payloadTexts);

    const diffPayload = (fixtures.diffAll.body as { entries: DiffEntry[] }).entries;
    const renderedDiff = Array.from(
      root.querySelectorAll('.diff-text'),
      (node) => node.textContent ?? '',
    );
    expect(renderedDiff).toEqual(diffPayload.map((entry) => entry.text));
  });

  it('propagates typed errors from error payloads', async () => {
    const api = new ApiClient(new MockService().fetch);
    await expect(api.sendMessage('missing', 'A', 'x')).rejects.toMatchObject({
      name: 'ApiError',
      status: 404,
      code: 'not_found',
    });
    await expect(api.closeSession('already-closed')).rejects.toMatchObject({
      status: 409,
      code: 'conflict',
    });
  });
});
