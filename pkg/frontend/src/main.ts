/**
 * Page bootstrap: open (or join) an episode, start a session, and wire the
 * chat view to the memory timeline so cue chips highlight inspector items
 * and closing a session refreshes the timeline.
 */

import { ApiClient, ApiError } from './api.js';
import { ChatView } from './chat.js';
import { TimelineView } from './timeline.js';

async function boot(): Promise<void> {
  const api = new ApiClient();
  const chatRoot = document.getElementById('chat');
  const timelineRoot = document.getElementById('timeline');
  const controls = document.getElementById('controls');
  if (!chatRoot || !timelineRoot || !controls) {
    throw new Error('missing #chat, #timeline, or #controls containers');
  }

  const params = new URLSearchParams(window.location.search);
  const episodeId = params.get('episode') ?? 'web-demo';
  const speakerA = params.get('speaker_a') ?? 'YOU';
  const speakerB = params.get('speaker_b') ?? 'AGENT';

  try {
    await api.openEpisode(episodeId, speakerA, speakerB);
  } catch (error) {
    // conflict simply means the episode already exists; join it
    if (!(error instanceof ApiError && error.code === 'invalid_request')) {
      throw error;
    }
  }
  const session = await api.openSession(episodeId);

  const timeline = new TimelineView(timelineRoot, api, { episodeId });
  const chat = new ChatView(chatRoot, api, {
    sessionId: session.session_id,
    speaker: speakerA,
    onCueClick: (cue) => timeline.highlightCue(cue),
  });
  await timeline.load();

  const closeButton = document.createElement('button');
  closeButton.id = 'close-session';
  closeButton.textContent = 'Close session (update memory)';
  closeButton.addEventListener('click', () => {
    void timeline.closeSession(chat.sessionId).then(async (job) => {
      if (job?.status === 'committed') {
        const next = await api.openSession(episodeId);
        chat.sessionId = next.session_id;
      }
    });
  });
  controls.append(closeButton);
}

void boot();
