/**
 * Chat view: transcript, per-reply memory-cue chips, snapshot version badge.
 *
 * Every rendered element mirrors the API response verbatim: chips are the
 * cue list one-to-one, the badge is the reported snapshot version, and a
 * degraded (everyday-language fallback) reply gets a single sentinel chip
 * with distinct styling. API errors surface as non-blocking banners; a
 * missing session additionally disables input.
 */

import { ApiClient, ApiError, EVERYDAY_LANGUAGE, MessageResponse } from './api.js';

export interface ChatOptions {
  sessionId: string;
  speaker: string;
  onCueClick?: (cue: string) => void;
}

export class ChatView {
  readonly transcript: HTMLElement;
  readonly banner: HTMLElement;
  readonly input: HTMLInputElement;
  readonly sendButton: HTMLButtonElement;
  readonly versionBadge: HTMLElement;
  sessionId: string;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly options: ChatOptions,
  ) {
    this.sessionId = options.sessionId;
    this.root.classList.add('chat');

    this.banner = el('div', 'banner hidden');
    this.versionBadge = el('span', 'version-badge');
    this.versionBadge.textContent = 'v?';
    this.transcript = el('div', 'transcript');

    const form = el('form', 'chat-form');
    this.input = el('input', 'chat-input') as HTMLInputElement;
    this.input.type = 'text';
    this.sendButton = el('button', 'chat-send') as HTMLButtonElement;
    this.sendButton.type = 'submit';
    this.sendButton.textContent = 'Send';
    form.append(this.input, this.sendButton);
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      const text = this.input.value.trim();
      if (text) {
        this.input.value = '';
        void this.send(text);
      }
    });

    const header = el('div', 'chat-header');
    header.append(this.versionBadge);
    this.root.append(header, this.banner, this.transcript, form);
  }

  async send(text: string): Promise<MessageResponse | null> {
    this.hideBanner();
    this.appendBubble(this.options.speaker, text, 'mine');
    try {
      const response = await this.api.sendMessage(this.sessionId, this.options.speaker, text);
      this.renderReply(response);
      return response;
    } catch (error) {
      this.showError(error);
      return null;
    }
  }

  renderReply(response: MessageResponse): void {
    const bubble = this.appendBubble(response.reply.speaker, response.reply.text, 'theirs');
    const cues = el('ul', 'cues');
    for (const cue of response.cues) {
      const chip = el('li', 'chip');
      if (response.degraded || cue === EVERYDAY_LANGUAGE) {
        chip.classList.add('chip-sentinel');
      }
      chip.textContent = cue;
      chip.addEventListener('click', () => this.options.onCueClick?.(cue));
      cues.append(chip);
    }
    bubble.append(cues);
    this.versionBadge.textContent = `v${response.snapshot_version}`;
    this.versionBadge.dataset.version = String(response.snapshot_version);
  }

  private appendBubble(speaker: string, text: string, side: 'mine' | 'theirs'): HTMLElement {
    const bubble = el('div', `bubble bubble-${side}`);
    const who = el('span', 'speaker');
    who.textContent = speaker;
    const body = el('p', 'text');
    body.textContent = text;
    bubble.append(who, body);
    this.transcript.append(bubble);
    return bubble;
  }

  showError(error: unknown): void {
    const message =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.banner.textContent = message;
    this.banner.classList.remove('hidden');
    this.banner.classList.add('banner-error');
    if (error instanceof ApiError && error.code === 'not_found') {
      this.input.disabled = true;
      this.sendButton.disabled = true;
    }
  }

  private hideBanner(): void {
    this.banner.classList.add('hidden');
    this.banner.textContent = '';
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}
