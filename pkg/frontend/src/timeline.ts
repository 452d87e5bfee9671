/**
 * Memory timeline: version slider, five-collection inspector, diff overlay
 * colored by update action, and the close-session job flow with live status
 * polling.
 *
 * The view renders API payloads as-is. Diff rows carry one CSS class per
 * update action (diff-accumulate, diff-connect_sequential,
 * diff-update_conflicting, diff-deduplicate); comparing a version to itself
 * shows an explicit empty state.
 */

import { ApiClient, ApiError, CollectionName, DiffView, JobView, MemoryView } from './api.js';

const COLLECTION_ORDER: CollectionName[] = [
  'persona_u',
  'persona_v',
  'events_u',
  'events_v',
  'shared',
];

const TERMINAL: ReadonlySet<string> = new Set(['committed', 'failed']);

export interface TimelineOptions {
  episodeId: string;
  /** Poll delay hook; tests inject a no-op to run the loop synchronously. */
  wait?: (ms: number) => Promise<void>;
  pollIntervalMs?: number;
}

export class TimelineView {
  readonly banner: HTMLElement;
  readonly versionBadge: HTMLElement;
  readonly jobBadge: HTMLElement;
  readonly slider: HTMLInputElement;
  readonly collectionsPanel: HTMLElement;
  readonly diffPanel: HTMLElement;
  readonly diffFrom: HTMLSelectElement;
  readonly diffTo: HTMLSelectElement;
  latest = 0;

  private readonly wait: (ms: number) => Promise<void>;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly options: TimelineOptions,
  ) {
    this.wait =
      options.wait ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
    this.root.classList.add('timeline');

    this.banner = el('div', 'banner hidden');
    this.versionBadge = el('span', 'version-badge');
    this.jobBadge = el('span', 'job-badge job-idle');
    this.jobBadge.textContent = 'idle';

    this.slider = el('input', 'version-slider') as HTMLInputElement;
    this.slider.type = 'range';
    this.slider.min = '0';
    this.slider.addEventListener('change', () => {
      void this.showVersion(Number(this.slider.value));
    });

    this.collectionsPanel = el('div', 'collections');
    this.diffPanel = el('div', 'diff-panel');
    this.diffFrom = el('select', 'diff-from') as HTMLSelectElement;
    this.diffTo = el('select', 'diff-to') as HTMLSelectElement;
    const diffButton = el('button', 'diff-show') as HTMLButtonElement;
    diffButton.textContent = 'Diff';
    diffButton.addEventListener('click', () => {
      void this.showDiff(Number(this.diffFrom.value), Number(this.diffTo.value));
    });

    const header = el('div', 'timeline-header');
    header.append(this.versionBadge, this.jobBadge);
    const diffControls = el('div', 'diff-controls');
    diffControls.append(this.diffFrom, this.diffTo, diffButton);
    this.root.append(
      header,
      this.banner,
      this.slider,
      this.collectionsPanel,
      diffControls,
      this.diffPanel,
    );
  }

  async load(): Promise<MemoryView | null> {
    try {
      const view = await this.api.getMemory(this.options.episodeId, 'latest');
      this.latest = view.version;
      this.slider.max = String(view.version);
      this.slider.value = String(view.version);
      this.syncVersionChoices();
      this.renderCollections(view);
      return view;
    } catch (error) {
      this.showError(error);
      return null;
    }
  }

  async showVersion(version: number): Promise<void> {
    try {
      const view = await this.api.getMemory(this.options.episodeId, version);
      this.renderCollections(view);
    } catch (error) {
      this.showError(error);
    }
  }

  renderCollections(view: MemoryView): void {
    this.versionBadge.textContent = `v${view.version}`;
    this.versionBadge.dataset.version = String(view.version);
    this.collectionsPanel.replaceChildren();
    for (const name of COLLECTION_ORDER) {
      const section = el('section', `collection collection-${name}`);
      const title = el('h3', 'collection-title');
      title.textContent = name;
      const list = el('ul', 'items');
      for (const item of view.memory.collections[name] ?? []) {
        const row = el('li', `item item-${item.status}`);
        row.dataset.itemId = item.item_id;
        row.textContent = item.text;
        list.append(row);
      }
      section.append(title, list);
      this.collectionsPanel.append(section);
    }
  }

  async showDiff(v1: number, v2: number): Promise<DiffView | null> {
    this.diffPanel.replaceChildren();
    try {
      const diff = await this.api.getMemoryDiff(this.options.episodeId, v1, v2);
      if (diff.entries.length === 0) {
        const empty = el('p', 'diff-empty');
        empty.textContent =
          v1 === v2 ? 'Same version on both sides; nothing to compare.' : 'No changes.';
        this.diffPanel.append(empty);
        return diff;
      }
      const list = el('ul', 'diff-entries');
      for (const entry of diff.entries) {
        const row = el('li', `diff-entry diff-${entry.action_name}`);
        row.dataset.action = entry.action_name;
        const label = el('span', 'diff-action');
        label.textContent = entry.action_name.replace('_', ' ');
        const text = el('span', 'diff-text');
        text.textContent = entry.text;
        row.append(label, text);
        list.append(row);
      }
      this.diffPanel.append(list);
      return diff;
    } catch (error) {
      this.showError(error);
      return null;
    }
  }

  /** Close a session and follow its update job until it settles. */
  async closeSession(sessionId: string): Promise<JobView | null> {
    try {
      const close = await this.api.closeSession(sessionId);
      this.setJobBadge(close.status);
      let job = await this.api.getJob(close.job_id);
      while (!TERMINAL.has(job.status)) {
        this.setJobBadge(job.status);
        await this.wait(this.options.pollIntervalMs ?? 250);
        job = await this.api.getJob(close.job_id);
      }
      this.setJobBadge(job.status);
      await this.load(); // committed bumps the version; failed leaves it as-is
      return job;
    } catch (error) {
      this.showError(error);
      return null;
    }
  }

  /** Highlight inspector items referenced by a cue chip. */
  highlightCue(cue: string): number {
    let hits = 0;
    for (const row of Array.from(this.collectionsPanel.querySelectorAll('.item'))) {
      const text = row.textContent ?? '';
      if (text && cue.includes(text)) {
        row.classList.add('highlighted');
        hits += 1;
      } else {
        row.classList.remove('highlighted');
      }
    }
    return hits;
  }

  private syncVersionChoices(): void {
    this.diffFrom.replaceChildren();
    this.diffTo.replaceChildren();
    for (let v = 0; v <= this.latest; v += 1) {
      for (const select of [this.diffFrom, this.diffTo]) {
        const option = document.createElement('option');
        option.value = String(v);
        option.textContent = `v${v}`;
        select.append(option);
      }
    }
    this.diffTo.value = String(this.latest);
  }

  private setJobBadge(status: string): void {
    this.jobBadge.textContent = status;
    this.jobBadge.className = `job-badge job-${status}`;
  }

  showError(error: unknown): void {
    const message =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.banner.textContent = message;
    this.banner.classList.remove('hidden');
    this.banner.classList.add('banner-error');
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}
