/**
 * Typed client for the dyadmem HTTP API.
 *
 * The UI talks to the engine exclusively through these endpoints; no memory
 * semantics live client-side. The fetch implementation is injectable so the
 * test suite can serve recorded fixtures.
 */

export type ErrorCode =
  | 'not_found'
  | 'conflict'
  | 'backend_unavailable'
  | 'invalid_request'
  | 'update_pending';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: ErrorCode,
    message: string,
    public readonly retryable: boolean,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface EpisodeOpened {
  episode_id: string;
  dyad: [string, string];
  snapshot_version: number;
}

export interface SessionOpened {
  session_id: string;
  episode_id: string;
}

export interface MessageResponse {
  reply: { speaker: string; text: string };
  cues: string[];
  snapshot_version: number;
  degraded: boolean;
}

export interface CloseResponse {
  job_id: string;
  status: string;
  status_url: string;
}

export type JobStatus = 'pending' | 'running' | 'committed' | 'failed';

export interface JobView {
  job_id: string;
  episode_id: string;
  status: JobStatus;
  result_version: number | null;
  error: string | null;
}

export interface MemoryItemView {
  item_id: string;
  category: string;
  owner: string | null;
  text: string;
  origin_session: string | number;
  status: 'active' | 'superseded';
  superseded_by: string | null;
  needs_past_tense: boolean;
}

export type CollectionName = 'persona_u' | 'persona_v' | 'events_u' | 'events_v' | 'shared';

export interface MemoryView {
  episode_id: string;
  version: number;
  memory: {
    dyad: [string, string];
    version: number;
    collections: Record<CollectionName, MemoryItemView[]>;
  };
}

export type ActionName =
  | 'accumulate'
  | 'connect_sequential'
  | 'update_conflicting'
  | 'deduplicate';

export interface DiffEntry {
  item_id: string;
  text: string;
  category: string;
  owner: string | null;
  action: number;
  action_name: ActionName;
  superseded: string[];
}

export interface DiffView {
  episode_id: string;
  v1: number;
  v2: number;
  entries: DiffEntry[];
}

/** Structural subset of the WHATWG Response the client relies on. */
export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  path: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<HttpResponse>;

function defaultFetch(): FetchLike {
  return (path, init) => fetch(path, init);
}

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike = defaultFetch(),
    private readonly base = '',
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      const err = (payload as { error?: { code?: string; message?: string; retryable?: boolean } })
        .error;
      throw new ApiError(
        response.status,
        (err?.code ?? 'invalid_request') as ErrorCode,
        err?.message ?? `request failed with ${response.status}`,
        err?.retryable ?? false,
      );
    }
    return payload as T;
  }

  openEpisode(episodeId: string, speakerA: string, speakerB: string): Promise<EpisodeOpened> {
    return this.request('POST', '/episodes', {
      episode_id: episodeId,
      speaker_a: speakerA,
      speaker_b: speakerB,
    });
  }

  openSession(episodeId: string): Promise<SessionOpened> {
    return this.request('POST', `/episodes/${encodeURIComponent(episodeId)}/sessions`);
  }

  sendMessage(sessionId: string, speaker: string, text: string): Promise<MessageResponse> {
    return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/messages`, {
      speaker,
      text,
    });
  }

  closeSession(sessionId: string): Promise<CloseResponse> {
    return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/close`);
  }

  /** Job polls answer 202 while the update is in flight; both are payloads. */
  getJob(jobId: string): Promise<JobView> {
    return this.request('GET', `/jobs/${encodeURIComponent(jobId)}`);
  }

  getMemory(episodeId: string, version: number | 'latest' = 'latest'): Promise<MemoryView> {
    return this.request(
      'GET',
      `/episodes/${encodeURIComponent(episodeId)}/memory?version=${version}`,
    );
  }

  getMemoryDiff(episodeId: string, v1: number, v2: number): Promise<DiffView> {
    return this.request(
      'GET',
      `/episodes/${encodeURIComponent(episodeId)}/memory/diff?v1=${v1}&v2=${v2}`,
    );
  }
}

export const EVERYDAY_LANGUAGE = 'Everyday Language';
