// Typed client for the annotation service. All image composition happens
// server-side; this client only moves JSON (and JSONL) around.

export type LabelClass = 'salient' | 'background';

export interface MetricEntry {
  round: number;
  budget: number;
  maxF: number;
  avgF: number;
  mae: number;
}

export interface SessionInfo {
  session_id: string;
  phase: 'training' | 'awaiting_labels' | 'complete';
  round: number;
  budget_spent: number;
  target_budget: number;
  pending: number;
  answered: number;
  metric_history: MetricEntry[];
}

export interface QueryRecord {
  query_id: string;
  image_id: string;
  row: number;
  col: number;
  round: number;
  superpixel_id: number;
  marker: { row: number; col: number };
  outline: [number, number][];
  png_base64: string;
}

export type SubmitResult =
  | { kind: 'ok'; remaining: number }
  | { kind: 'already-answered'; detail: string }
  | { kind: 'not-found'; detail: string };

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/** Parse a line-delimited JSON body into records, skipping blank lines. */
export function parseQueryLines(body: string): QueryRecord[] {
  return body
    .split('\n')
    .map((line) => line.trim())
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as QueryRecord);
}

async function detailOf(response: Response): Promise<string> {
  try {
    const doc = (await response.json()) as { detail?: string };
    return doc.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class AnnotationClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
    private readonly retries = 2,
    private readonly retryDelayMs = 300,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path;
  }

  /** Retry only transport failures; HTTP error statuses pass through. */
  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.retries; attempt++) {
      try {
        return await this.fetchFn(this.url(path), init);
      } catch (err) {
        lastError = err;
        if (attempt < this.retries) {
          await new Promise((r) => setTimeout(r, this.retryDelayMs * (attempt + 1)));
        }
      }
    }
    throw lastError;
  }

  async createSession(): Promise<SessionInfo> {
    const response = await this.request('/sessions', { method: 'POST' });
    if (!response.ok) {
      throw new ServiceError(await detailOf(response), response.status);
    }
    return (await response.json()) as SessionInfo;
  }

  async fetchQueries(sessionId: string, limit = 32): Promise<QueryRecord[]> {
    const response = await this.request(
      `/sessions/${sessionId}/queries?limit=${limit}`,
    );
    if (!response.ok) {
      throw new ServiceError(await detailOf(response), response.status);
    }
    return parseQueryLines(await response.text());
  }

  /**
   * Submit one label. Duplicate-rejection (409) and unknown ids (404) are
   * surfaced as results, never retried; transport failures retry and the
   * server's exactly-once check makes the retry safe.
   */
  async submitLabel(
    sessionId: string,
    queryId: string,
    label: LabelClass,
  ): Promise<SubmitResult> {
    const response = await this.request(`/sessions/${sessionId}/labels`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ query_id: queryId, label }),
    });
    if (response.ok) {
      const doc = (await response.json()) as { remaining: number };
      return { kind: 'ok', remaining: doc.remaining };
    }
    if (response.status === 409) {
      return { kind: 'already-answered', detail: await detailOf(response) };
    }
    if (response.status === 404) {
      return { kind: 'not-found', detail: await detailOf(response) };
    }
    throw new ServiceError(await detailOf(response), response.status);
  }

  async getStatus(sessionId: string): Promise<SessionInfo> {
    const response = await this.request(`/sessions/${sessionId}/status`);
    if (!response.ok) {
      throw new ServiceError(await detailOf(response), response.status);
    }
    return (await response.json()) as SessionInfo;
  }
}
