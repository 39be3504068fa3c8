/**
 * Typed client for the attribution service's JSON API.
 *
 * Every ranking shown in the UI must originate from one of these calls;
 * the request log exists so that claim is auditable in dev mode.
 */

export interface ChunkTag {
  chunk_index: number;
  text: string;
  ttp: string | null;
  name: string | null;
  similarity: number;
  runner_up: string | null;
}

export interface LlmEntry {
  ttp: string;
  name: string;
  category: string;
}

export type IdentifyMethod = 've' | 'llm';

export interface IdentifyResponse {
  method: IdentifyMethod;
  tags?: ChunkTag[];
  entries?: LlmEntry[];
  counts: Record<string, number>;
  hallucination_rate?: number | null;
}

export interface RankedActor {
  rank: number;
  actor: string;
  score: number;
}

export interface ContributionTerm {
  ttp: string;
  weight: number;
  share: number;
  term: number;
}

export interface AttributeResponse {
  ranking: RankedActor[];
  prior_only: boolean;
  dropped_ttps: string[];
  counts: Record<string, number>;
  decomposition: Record<string, ContributionTerm[]>;
}

export interface PriorResponse {
  session: string;
  prior: Record<string, number>;
}

export interface TaxonomyResponse {
  fingerprint: string;
  techniques: { id: string; name: string }[];
}

export interface MatrixMeta {
  actors: string[];
  n_techniques: number;
  alpha: number;
  taxonomy_fingerprint: string | null;
  zero_rows: string[];
}

export interface RequestLogEntry {
  method: string;
  path: string;
  status: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

interface FieldError {
  field: string;
  message: string;
}

interface ErrorBody {
  error?: string;
  errors?: FieldError[];
}

export interface ApiClientOptions {
  baseUrl?: string;
  sessionId?: string;
  fetchFn?: typeof fetch;
}

export class ApiClient {
  readonly requestLog: RequestLogEntry[] = [];
  private readonly baseUrl: string;
  private readonly sessionId: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? '').replace(/\/+$/, '');
    this.sessionId = options.sessionId ?? `ui-${Math.random().toString(36).slice(2, 10)}`;
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: {
        'Content-Type': 'application/json',
        'X-Session-Id': this.sessionId,
      },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
    this.requestLog.push({ method, path, status: resp.status });
    if (!resp.ok) {
      const detail = (await resp.json().catch(() => null)) as ErrorBody | null;
      const message =
        detail?.error ??
        detail?.errors?.map((e) => `${e.field}: ${e.message}`).join('; ') ??
        `request failed with status ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }

  actors(): Promise<{ actors: string[] }> {
    return this.request('GET', '/actors');
  }

  taxonomy(): Promise<TaxonomyResponse> {
    return this.request('GET', '/taxonomy');
  }

  matrixMeta(): Promise<MatrixMeta> {
    return this.request('GET', '/matrix/meta');
  }

  identify(text: string, method: IdentifyMethod = 've'): Promise<IdentifyResponse> {
    return this.request('POST', '/identify', { text, method });
  }

  /**
   * Rank actors for the given counts. Pass useSessionPrior after a
   * putPrior call; omit it for the server's no-prior ranking.
   */
  attribute(
    counts: Record<string, number>,
    useSessionPrior = false,
    signal?: AbortSignal,
  ): Promise<AttributeResponse> {
    return this.request(
      'POST',
      '/attribute',
      { counts, use_session_prior: useSessionPrior, top_terms: 3 },
      signal,
    );
  }

  putPrior(weights: Record<string, number>): Promise<PriorResponse> {
    return this.request('PUT', '/session/prior', { weights });
  }
}
