/**
 * View model for one analyst session.
 *
 * The UI never scores anything itself: the ranking always mirrors the
 * last /attribute response, and slider weights renormalize to sum 1
 * before they leave the app.
 */
import type {
  AttributeResponse,
  ChunkTag,
  ContributionTerm,
  IdentifyMethod,
  IdentifyResponse,
  LlmEntry,
  RankedActor,
} from './api.js';

export interface SessionExport {
  version: 1;
  report: string;
  method: IdentifyMethod;
  weights: Record<string, number>;
  counts: Record<string, number>;
  ranking: RankedActor[];
}

/** Scale weights so they sum to 1; all-zero means "no opinion" and falls back to uniform. */
export function renormalize(weights: Record<string, number>): Record<string, number> {
  const actors = Object.keys(weights);
  if (actors.length === 0) {
    throw new Error('no actors to renormalize');
  }
  let total = 0;
  for (const actor of actors) {
    const w = weights[actor];
    if (!Number.isFinite(w) || w < 0) {
      throw new Error(`invalid weight for ${actor}: ${w}`);
    }
    total += w;
  }
  const out: Record<string, number> = {};
  for (const actor of actors) {
    out[actor] = total === 0 ? 1 / actors.length : weights[actor] / total;
  }
  return out;
}

export function uniformWeights(actors: string[]): Record<string, number> {
  const out: Record<string, number> = {};
  for (const actor of actors) {
    out[actor] = 1;
  }
  return out;
}

export class SessionState {
  report = '';
  method: IdentifyMethod = 've';
  counts: Record<string, number> = {};
  tags: ChunkTag[] = [];
  entries: LlmEntry[] = [];
  ranking: RankedActor[] = [];
  decomposition: Record<string, ContributionTerm[]> = {};
  priorOnly = false;
  private weights: Record<string, number> = {};

  get actors(): string[] {
    return Object.keys(this.weights);
  }

  /** Resets sliders to uniform for a fresh actor list. */
  setActors(actors: string[]): void {
    this.weights = uniformWeights(actors);
  }

  setWeight(actor: string, value: number): void {
    if (!(actor in this.weights)) {
      throw new Error(`unknown actor: ${actor}`);
    }
    if (!Number.isFinite(value) || value < 0) {
      throw new Error(`invalid weight: ${value}`);
    }
    this.weights[actor] = value;
  }

  weightOf(actor: string): number {
    return this.weights[actor];
  }

  /** The only thing ever sent as a prior: always sums to 1. */
  normalizedPrior(): Record<string, number> {
    return renormalize(this.weights);
  }

  applyIdentification(resp: IdentifyResponse): void {
    this.method = resp.method;
    this.counts = { ...resp.counts };
    this.tags = resp.tags ? [...resp.tags] : [];
    this.entries = resp.entries ? [...resp.entries] : [];
  }

  /** Sole writer of the ranking view; keeps it tied to the last server response. */
  applyAttribution(resp: AttributeResponse): void {
    this.ranking = [...resp.ranking];
    this.decomposition = { ...resp.decomposition };
    this.priorOnly = resp.prior_only;
  }

  exportSession(): string {
    const snapshot: SessionExport = {
      version: 1,
      report: this.report,
      method: this.method,
      weights: { ...this.weights },
      counts: { ...this.counts },
      ranking: this.ranking.map((r) => ({ ...r })),
    };
    return JSON.stringify(snapshot, null, 2);
  }

  static importSession(json: string): SessionState {
    const raw = JSON.parse(json) as Partial<SessionExport>;
    if (raw.version !== 1) {
      throw new Error(`unsupported session version: ${raw.version}`);
    }
    if (typeof raw.report !== 'string' || raw.method === undefined) {
      throw new Error('session file is missing report or method');
    }
    if (raw.weights === null || typeof raw.weights !== 'object') {
      throw new Error('session file is missing prior weights');
    }
    if (!Array.isArray(raw.ranking)) {
      throw new Error('session file is missing the ranking');
    }
    const state = new SessionState();
    state.report = raw.report;
    state.method = raw.method;
    state.weights = { ...raw.weights };
    state.counts = { ...(raw.counts ?? {}) };
    state.ranking = raw.ranking.map((r) => ({ ...r }));
    return state;
  }
}
