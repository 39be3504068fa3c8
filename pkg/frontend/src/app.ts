/**
 * DOM wiring for the analyst console. All scoring happens server-side;
 * this file only moves data between controls and the API client.
 */
import { ApiClient, ApiError } from './api.js';
import type { IdentifyMethod } from './api.js';
import { debounce, LatestWins } from './debounce.js';
import { SessionState } from './state.js';

const PRIOR_DEBOUNCE_MS = 250;
const SLIDER_STEPS = 100;

const api = new ApiClient();
const state = new SessionState();
const attributeQueue = new LatestWins();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function setStatus(message: string, isError = false): void {
  const status = el<HTMLElement>('status');
  status.textContent = message;
  status.className = isError ? 'status error' : 'status';
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `server rejected the request (${err.status}): ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

function renderEvidence(): void {
  const panel = el<HTMLElement>('evidence');
  panel.replaceChildren();
  if (state.method === 've') {
    for (const tag of state.tags) {
      const row = document.createElement('div');
      row.className = 'evidence-row';
      const label = tag.ttp ? `${tag.ttp} ${tag.name ?? ''}` : 'no match';
      // runner-up shown so near-ties are visible to the analyst
      const runner = tag.runner_up ? ` (runner-up ${tag.runner_up})` : '';
      row.innerHTML =
        `<span class="chunk-no">#${tag.chunk_index}</span>` +
        `<span class="ttp">${label}</span>` +
        `<span class="sim">${tag.similarity.toFixed(3)}${runner}</span>` +
        `<pre class="chunk-text">${tag.text}</pre>`;
      panel.appendChild(row);
    }
  } else {
    for (const entry of state.entries) {
      const row = document.createElement('div');
      row.className = `evidence-row cat-${entry.category}`;
      row.innerHTML =
        `<span class="ttp">${entry.ttp} ${entry.name}</span>` +
        `<span class="category">${entry.category}</span>`;
      panel.appendChild(row);
    }
  }
}

function renderRanking(): void {
  const list = el<HTMLElement>('ranking');
  list.replaceChildren();
  const top = state.ranking.length ? state.ranking[0].score : 0;
  for (const row of state.ranking) {
    const item = document.createElement('div');
    item.className = 'rank-row';
    item.style.order = String(row.rank);
    const width = top > 0 ? (row.score / top) * 100 : 0;
    const terms = (state.decomposition[row.actor] ?? [])
      .map((t) => `${t.ttp} (${t.term.toExponential(2)})`)
      .join(', ');
    item.innerHTML =
      `<span class="rank-no">${row.rank}</span>` +
      `<span class="actor">${row.actor}</span>` +
      `<span class="bar"><span class="fill" style="width:${width.toFixed(1)}%"></span></span>` +
      `<span class="score">${row.score.toExponential(3)}</span>` +
      `<span class="terms">${terms}</span>`;
    list.appendChild(item);
  }
  el<HTMLElement>('prior-only-note').hidden = !state.priorOnly;
}

function renderSliders(): void {
  const container = el<HTMLElement>('sliders');
  container.replaceChildren();
  for (const actor of state.actors) {
    const row = document.createElement('label');
    row.className = 'slider-row';
    const input = document.createElement('input');
    input.type = 'range';
    input.min = '0';
    input.max = String(SLIDER_STEPS);
    input.step = '1';
    input.value = String(Math.round(state.weightOf(actor) * SLIDER_STEPS));
    input.dataset.actor = actor;
    input.addEventListener('input', () => {
      state.setWeight(actor, Number(input.value) / SLIDER_STEPS);
      queuePriorUpdate();
    });
    const name = document.createElement('span');
    name.textContent = actor;
    row.append(name, input);
    container.appendChild(row);
  }
}

/** PUT the renormalized prior, then re-rank; stale responses are dropped. */
async function updateAttribution(): Promise<void> {
  try {
    await api.putPrior(state.normalizedPrior());
    const resp = await attributeQueue.run((signal) =>
      api.attribute(state.counts, true, signal),
    );
    if (resp !== null) {
      state.applyAttribution(resp);
      renderRanking();
      setStatus('ranking updated');
    }
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

const queuePriorUpdate = debounce(() => {
  void updateAttribution();
}, PRIOR_DEBOUNCE_MS);

async function runIdentification(): Promise<void> {
  const text = el<HTMLTextAreaElement>('report').value;
  if (!text.trim()) {
    setStatus('paste a report first', true);
    return;
  }
  const method = el<HTMLSelectElement>('method').value as IdentifyMethod;
  setStatus('identifying...');
  try {
    state.report = text;
    const resp = await api.identify(text, method);
    state.applyIdentification(resp);
    renderEvidence();
    await updateAttribution();
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

function exportSession(): void {
  const blob = new Blob([state.exportSession()], { type: 'application/json' });
  const url = URL.createObjectURL(blob);
  const a = document.createElement('a');
  a.href = url;
  a.download = 'ttpattrib-session.json';
  a.click();
  URL.revokeObjectURL(url);
}

async function importSession(file: File): Promise<void> {
  try {
    const imported = SessionState.importSession(await file.text());
    state.report = imported.report;
    state.method = imported.method;
    state.counts = imported.counts;
    state.ranking = imported.ranking;
    for (const actor of imported.actors) {
      state.setWeight(actor, imported.weightOf(actor));
    }
    el<HTMLTextAreaElement>('report').value = state.report;
    el<HTMLSelectElement>('method').value = state.method;
    renderSliders();
    renderRanking();
    setStatus('session imported; ranking as saved');
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

async function init(): Promise<void> {
  try {
    const { actors } = await api.actors();
    state.setActors(actors);
    renderSliders();
    setStatus(`loaded ${actors.length} actors`);
  } catch (err) {
    setStatus(describeError(err), true);
    return;
  }
  el<HTMLButtonElement>('identify-btn').addEventListener('click', () => {
    void runIdentification();
  });
  el<HTMLButtonElement>('export-btn').addEventListener('click', exportSession);
  el<HTMLInputElement>('import-input').addEventListener('change', (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) {
      void importSession(file);
    }
  });
  el<HTMLButtonElement>('uniform-btn').addEventListener('click', () => {
    state.setActors(state.actors);
    renderSliders();
    void updateAttribution();
  });
}

document.addEventListener('DOMContentLoaded', () => {
  void init();
});
