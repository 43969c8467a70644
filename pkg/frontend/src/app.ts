// DOM wiring: card queue, keyboard shortcuts, 2-second status polling, and
// a small inline metric sparkline. All rendering data comes pre-composed
// from the service.

import { AnnotationClient, type LabelClass } from './api.js';
import {
  answeredCount,
  beginSubmit,
  failSubmit,
  ingestQueries,
  initialView,
  reconcile,
  resolveSubmit,
  type QueryCard,
  type SessionView,
} from './state.js';

const POLL_MS = 2000;

function sparkline(values: number[], width = 220, height = 48): string {
  if (values.length === 0) return '<svg class="spark"></svg>';
  const pts = values
    .map((v, i) => {
      const x = values.length === 1 ? 0 : (i / (values.length - 1)) * (width - 4) + 2;
      const y = height - 4 - v * (height - 8);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(' ');
  return (
    `<svg class="spark" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
    `<polyline fill="none" stroke="#2a7" stroke-width="2" points="${pts}"/></svg>`
  );
}

export class App {
  private view: SessionView | null = null;
  private timer: number | undefined;

  constructor(
    private readonly client: AnnotationClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    const info = await this.client.createSession();
    this.view = initialView(info);
    this.render();
    await this.refresh();
    this.timer = window.setInterval(() => void this.refresh(), POLL_MS);
  }

  stop(): void {
    if (this.timer !== undefined) window.clearInterval(this.timer);
  }

  private async refresh(): Promise<void> {
    if (!this.view) return;
    try {
      const status = await this.client.getStatus(this.view.sessionId);
      this.view = reconcile(this.view, status);
      if (status.phase === 'awaiting_labels') {
        const queries = await this.client.fetchQueries(this.view.sessionId, 64);
        this.view = ingestQueries(this.view, queries);
      }
      if (status.phase === 'complete') this.stop();
    } catch (err) {
      // transient poll failures keep the previous view; next tick retries
      console.warn('status poll failed', err);
    }
    this.render();
  }

  private async submit(queryId: string, label: LabelClass): Promise<void> {
    if (!this.view) return;
    const begun = beginSubmit(this.view, queryId, label);
    if (!begun) return; // answered or in flight: exactly one submission per card
    this.view = begun;
    this.render();
    try {
      const result = await this.client.submitLabel(this.view.sessionId, queryId, label);
      this.view = resolveSubmit(this.view, queryId, result);
    } catch (err) {
      this.view = failSubmit(this.view, queryId, `network error, try again (${err})`);
    }
    this.render();
  }

  private cardHtml(card: QueryCard): string {
    const r = card.record;
    const locked = card.phase === 'answered' || card.phase === 'submitting';
    const badge =
      card.phase === 'answered'
        ? `answered${card.chosen ? `: ${card.chosen}` : ''}`
        : card.phase === 'submitting'
          ? 'sending…'
          : card.phase === 'error'
            ? 'error'
            : 'press s / b';
    return `
      <div class="card ${card.phase}" tabindex="0" data-query="${r.query_id}">
        <img alt="query ${r.query_id}" src="data:image/png;base64,${r.png_base64}">
        <div class="meta">
          <span>${r.image_id} (${r.row}, ${r.col}) round ${r.round}</span>
          <span class="badge">${badge}</span>
          <span class="note">${card.note}</span>
        </div>
        <div class="actions">
          <button data-label="salient" ${locked ? 'disabled' : ''}>salient (s)</button>
          <button data-label="background" ${locked ? 'disabled' : ''}>background (b)</button>
        </div>
      </div>`;
  }

  private render(): void {
    const v = this.view;
    if (!v) return;
    const header = `
      <div class="status">
        <strong>${v.phase === 'training' ? 'training next round…' : v.phase}</strong>
        <span>round ${v.round}</span>
        <span>budget ${v.budgetSpent}/${v.targetBudget}</span>
        <span>answered ${answeredCount(v)} · pending ${v.serverPending}</span>
        ${sparkline(v.metricHistory.map((m) => m.maxF))}
        <span class="curve-label">maxF by round</span>
      </div>`;
    const body =
      v.phase === 'complete'
        ? `<div class="done">Run complete — final maxF ${
            v.metricHistory.length
              ? v.metricHistory[v.metricHistory.length - 1]!.maxF.toFixed(4)
              : 'n/a'
          }</div>`
        : v.cards.map((c) => this.cardHtml(c)).join('\n');
    this.root.innerHTML = header + `<div class="queue">${body}</div>`;

    for (const el of Array.from(this.root.querySelectorAll('.card'))) {
      const queryId = (el as HTMLElement).dataset['query']!;
      for (const btn of Array.from(el.querySelectorAll('button'))) {
        btn.addEventListener('click', () => {
          void this.submit(queryId, (btn as HTMLElement).dataset['label'] as LabelClass);
        });
      }
      el.addEventListener('keydown', (event) => {
        const key = (event as KeyboardEvent).key.toLowerCase();
        if (key === 's') void this.submit(queryId, 'salient');
        if (key === 'b') void this.submit(queryId, 'background');
      });
    }
  }
}

export function mount(): void {
  const base =
    new URLSearchParams(window.location.search).get('service') ??
    window.location.origin;
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app container');
  const app = new App(new AnnotationClient(base), root);
  void app.start().catch((err) => {
    root.innerHTML = `<div class="error">cannot start session: ${err}</div>`;
  });
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  mount();
}
