// Session view-model: pure reducers with exactly-one-submission semantics
// per card. The server owns the truth; reconcile() folds its status back in.

import type { LabelClass, MetricEntry, QueryRecord, SessionInfo, SubmitResult } from './api.js';

export type CardPhase = 'open' | 'submitting' | 'answered' | 'error';

export interface QueryCard {
  record: QueryRecord;
  phase: CardPhase;
  chosen: LabelClass | null;
  note: string;
}

export interface SessionView {
  sessionId: string;
  phase: SessionInfo['phase'];
  round: number;
  budgetSpent: number;
  targetBudget: number;
  serverAnswered: number;
  serverPending: number;
  metricHistory: MetricEntry[];
  cards: QueryCard[];
}

export function initialView(info: SessionInfo): SessionView {
  return {
    sessionId: info.session_id,
    phase: info.phase,
    round: info.round,
    budgetSpent: info.budget_spent,
    targetBudget: info.target_budget,
    serverAnswered: info.answered,
    serverPending: info.pending,
    metricHistory: info.metric_history,
    cards: [],
  };
}

/** Add unseen queries as open cards; re-fetched duplicates are ignored. */
export function ingestQueries(view: SessionView, records: QueryRecord[]): SessionView {
  const known = new Set(view.cards.map((c) => c.record.query_id));
  const fresh = records
    .filter((r) => !known.has(r.query_id))
    .map((record): QueryCard => ({ record, phase: 'open', chosen: null, note: '' }));
  if (fresh.length === 0) return view;
  return { ...view, cards: [...view.cards, ...fresh] };
}

function withCard(
  view: SessionView,
  queryId: string,
  update: (card: QueryCard) => QueryCard,
): SessionView {
  return {
    ...view,
    cards: view.cards.map((c) => (c.record.query_id === queryId ? update(c) : c)),
  };
}

/**
 * Begin a submission. Returns null when the card may not submit (unknown,
 * already answered, or in flight) so callers cannot double-fire.
 */
export function beginSubmit(
  view: SessionView,
  queryId: string,
  label: LabelClass,
): SessionView | null {
  const card = view.cards.find((c) => c.record.query_id === queryId);
  if (!card || card.phase === 'submitting' || card.phase === 'answered') {
    return null;
  }
  return withCard(view, queryId, (c) => ({
    ...c,
    phase: 'submitting',
    chosen: label,
    note: '',
  }));
}

/** Fold the server's verdict for one submission back into the view. */
export function resolveSubmit(
  view: SessionView,
  queryId: string,
  result: SubmitResult,
): SessionView {
  switch (result.kind) {
    case 'ok':
      return {
        ...withCard(view, queryId, (c) => ({ ...c, phase: 'answered' })),
        serverAnswered: view.serverAnswered + 1,
        serverPending: result.remaining,
      };
    case 'already-answered':
      // server verdict wins: lock the card, do not retry
      return withCard(view, queryId, (c) => ({
        ...c,
        phase: 'answered',
        note: result.detail,
      }));
    case 'not-found':
      return withCard(view, queryId, (c) => ({
        ...c,
        phase: 'error',
        note: result.detail,
      }));
  }
}

/** Transport failure: reopen the card so the user can retry. */
export function failSubmit(view: SessionView, queryId: string, note: string): SessionView {
  return withCard(view, queryId, (c) =>
    c.phase === 'submitting' ? { ...c, phase: 'open', chosen: null, note } : c,
  );
}

/**
 * Fold a status poll into the view. Leaving the labeling phase clears the
 * card queue (the next round brings new queries).
 */
export function reconcile(view: SessionView, info: SessionInfo): SessionView {
  const next: SessionView = {
    ...view,
    phase: info.phase,
    round: info.round,
    budgetSpent: info.budget_spent,
    targetBudget: info.target_budget,
    serverAnswered: info.answered,
    serverPending: info.pending,
    metricHistory: info.metric_history,
  };
  if (info.phase !== 'awaiting_labels') {
    next.cards = [];
  }
  return next;
}

export function answeredCount(view: SessionView): number {
  return view.cards.filter((c) => c.phase === 'answered').length;
}

export function openCount(view: SessionView): number {
  return view.cards.filter((c) => c.phase === 'open').length;
}
