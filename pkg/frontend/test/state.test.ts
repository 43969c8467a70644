import { describe, expect, it } from 'vitest';

import type { QueryRecord, SessionInfo } from '../src/api.js';
import {
  answeredCount,
  beginSubmit,
  failSubmit,
  ingestQueries,
  initialView,
  openCount,
  reconcile,
  resolveSubmit,
} from '../src/state.js';

function info(overrides: Partial<SessionInfo> = {}): SessionInfo {
  return {
    session_id: 's1',
    phase: 'awaiting_labels',
    round: 0,
    budget_spent: 2,
    target_budget: 6,
    pending: 2,
    answered: 0,
    metric_history: [],
    ...overrides,
  };
}

function record(id: string): QueryRecord {
  return {
    query_id: id,
    image_id: 'img',
    row: 1,
    col: 2,
    round: 1,
    superpixel_id: 0,
    marker: { row: 1, col: 2 },
    outline: [],
    png_base64: '',
  };
}

describe('card queue', () => {
  it('ingests queries once, even across re-fetches', () => {
    let view = initialView(info());
    view = ingestQueries(view, [record('a'), record('b')]);
    view = ingestQueries(view, [record('a'), record('b')]);
    expect(view.cards).toHaveLength(2);
    expect(openCount(view)).toBe(2);
  });

  it('allows exactly one submission per card', () => {
    let view = ingestQueries(initialView(info()), [record('a')]);
    const begun = beginSubmit(view, 'a', 'salient');
    expect(begun).not.toBeNull();
    view = begun!;
    expect(beginSubmit(view, 'a', 'background')).toBeNull(); // in flight
    view = resolveSubmit(view, 'a', { kind: 'ok', remaining: 1 });
    expect(beginSubmit(view, 'a', 'background')).toBeNull(); // answered
    expect(answeredCount(view)).toBe(1);
    expect(view.serverPending).toBe(1);
  });

  it('locks the card with the server verdict on duplicate rejection', () => {
    let view = ingestQueries(initialView(info()), [record('a')]);
    view = beginSubmit(view, 'a', 'salient')!;
    view = resolveSubmit(view, 'a', {
      kind: 'already-answered',
      detail: 'already answered',
    });
    expect(view.cards[0]!.phase).toBe('answered');
    expect(view.cards[0]!.note).toContain('already answered');
    expect(beginSubmit(view, 'a', 'salient')).toBeNull();
  });

  it('reopens the card after a transport failure so the user can retry', () => {
    let view = ingestQueries(initialView(info()), [record('a')]);
    view = beginSubmit(view, 'a', 'salient')!;
    view = failSubmit(view, 'a', 'network error');
    expect(view.cards[0]!.phase).toBe('open');
    expect(beginSubmit(view, 'a', 'background')).not.toBeNull();
  });

  it('unknown query ids become error cards', () => {
    let view = ingestQueries(initialView(info()), [record('a')]);
    view = beginSubmit(view, 'a', 'salient')!;
    view = resolveSubmit(view, 'a', { kind: 'not-found', detail: 'unknown query' });
    expect(view.cards[0]!.phase).toBe('error');
  });
});

describe('reconcile', () => {
  it('tracks the server counts while awaiting labels', () => {
    let view = ingestQueries(initialView(info()), [record('a'), record('b')]);
    view = reconcile(view, info({ answered: 1, pending: 1 }));
    expect(view.serverAnswered).toBe(1);
    expect(view.serverPending).toBe(1);
    expect(view.cards).toHaveLength(2); // queue survives while awaiting
  });

  it('clears the queue when the round trains or completes', () => {
    let view = ingestQueries(initialView(info()), [record('a')]);
    view = reconcile(view, info({ phase: 'training', pending: 0 }));
    expect(view.cards).toHaveLength(0);

    view = ingestQueries(view, [record('b')]);
    view = reconcile(
      view,
      info({
        phase: 'complete',
        metric_history: [{ round: 1, budget: 2, maxF: 0.9, avgF: 0.8, mae: 0.05 }],
      }),
    );
    expect(view.cards).toHaveLength(0);
    expect(view.phase).toBe('complete');
    expect(view.metricHistory).toHaveLength(1);
  });
});
