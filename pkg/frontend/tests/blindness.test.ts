/**
 * Annotator blindness: across a complete session the UI never asks the
 * network for another annotator's verdict, and a peer verdict appears on
 * screen only once the server itself includes it (discussion round open).
 */

import { describe, expect, it } from 'vitest';

import { renderApp } from '../src/view.js';
import type { AnnotationQueuePayload, AnnotationSubmitBody } from '../src/types.js';
import { makeAnnotatorSession, setSynthetic } from './helpers.js';
import { section } from './replay.js';

describe('annotator blindness', () => {
  it('a full session never requests the peer verdict', async () => {
    const { store, replay } = makeAnnotatorSession();
    await store.loadQueue();

    // cand-01: straight accept
    setSynthetic(store, true, true, true);
    await store.submit();

    // cand-02: accept; the first attempt hits a stale-version conflict
    setSynthetic(store, true, true, true);
    await store.submit();
    expect(store.notice?.kind).toBe('conflict');
    await store.submit();

    // cand-03: straight accept
    setSynthetic(store, true, true, true);
    await store.submit();

    // cand-04 is pending_two: the peer verdict exists server-side but must
    // be invisible here, in the payload and on screen
    const entry = store.currentAnnotationEntry()!;
    expect(entry.status).toBe('pending_two');
    expect(entry.visible_annotations).toHaveLength(0);
    let html = renderApp(store);
    expect(html).not.toContain('data-peer');
    expect(html).not.toContain('ann-b');

    setSynthetic(store, true, true, true);
    await store.submit();

    // the disagreement opened the discussion round: now, and only now, the
    // server exposes both verdicts and the card may show the peer's
    const discussion = store.currentAnnotationEntry()!;
    expect(discussion.status).toBe('disagreed');
    html = renderApp(store);
    expect(html).toContain('data-peer="ann-b"');

    // concede so the round resolves and the queue drains
    setSynthetic(store, false, true, true);
    await store.submit();
    expect(store.done).toBe(true);
    expect(renderApp(store)).toContain('all caught up');
    expect(replay.remaining()).toBe(0);

    // the network log is the proof: every request is this annotator's own
    // queue or verdict; nothing can name or fetch the peer
    expect(replay.log.length).toBeGreaterThan(0);
    for (const request of replay.log) {
      const url = new URL(request.path, 'http://unit.test');
      expect(['/api/queues/annotation', '/api/annotations']).toContain(url.pathname);
      const annotator = url.searchParams.get('annotator');
      if (annotator !== null) expect(annotator).toBe('ann-a');
      if (request.body !== null) {
        expect((request.body as AnnotationSubmitBody).annotator_id).toBe('ann-a');
      }
    }
  });

  it('recorded queue payloads withhold the peer verdict until both are in', () => {
    const data = section('annotation');
    let audited = 0;
    for (const exchange of data.exchanges) {
      if (exchange.request.method !== 'GET') continue;
      const payload = exchange.response.body as AnnotationQueuePayload;
      for (const entry of payload.posts) {
        if (entry.status === 'pending_one' || entry.status === 'pending_two') {
          expect(entry.visible_annotations.every((r) => r.annotator_id === 'ann-a')).toBe(true);
          audited += 1;
        }
      }
    }
    expect(audited).toBeGreaterThan(0);
  });
});
