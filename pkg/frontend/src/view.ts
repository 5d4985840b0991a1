/**
 * HTML rendering as pure functions of the store state.
 *
 * Everything on screen comes straight out of the last API payloads plus the
 * unsent form, which keeps the render testable as plain strings and makes the
 * blindness property auditable: a verdict can only appear here if it arrived
 * inside a queue entry the server already filtered for this viewer.
 */

import type { SessionStore } from './store.js';
import type { AnnotationRecord, PostRecord } from './types.js';

export function escapeHtml(raw: string): string {
  return raw
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

function provenanceHint(post: PostRecord): string {
  if (post.source === 'synthetic' && post.seed_post_id) {
    return `generated from seed ${escapeHtml(post.seed_post_id)}`;
  }
  if (post.source === 'real' && post.origin_url) {
    return `harvested from ${escapeHtml(post.origin_url)}`;
  }
  return 'original corpus post';
}

function noticeBanner(store: SessionStore): string {
  const parts: string[] = [];
  if (store.networkDown) {
    parts.push('<div class="banner banner-network" data-banner="network">network unreachable; press r to retry</div>');
  }
  const notice = store.notice;
  if (notice && notice.kind !== 'network') {
    parts.push(
      `<div class="banner banner-${notice.kind}" data-banner="${notice.kind}">${escapeHtml(notice.message)}</div>`,
    );
  }
  return parts.join('\n');
}

function header(store: SessionStore): string {
  const outbox = store.outboxSize > 0
    ? ` <span class="badge badge-outbox" data-outbox="${store.outboxSize}">${store.outboxSize} queued offline</span>`
    : '';
  const scope = store.role === 'screener' ? ` / intent ${escapeHtml(store.intent)}` : '';
  return `<header>
  <span class="who">${escapeHtml(store.identity)} (${store.role}${scope})</span>
  <span class="count" data-count="${store.pendingCount}">${store.pendingCount} pending</span>${outbox}
</header>`;
}

function toggleRow(label: string, key: number, state: string): string {
  return `<div class="toggle" data-field="${escapeHtml(label)}"><kbd>${key}</kbd> ${escapeHtml(label)}: <b>${state}</b></div>`;
}

function screenCard(store: SessionStore): string {
  const post = store.currentPost();
  if (!post) return '';
  const f = store.screenForm;
  return `<section class="card" data-post="${escapeHtml(post.id)}">
  <p class="meta">post ${escapeHtml(post.id)} · ${provenanceHint(post)} · target intent: ${escapeHtml(post.label ?? '?')}</p>
  <p class="text">${escapeHtml(post.text)}</p>
  ${toggleRow('relevance', 1, f.relevance ?? 'unset')}
  ${toggleRow('completeness', 2, f.completeness ?? 'unset')}
  ${toggleRow('clarity', 3, f.clarity ?? 'unset')}
</section>`;
}

function annotationLines(records: AnnotationRecord[], viewer: string): string {
  // only records the server chose to show this viewer ever reach this point
  const peers = records.filter((record) => record.annotator_id !== viewer);
  if (peers.length === 0) return '';
  const rows = peers
    .map(
      (record) =>
        `<li class="peer" data-peer="${escapeHtml(record.annotator_id)}">${escapeHtml(record.annotator_id)} (rev ${record.revision}): ${escapeHtml(JSON.stringify(record.verdict))}</li>`,
    )
    .join('\n');
  return `<div class="discussion"><p>discussion open; peer verdicts:</p><ul>${rows}</ul></div>`;
}

function annotatorCard(store: SessionStore): string {
  const entry = store.currentAnnotationEntry();
  if (!entry) return '';
  const post = entry.post;
  let form: string;
  if (post.source === 'synthetic') {
    const f = store.syntheticForm;
    const show = (v: boolean | undefined) => (v === undefined ? 'unset' : v ? 'yes' : 'no');
    form = [
      toggleRow('fits the target intent', 1, show(f.fits_intent)),
      toggleRow('reads fluently', 2, show(f.fluent)),
      toggleRow('adds something new', 3, show(f.non_repetitive)),
    ].join('\n  ');
  } else {
    const rows = store
      .labelChoices()
      .map((label, i) => {
        const mark = store.labelForm.label === label ? ' <b>(picked)</b>' : '';
        return `<div class="toggle" data-label="${escapeHtml(label)}"><kbd>${i + 1}</kbd> ${escapeHtml(label)}${mark}</div>`;
      })
      .join('\n  ');
    form = rows;
  }
  return `<section class="card" data-post="${escapeHtml(post.id)}" data-status="${entry.status}">
  <p class="meta">post ${escapeHtml(post.id)} · ${provenanceHint(post)} · target intent: ${escapeHtml(post.label ?? '?')}</p>
  <p class="text">${escapeHtml(post.text)}</p>
  ${annotationLines(entry.visible_annotations, store.identity)}
  ${form}
</section>`;
}

function judgeCard(store: SessionStore): string {
  const entry = store.currentAdjudicationEntry();
  if (!entry) return '';
  const post = entry.post;
  const sides = entry.annotations
    .map(
      (record, i) =>
        `<div class="toggle" data-side="${escapeHtml(record.annotator_id)}"><kbd>${i + 1}</kbd> adopt ${escapeHtml(record.annotator_id)}: ${escapeHtml(JSON.stringify(record.verdict))}</div>`,
    )
    .join('\n  ');
  const chosen = store.judgeForm.verdict
    ? `<p class="chosen">chosen: ${escapeHtml(JSON.stringify(store.judgeForm.verdict))}</p>`
    : '<p class="chosen">no verdict chosen yet</p>';
  return `<section class="card" data-post="${escapeHtml(post.id)}">
  <p class="meta">post ${escapeHtml(post.id)} · ${provenanceHint(post)} · target intent: ${escapeHtml(post.label ?? '?')}</p>
  <p class="text">${escapeHtml(post.text)}</p>
  ${sides}
  ${chosen}
  <label>rationale: <input type="text" id="rationale" value="${escapeHtml(store.judgeForm.rationale)}"></label>
</section>`;
}

function doneState(store: SessionStore): string {
  if (store.outboxSize > 0) {
    return '<section class="done">all remaining verdicts are queued offline; press r to send</section>';
  }
  const message = store.role === 'judge' ? 'no disagreements' : 'queue is empty; all caught up';
  return `<section class="done" data-done="true">${message}</section>`;
}

function loginPrompt(): string {
  return `<section class="login" data-login="true">
  <p>session rejected (401/403); enter a valid API token</p>
  <label>token: <input type="password" id="token"></label>
  <button id="login-submit">sign in</button>
</section>`;
}

function footer(store: SessionStore): string {
  const keys =
    store.role === 'judge'
      ? '1/2 adopt a verdict · type rationale · Enter submit · g reload · r retry'
      : '1/2/3 toggle · Enter submit · g reload · r retry';
  const flight = store.inFlight ? ' · sending…' : '';
  return `<footer>${keys}${flight}</footer>`;
}

export function renderApp(store: SessionStore): string {
  if (store.needsLogin) {
    return [header(store), noticeBanner(store), loginPrompt()].filter(Boolean).join('\n');
  }
  let body: string;
  if (!store.currentPost()) {
    body = store.loaded ? doneState(store) : '<section class="loading">loading…</section>';
  } else {
    switch (store.role) {
      case 'screener':
        body = screenCard(store);
        break;
      case 'annotator':
        body = annotatorCard(store);
        break;
      case 'judge':
        body = judgeCard(store);
        break;
    }
  }
  return [header(store), noticeBanner(store), body, footer(store)].filter(Boolean).join('\n');
}
