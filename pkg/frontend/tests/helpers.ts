/** Shared wiring: a store talking to one replayed section of the recording. */

import { ApiClient } from '../src/api.js';
import { SessionStore } from '../src/store.js';
import { FIXTURE_TOKEN, ReplayFetch, section, type RecordedSection } from './replay.js';

export interface Session {
  store: SessionStore;
  replay: ReplayFetch;
  data: RecordedSection;
}

export function makeAnnotatorSession(): Session {
  const data = section('annotation');
  const replay = new ReplayFetch(data);
  const client = new ApiClient(replay.fetch, '', FIXTURE_TOKEN);
  const store = new SessionStore(client, { role: 'annotator', identity: data.identity });
  return { store, replay, data };
}

export function makeScreenSession(screenOffset = 0): Session {
  const data = section('screen');
  const replay = new ReplayFetch(data);
  const client = new ApiClient(replay.fetch, '', FIXTURE_TOKEN);
  const store = new SessionStore(client, {
    role: 'screener',
    identity: data.identity,
    intent: data.intent,
    screenOffset,
  });
  return { store, replay, data };
}

export function makeJudgeSession(sectionName: string): Session {
  const data = section(sectionName);
  const replay = new ReplayFetch(data);
  const client = new ApiClient(replay.fetch, '', FIXTURE_TOKEN);
  const store = new SessionStore(client, { role: 'judge', identity: data.identity });
  return { store, replay, data };
}

/** Set the three synthetic rubric answers on a fresh form. */
export function setSynthetic(
  store: SessionStore,
  fits: boolean,
  fluent: boolean,
  fresh: boolean,
): void {
  const desired = { fits_intent: fits, fluent, non_repetitive: fresh } as const;
  for (const name of ['fits_intent', 'fluent', 'non_repetitive'] as const) {
    store.toggleSyntheticField(name);
    if (!desired[name]) store.toggleSyntheticField(name);
  }
}
