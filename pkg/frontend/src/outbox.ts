/**
 * Offline verdict queue.
 *
 * When a submit cannot reach the server the verdict is parked here instead of
 * being lost; the store shows a pending badge and flushes in order once the
 * network is back. Entries survive a reload when a storage backend is given.
 */

import type {
  AdjudicationSubmitBody,
  AnnotationSubmitBody,
  ScreenDecisionBody,
} from './types.js';

export type PendingSubmit =
  | { kind: 'screen'; body: ScreenDecisionBody }
  | { kind: 'annotation'; body: AnnotationSubmitBody }
  | { kind: 'adjudication'; body: AdjudicationSubmitBody };

/** Minimal persistence hook; window.localStorage satisfies it. */
export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class Outbox {
  private entries: PendingSubmit[] = [];

  constructor(
    private readonly storage: StorageLike | null = null,
    private readonly key = 'augloop-outbox',
  ) {
    const saved = storage?.getItem(this.key);
    if (saved) {
      this.entries = JSON.parse(saved) as PendingSubmit[];
    }
  }

  get size(): number {
    return this.entries.length;
  }

  /** Post ids with an unsent verdict, used to project them out of the queue. */
  postIds(): string[] {
    return this.entries.map((entry) => entry.body.post_id);
  }

  enqueue(entry: PendingSubmit): void {
    this.entries.push(entry);
    this.persist();
  }

  peek(): PendingSubmit | undefined {
    return this.entries[0];
  }

  shift(): PendingSubmit | undefined {
    const entry = this.entries.shift();
    this.persist();
    return entry;
  }

  private persist(): void {
    this.storage?.setItem(this.key, JSON.stringify(this.entries));
  }
}
