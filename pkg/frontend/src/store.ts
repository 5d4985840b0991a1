/**
 * Session state for one identity working one queue.
 *
 * The state is a pure projection of the last API responses plus verdicts that
 * have not reached the server yet (the current form and the offline outbox).
 * Nothing else is cached, so a reload reconstructs the same view from the
 * server and no submitted verdict can be lost.
 *
 * Conflict contract: any 409 refetches the queue and shows a "changed
 * elsewhere" notice while leaving the in-form verdict untouched, so the
 * operator can re-check and resubmit without retyping.
 */

import { ApiClient, ApiError, NetworkError } from './api.js';
import { Outbox } from './outbox.js';
import type {
  AdjudicationQueueEntry,
  AnnotationQueueEntry,
  PostRecord,
  ScreenGrade,
  Verdict,
} from './types.js';

export type Role = 'screener' | 'annotator' | 'judge';

export interface Notice {
  kind: 'conflict' | 'offline' | 'network' | 'error' | 'info';
  message: string;
}

export interface ScreenForm {
  relevance?: ScreenGrade;
  completeness?: ScreenGrade;
  clarity?: ScreenGrade;
}

export interface SyntheticForm {
  fits_intent?: boolean;
  fluent?: boolean;
  non_repetitive?: boolean;
}

export interface LabelForm {
  label?: string;
}

export interface JudgeForm {
  verdict?: Verdict;
  rationale: string;
}

export interface SessionOptions {
  role: Role;
  identity: string;
  /** Screeners work one intent at a time. */
  intent?: string;
  /** Restored screen pagination offset; reset silently when stale. */
  screenOffset?: number;
  noneLabel?: string;
  outbox?: Outbox;
  pageSize?: number;
}

interface QueueData {
  screen?: { pending: number; posts: PostRecord[]; offset: number };
  annotation?: AnnotationQueueEntry[];
  adjudication?: AdjudicationQueueEntry[];
}

export class SessionStore {
  readonly role: Role;
  readonly identity: string;
  readonly intent: string;
  readonly noneLabel: string;

  loading = false;
  inFlight = false;
  needsLogin = false;
  networkDown = false;
  notice: Notice | null = null;

  screenForm: ScreenForm = {};
  syntheticForm: SyntheticForm = {};
  labelForm: LabelForm = {};
  judgeForm: JudgeForm = { rationale: '' };

  private queue: QueueData = {};
  private screenOffset: number;
  private readonly pageSize: number;
  private readonly outbox: Outbox;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly client: ApiClient,
    options: SessionOptions,
  ) {
    this.role = options.role;
    this.identity = options.identity;
    this.intent = options.intent ?? '';
    this.noneLabel = options.noneLabel ?? 'none_of_the_above';
    this.screenOffset = options.screenOffset ?? 0;
    this.pageSize = options.pageSize ?? 50;
    this.outbox = options.outbox ?? new Outbox();
    if (this.role === 'screener' && !this.intent) {
      throw new Error('a screener session needs an intent');
    }
  }

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  // -- projections ------------------------------------------------------------

  /** Count straight from the last API payload, minus locally queued verdicts. */
  get pendingCount(): number {
    const queuedHere = new Set(this.outbox.postIds());
    switch (this.role) {
      case 'screener': {
        const page = this.queue.screen;
        if (!page) return 0;
        return page.pending - page.posts.filter((p) => queuedHere.has(p.id)).length;
      }
      case 'annotator':
        return (this.queue.annotation ?? []).filter((e) => !queuedHere.has(e.post.id)).length;
      case 'judge':
        return (this.queue.adjudication ?? []).filter((e) => !queuedHere.has(e.post.id)).length;
    }
  }

  get outboxSize(): number {
    return this.outbox.size;
  }

  /** True once a load has happened and nothing is left to do. */
  get done(): boolean {
    return this.loaded && this.pendingCount === 0 && this.outbox.size === 0;
  }

  get loaded(): boolean {
    switch (this.role) {
      case 'screener':
        return this.queue.screen !== undefined;
      case 'annotator':
        return this.queue.annotation !== undefined;
      case 'judge':
        return this.queue.adjudication !== undefined;
    }
  }

  currentPost(): PostRecord | null {
    const queuedHere = new Set(this.outbox.postIds());
    switch (this.role) {
      case 'screener':
        return this.queue.screen?.posts.find((p) => !queuedHere.has(p.id)) ?? null;
      case 'annotator':
        return this.currentAnnotationEntry()?.post ?? null;
      case 'judge':
        return this.currentAdjudicationEntry()?.post ?? null;
    }
  }

  currentAnnotationEntry(): AnnotationQueueEntry | null {
    const queuedHere = new Set(this.outbox.postIds());
    return (this.queue.annotation ?? []).find((e) => !queuedHere.has(e.post.id)) ?? null;
  }

  currentAdjudicationEntry(): AdjudicationQueueEntry | null {
    const queuedHere = new Set(this.outbox.postIds());
    return (this.queue.adjudication ?? []).find((e) => !queuedHere.has(e.post.id)) ?? null;
  }

  /** Label choices offered when reviewing a real post. */
  labelChoices(): string[] {
    const post = this.currentPost();
    const choices: string[] = [];
    if (post?.label) choices.push(post.label);
    choices.push(this.noneLabel);
    return choices;
  }

  // -- queue loading ----------------------------------------------------------

  async loadQueue(): Promise<void> {
    this.loading = true;
    this.emit();
    try {
      switch (this.role) {
        case 'screener': {
          let page = await this.client.screenQueue(this.intent, this.screenOffset, this.pageSize);
          // a stale restored offset lands past the end; restart from page 1
          if (page.posts.length === 0 && page.pending > 0 && this.screenOffset > 0) {
            this.screenOffset = 0;
            page = await this.client.screenQueue(this.intent, 0, this.pageSize);
          }
          this.queue.screen = { pending: page.pending, posts: page.posts, offset: page.offset };
          break;
        }
        case 'annotator': {
          const payload = await this.client.annotationQueue(this.identity);
          this.queue.annotation = payload.posts;
          break;
        }
        case 'judge': {
          const payload = await this.client.adjudicationQueue();
          this.queue.adjudication = payload.posts;
          break;
        }
      }
      this.networkDown = false;
      if (this.notice?.kind === 'network') this.notice = null;
    } catch (error) {
      this.absorbFetchError(error);
    } finally {
      this.loading = false;
      this.emit();
    }
  }

  private absorbFetchError(error: unknown): void {
    if (error instanceof ApiError && (error.status === 401 || error.status === 403)) {
      this.needsLogin = true;
      return;
    }
    if (error instanceof NetworkError) {
      // keep whatever queue data is on screen; just show the retry banner
      this.networkDown = true;
      this.notice = { kind: 'network', message: 'network unreachable; data kept, retry when back' };
      return;
    }
    if (error instanceof ApiError) {
      this.notice = { kind: 'error', message: error.message };
      return;
    }
    throw error;
  }

  // -- form editing -----------------------------------------------------------

  toggleScreenField(name: keyof ScreenForm): void {
    const current = this.screenForm[name];
    this.screenForm[name] = current === 'pass' ? 'fail' : 'pass';
    this.emit();
  }

  toggleSyntheticField(name: keyof SyntheticForm): void {
    const current = this.syntheticForm[name];
    this.syntheticForm[name] = current === undefined ? true : !current;
    this.emit();
  }

  pickLabel(index: number): void {
    const choices = this.labelChoices();
    const label = choices[index];
    if (label !== undefined) {
      this.labelForm.label = label;
      this.emit();
    }
  }

  adoptVerdict(annotatorIndex: number): void {
    const entry = this.currentAdjudicationEntry();
    const record = entry?.annotations[annotatorIndex];
    if (record) {
      this.judgeForm.verdict = record.verdict;
      this.emit();
    }
  }

  setRationale(text: string): void {
    this.judgeForm.rationale = text;
    this.emit();
  }

  formComplete(): boolean {
    const post = this.currentPost();
    if (!post) return false;
    switch (this.role) {
      case 'screener':
        return Boolean(this.screenForm.relevance && this.screenForm.completeness && this.screenForm.clarity);
      case 'annotator':
        if (post.source === 'synthetic') {
          const f = this.syntheticForm;
          return f.fits_intent !== undefined && f.fluent !== undefined && f.non_repetitive !== undefined;
        }
        return Boolean(this.labelForm.label);
      case 'judge':
        return Boolean(this.judgeForm.verdict && this.judgeForm.rationale.trim());
    }
  }

  private resetForm(): void {
    this.screenForm = {};
    this.syntheticForm = {};
    this.labelForm = {};
    this.judgeForm = { rationale: '' };
  }

  // -- submitting -------------------------------------------------------------

  async submit(): Promise<void> {
    const post = this.currentPost();
    if (!post || this.inFlight || !this.formComplete()) return;
    this.inFlight = true;
    this.emit();
    try {
      await this.send(post);
      this.resetForm();
      this.notice = null;
      await this.loadQueue();
    } catch (error) {
      if (error instanceof NetworkError) {
        this.stash(post);
      } else if (error instanceof ApiError && error.status === 409) {
        // someone else wrote first: refetch, tell the operator, keep the form
        this.notice = { kind: 'conflict', message: `changed elsewhere: ${error.message}` };
        await this.loadQueue();
      } else if (error instanceof ApiError && (error.status === 401 || error.status === 403)) {
        this.needsLogin = true;
      } else if (error instanceof ApiError) {
        this.notice = { kind: 'error', message: error.message };
      } else {
        throw error;
      }
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  private async send(post: PostRecord): Promise<void> {
    switch (this.role) {
      case 'screener': {
        const f = this.screenForm;
        await this.client.submitScreenDecision({
          post_id: post.id,
          relevance: f.relevance!,
          completeness: f.completeness!,
          clarity: f.clarity!,
          reviewer_id: this.identity,
        });
        return;
      }
      case 'annotator': {
        const entry = this.currentAnnotationEntry()!;
        await this.client.submitAnnotation({
          post_id: post.id,
          annotator_id: this.identity,
          verdict: this.buildAnnotationVerdict(post),
          expected_version: entry.version,
        });
        return;
      }
      case 'judge': {
        const entry = this.currentAdjudicationEntry()!;
        await this.client.submitAdjudication({
          post_id: post.id,
          judge_id: this.identity,
          verdict: this.judgeForm.verdict!,
          rationale: this.judgeForm.rationale,
          expected_version: entry.version,
        });
        return;
      }
    }
  }

  private buildAnnotationVerdict(post: PostRecord): Verdict {
    if (post.source === 'synthetic') {
      const f = this.syntheticForm;
      return {
        fits_intent: f.fits_intent!,
        fluent: f.fluent!,
        non_repetitive: f.non_repetitive!,
      };
    }
    return { label: this.labelForm.label! };
  }

  /** Park the finished verdict offline and move on to the next item. */
  private stash(post: PostRecord): void {
    switch (this.role) {
      case 'screener': {
        const f = this.screenForm;
        this.outbox.enqueue({
          kind: 'screen',
          body: {
            post_id: post.id,
            relevance: f.relevance!,
            completeness: f.completeness!,
            clarity: f.clarity!,
            reviewer_id: this.identity,
          },
        });
        break;
      }
      case 'annotator': {
        const entry = this.currentAnnotationEntry()!;
        this.outbox.enqueue({
          kind: 'annotation',
          body: {
            post_id: post.id,
            annotator_id: this.identity,
            verdict: this.buildAnnotationVerdict(post),
            expected_version: entry.version,
          },
        });
        break;
      }
      case 'judge': {
        const entry = this.currentAdjudicationEntry()!;
        this.outbox.enqueue({
          kind: 'adjudication',
          body: {
            post_id: post.id,
            judge_id: this.identity,
            verdict: this.judgeForm.verdict!,
            rationale: this.judgeForm.rationale,
            expected_version: entry.version,
          },
        });
        break;
      }
    }
    this.networkDown = true;
    this.resetForm();
    this.notice = { kind: 'offline', message: 'offline; verdict queued locally' };
  }

  /** Send parked verdicts in order; stops quietly if still offline. */
  async flushOutbox(): Promise<number> {
    let sent = 0;
    while (this.outbox.size > 0) {
      const entry = this.outbox.peek()!;
      try {
        switch (entry.kind) {
          case 'screen':
            await this.client.submitScreenDecision(entry.body);
            break;
          case 'annotation':
            await this.client.submitAnnotation(entry.body);
            break;
          case 'adjudication':
            await this.client.submitAdjudication(entry.body);
            break;
        }
        this.outbox.shift();
        sent += 1;
      } catch (error) {
        if (error instanceof NetworkError) {
          this.networkDown = true;
          this.emit();
          return sent;
        }
        // the server rejected a parked verdict; drop it and surface why
        this.outbox.shift();
        if (error instanceof ApiError && error.status === 409) {
          this.notice = { kind: 'conflict', message: `queued verdict superseded: ${error.message}` };
        } else if (error instanceof ApiError) {
          this.notice = { kind: 'error', message: `queued verdict rejected: ${error.message}` };
        } else {
          throw error;
        }
      }
    }
    this.networkDown = false;
    if (sent > 0 && this.notice?.kind === 'offline') this.notice = null;
    this.emit();
    return sent;
  }

  /** Retry banner action: flush anything parked, then refetch once. */
  async retry(): Promise<void> {
    await this.flushOutbox();
    if (!this.networkDown) {
      await this.loadQueue();
    }
  }
}
