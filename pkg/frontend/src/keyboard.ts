/**
 * Keyboard-first verdict entry.
 *
 * actionForKey is a pure map from a key press to a store action name, so the
 * bindings are testable without a DOM; bindKeyboard is the thin event-listener
 * wrapper used by the app shell. Keys are inert while the focus sits in a
 * text field (the judge's rationale box) except Escape, which leaves it.
 */

import type { SessionStore } from './store.js';

export type KeyAction =
  | { type: 'toggle'; slot: 0 | 1 | 2 }
  | { type: 'pick'; index: number }
  | { type: 'adopt'; index: 0 | 1 }
  | { type: 'submit' }
  | { type: 'retry' }
  | { type: 'reload' };

export function actionForKey(key: string, role: SessionStore['role']): KeyAction | null {
  if (key === 'Enter') return { type: 'submit' };
  if (key === 'r') return { type: 'retry' };
  if (key === 'g') return { type: 'reload' };
  const digit = Number.parseInt(key, 10);
  if (!Number.isInteger(digit) || digit < 1 || digit > 9) return null;
  switch (role) {
    case 'screener':
    case 'annotator':
      // 1..3 toggle the three rubric slots; for real posts they pick a label
      if (digit <= 3) return { type: 'toggle', slot: (digit - 1) as 0 | 1 | 2 };
      return null;
    case 'judge':
      if (digit <= 2) return { type: 'adopt', index: (digit - 1) as 0 | 1 };
      return null;
  }
}

export function applyAction(store: SessionStore, action: KeyAction): void {
  switch (action.type) {
    case 'toggle': {
      const post = store.currentPost();
      if (!post) return;
      if (store.role === 'screener') {
        const names = ['relevance', 'completeness', 'clarity'] as const;
        store.toggleScreenField(names[action.slot]!);
      } else if (post.source === 'synthetic') {
        const names = ['fits_intent', 'fluent', 'non_repetitive'] as const;
        store.toggleSyntheticField(names[action.slot]!);
      } else {
        store.pickLabel(action.slot);
      }
      return;
    }
    case 'pick':
      store.pickLabel(action.index);
      return;
    case 'adopt':
      store.adoptVerdict(action.index);
      return;
    case 'submit':
      void store.submit();
      return;
    case 'retry':
      void store.retry();
      return;
    case 'reload':
      void store.loadQueue();
      return;
  }
}

export function bindKeyboard(target: Window, store: SessionStore): () => void {
  const onKeyDown = (event: KeyboardEvent) => {
    const element = event.target as HTMLElement | null;
    if (element instanceof HTMLInputElement || element instanceof HTMLTextAreaElement) {
      if (event.key === 'Escape') element.blur();
      return;
    }
    const action = actionForKey(event.key, store.role);
    if (action) {
      event.preventDefault();
      applyAction(store, action);
    }
  };
  target.addEventListener('keydown', onKeyDown);
  return () => target.removeEventListener('keydown', onKeyDown);
}
