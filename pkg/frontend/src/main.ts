/**
 * App shell: loads the static config, asks who is working, and wires the
 * store, keyboard, and renderer together. All state lives in the store; this
 * file only moves DOM events in and HTML out.
 */

import { ApiClient } from './api.js';
import { loadConfig } from './config.js';
import { bindKeyboard } from './keyboard.js';
import { Outbox } from './outbox.js';
import { SessionStore, type Role } from './store.js';
import { renderApp } from './view.js';

function rootElement(): HTMLElement {
  const element = document.getElementById('app');
  if (!element) throw new Error('index.html must contain <div id="app">');
  return element;
}

function identityForm(): string {
  return `<section class="login">
  <p>who is working this session?</p>
  <label>role:
    <select id="role">
      <option value="annotator">annotator</option>
      <option value="screener">screener</option>
      <option value="judge">judge</option>
    </select>
  </label>
  <label>identity: <input type="text" id="identity" placeholder="ann-a"></label>
  <label>intent (screeners only): <input type="text" id="intent" placeholder="costs"></label>
  <button id="start">start</button>
</section>`;
}

async function start(): Promise<void> {
  const root = rootElement();
  const config = await loadConfig((url, init) => fetch(url, init));
  root.innerHTML = identityForm();

  document.getElementById('start')!.addEventListener('click', () => {
    const role = (document.getElementById('role') as HTMLSelectElement).value as Role;
    const identity = (document.getElementById('identity') as HTMLInputElement).value.trim();
    const intent = (document.getElementById('intent') as HTMLInputElement).value.trim();
    if (!identity || (role === 'screener' && !intent)) return;

    const client = new ApiClient((url, init) => fetch(url, init), config.apiBase, config.token);
    const store = new SessionStore(client, {
      role,
      identity,
      intent: intent || undefined,
      noneLabel: config.noneLabel,
      outbox: new Outbox(window.localStorage),
    });

    const rerender = () => {
      root.innerHTML = renderApp(store);
      const rationale = document.getElementById('rationale') as HTMLInputElement | null;
      rationale?.addEventListener('change', () => store.setRationale(rationale.value));
      const tokenInput = document.getElementById('token') as HTMLInputElement | null;
      const loginButton = document.getElementById('login-submit');
      loginButton?.addEventListener('click', () => {
        if (tokenInput?.value) {
          client.setToken(tokenInput.value);
          store.needsLogin = false;
          void store.loadQueue();
        }
      });
    };
    store.subscribe(rerender);
    bindKeyboard(window, store);
    void store.loadQueue();
  });
}

void start();
