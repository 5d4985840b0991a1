/**
 * Static deployment configuration.
 *
 * The UI is plain files behind any web server, so configuration is one more
 * static file next to index.html rather than a build-time constant. The file
 * is fetched once at boot.
 */

import type { FetchLike } from './api.js';

export interface AppConfig {
  /** API origin; empty string means same origin as the static files. */
  apiBase: string;
  /** Bearer token sent on every /api request; empty disables the header. */
  token: string;
  /** Label offered alongside the focal intent when reviewing real posts. */
  noneLabel: string;
}

const DEFAULTS: AppConfig = {
  apiBase: '',
  token: '',
  noneLabel: 'none_of_the_above',
};

export async function loadConfig(
  fetchLike: FetchLike,
  url = './config.json',
): Promise<AppConfig> {
  const response = await fetchLike(url, { method: 'GET' });
  if (!response.ok) {
    throw new Error(`cannot load ${url}: HTTP ${response.status}`);
  }
  const raw = (await response.json()) as Partial<AppConfig>;
  return { ...DEFAULTS, ...raw };
}
