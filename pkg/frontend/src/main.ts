import { createApp } from './app.js';

// Entry point for the static page. The API base can come from ?api=, from a
// previous visit, or default to a same-host service on the standard port.
const params = new URLSearchParams(window.location.search);
const stored = window.localStorage.getItem('phonosynth:api');
const apiBase = params.get('api') ?? stored ?? `http://${window.location.hostname}:8787`;
window.localStorage.setItem('phonosynth:api', apiBase);

const rootEl = document.getElementById('app');
if (!rootEl) throw new Error('missing #app element');

const app = createApp({
  root: rootEl,
  apiBase,
  sessionId: params.get('session'),
});

app.ready
  .then(() => {
    const sid = app.store.get().sessionId;
    if (sid && params.get('session') !== sid) {
      params.set('session', sid);
      window.history.replaceState(null, '', `?${params.toString()}`);
    }
  })
  .catch(() => {
    /* surfaced in the error box already */
  });

declare global {
  interface Window {
    __APP__?: ReturnType<typeof createApp>;
  }
}
window.__APP__ = app;
