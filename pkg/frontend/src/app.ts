import {
  ApiError,
  createClient,
  decodeTrack,
  type FetchLike,
  type Overrides,
  type ResultDoc,
} from './api.js';
import { createStore, type Store } from './state.js';
import { insertGesture, tokenizeTranscript } from './directives.js';
import { createTimeline } from './timeline.js';
import { changedFrames, createDiffStrip } from './diff.js';
import { createPreviewPlayer } from './preview.js';
import { createRefinePanel } from './refine.js';

// Gesture names the bundled fixture generator annotates; chips are only a
// typing shortcut, any name can still be written by hand.
export const GESTURE_CHIPS = [
  'closed_smile',
  'teeth_smile',
  'big_smile',
  'sad',
  'scream',
  'mouth_left',
  'mouth_right',
];
const CHIP_DURATION_S = 1.5;

export interface AppOptions {
  root: HTMLElement;
  apiBase: string;
  fetchImpl?: FetchLike;
  /** Resume an existing session; the view is rebuilt from server history. */
  sessionId?: string | null;
  style?: string;
}

interface CachedResult {
  doc: ResultDoc;
  stitched: Float32Array;
  final: Float32Array;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function createApp(options: AppOptions) {
  const client = createClient(options.apiBase, options.fetchImpl);
  const store: Store = createStore();
  const cache = new Map<string, CachedResult>();
  let currentDiff: boolean[] | null = null;

  // ---- static skeleton ----
  const root = options.root;
  root.classList.add('app');
  root.textContent = '';

  const header = el('header', 'app-header');
  header.appendChild(el('h1', 'app-title', 'phonosynth'));
  const sessionLabel = el('span', 'session-label', '');
  header.appendChild(sessionLabel);
  const styleWrap = el('label', 'style-wrap', 'style ');
  const styleSelect = el('select', 'style-select');
  styleWrap.appendChild(styleSelect);
  header.appendChild(styleWrap);
  const resultLabel = el('span', 'result-id', '');
  header.appendChild(resultLabel);
  root.appendChild(header);

  const editor = el('section', 'editor-panel');
  const transcript = el('textarea', 'transcript-input');
  transcript.rows = 2;
  transcript.placeholder = 'type the new wording, gestures like [closed_smile:1.5s]';
  editor.appendChild(transcript);
  const spansRow = el('div', 'transcript-spans');
  editor.appendChild(spansRow);
  const chipRow = el('div', 'chip-row');
  for (const name of GESTURE_CHIPS) {
    const chip = el('button', 'chip', name);
    chip.type = 'button';
    chip.dataset.name = name;
    chipRow.appendChild(chip);
  }
  editor.appendChild(chipRow);
  const actionsRow = el('div', 'editor-actions');
  const submitBtn = el('button', 'submit-btn', 'Synthesize');
  submitBtn.type = 'button';
  actionsRow.appendChild(submitBtn);
  editor.appendChild(actionsRow);
  const errorBox = el('div', 'error-box');
  editor.appendChild(errorBox);
  root.appendChild(editor);

  const main = el('div', 'main-grid');
  const timelinePanel = el('section', 'timeline-panel');
  timelinePanel.appendChild(el('h2', undefined, 'Timeline'));
  const timelineHost = el('div', 'timeline-host');
  timelinePanel.appendChild(timelineHost);
  const diffHost = el('div', 'diff-host');
  timelinePanel.appendChild(diffHost);
  const segmentDetail = el('div', 'segment-detail');
  timelinePanel.appendChild(segmentDetail);
  main.appendChild(timelinePanel);

  const refineSection = el('section', 'refine-panel');
  refineSection.appendChild(el('h2', undefined, 'Refine'));
  const refineHost = el('div', 'refine-host');
  refineSection.appendChild(refineHost);
  main.appendChild(refineSection);

  const previewSection = el('section', 'preview-panel');
  previewSection.appendChild(el('h2', undefined, 'Preview'));
  const previewHost = el('div', 'preview-host');
  previewSection.appendChild(previewHost);
  main.appendChild(previewSection);
  root.appendChild(main);

  const historyPanel = el('aside', 'history-panel');
  historyPanel.appendChild(el('h2', undefined, 'History'));
  const historyList = el('ul', 'history-list');
  historyPanel.appendChild(historyList);
  root.appendChild(historyPanel);

  // ---- components ----
  const timeline = createTimeline(timelineHost, {
    onSelect: (segment) => {
      store.patch({ selection: segment });
      renderResult();
    },
  });
  const diffStrip = createDiffStrip(diffHost);
  const preview = createPreviewPlayer(previewHost, {
    onSeek: (frame) => store.patch({ cursor: frame }),
  });
  const refinePanel = createRefinePanel(refineHost, {
    onApply: (overrides) => void applyRefine(overrides),
    onUndo: () => void undo(),
  });

  // ---- rendering ----
  function renderSpans() {
    spansRow.textContent = '';
    for (const span of tokenizeTranscript(store.get().transcript)) {
      const node = el('span', `tok tok-${span.kind}`, span.text);
      if (span.kind === 'invalid') node.title = 'unparseable directive';
      spansRow.appendChild(node);
    }
  }

  function renderChrome() {
    const state = store.get();
    sessionLabel.textContent = state.sessionId ? `session ${state.sessionId}` : 'connecting';
    resultLabel.textContent = state.resultId ? `result ${state.resultId}` : '';
    submitBtn.disabled = state.busy;
    errorBox.textContent = state.error ?? '';
    root.classList.toggle('busy', state.busy);
    if (styleSelect.options.length !== state.styles.length) {
      styleSelect.textContent = '';
      for (const s of state.styles) {
        const opt = document.createElement('option');
        opt.value = s;
        opt.textContent = s;
        styleSelect.appendChild(opt);
      }
    }
    if (state.style) styleSelect.value = state.style;
  }

  function renderHistory() {
    const state = store.get();
    historyList.textContent = '';
    for (const item of state.history) {
      const li = el('li', 'history-item');
      li.dataset.rid = item.result_id;
      if (item.result_id === state.resultId) li.classList.add('selected');
      const mark = item.parent ? `↻ ${item.parent} ` : '';
      li.textContent = `${item.result_id} · ${mark}${item.edit_text} [${item.style}]`;
      li.addEventListener('click', () => void show(item.result_id));
      historyList.appendChild(li);
    }
  }

  function renderSegmentDetail(doc: ResultDoc, selection: number | null) {
    if (selection === null) {
      segmentDetail.textContent = `total cost ${doc.provenance.total_cost.toFixed(3)} · ${
        doc.provenance.segments.length
      } segments · ${doc.n_frames} frames @ ${doc.fps} fps`;
      return;
    }
    const seg = doc.provenance.segments[selection];
    if (!seg) {
      segmentDetail.textContent = '';
      return;
    }
    segmentDetail.textContent =
      `segment ${selection}: repo ${seg.repo_start_s.toFixed(2)}s → ` +
      `${seg.repo_end_s.toFixed(2)}s · tokens ${seg.core_start}–${seg.core_end} · ` +
      `match ${seg.match_cost.toFixed(3)} length ${seg.length_cost.toFixed(3)}`;
  }

  function renderResult() {
    const state = store.get();
    const entry = state.resultId ? cache.get(state.resultId) : undefined;
    if (!entry) {
      diffStrip.clear();
      segmentDetail.textContent = '';
      renderChrome();
      renderHistory();
      return;
    }
    timeline.render(entry.doc, state.selection);
    refinePanel.render(entry.doc);
    diffStrip.render(currentDiff, entry.doc.n_frames);
    renderSegmentDetail(entry.doc, state.selection);
    renderChrome();
    renderHistory();
  }

  // ---- data flow ----
  let inflight: Promise<void> = Promise.resolve();

  function queue(fn: () => Promise<void>): Promise<void> {
    inflight = inflight.then(fn).catch((err) => {
      const msg = err instanceof ApiError ? err.message : String(err);
      store.patch({ busy: false, error: msg });
      renderChrome();
    });
    return inflight;
  }

  async function fetchResult(rid: string): Promise<CachedResult> {
    const hit = cache.get(rid);
    if (hit) return hit;
    const state = store.get();
    if (!state.sessionId) throw new Error('no session yet');
    const doc = await client.getResult(state.sessionId, rid);
    const entry: CachedResult = {
      doc,
      stitched: decodeTrack(doc.stitched, doc.n_frames),
      final: decodeTrack(doc.track, doc.n_frames),
    };
    cache.set(rid, entry);
    return entry;
  }

  async function refreshHistory(): Promise<void> {
    const state = store.get();
    if (!state.sessionId) return;
    const doc = await client.getSession(state.sessionId);
    store.patch({ history: doc.results });
  }

  async function displayResult(rid: string): Promise<void> {
    const entry = await fetchResult(rid);
    currentDiff = null;
    if (entry.doc.parent) {
      const parent = await fetchResult(entry.doc.parent);
      currentDiff = changedFrames(parent.stitched, entry.stitched, entry.doc.n_frames);
    }
    store.patch({ resultId: rid, selection: null, cursor: 0, error: null });
    preview.load(entry.doc, entry.final);
    renderResult();
  }

  function show(rid: string): Promise<void> {
    return queue(() => displayResult(rid));
  }

  function submit(): Promise<void> {
    return queue(async () => {
      const state = store.get();
      if (!state.sessionId || state.busy) return;
      const text = state.transcript.trim();
      if (!text) return;
      const shown = state.resultId ? cache.get(state.resultId)?.doc : undefined;
      if (shown && shown.edit_text === text && shown.style === state.style) {
        // unchanged resubmit: keep the identical result id, drop stale errors
        store.patch({ error: null });
        renderChrome();
        return;
      }
      store.patch({ busy: true, error: null });
      renderChrome();
      try {
        const rid = await client.submitEdit(state.sessionId, text, state.style);
        await refreshHistory();
        await displayResult(rid);
      } catch (err) {
        if (err instanceof ApiError) {
          // the shown result stays; nothing was promised optimistically
          store.patch({ error: err.message });
        } else {
          throw err;
        }
      } finally {
        store.patch({ busy: false });
        renderChrome();
        renderHistory();
      }
    });
  }

  function applyRefine(overrides: Overrides): Promise<void> {
    return queue(async () => {
      const state = store.get();
      if (!state.sessionId || !state.resultId || state.busy) return;
      const hasAny =
        Object.keys(overrides.boundary_radius ?? {}).length > 0 ||
        Object.keys(overrides.closures ?? {}).length > 0;
      if (!hasAny) return;
      store.patch({ busy: true, error: null });
      renderChrome();
      try {
        const rid = await client.refine(state.sessionId, state.resultId, overrides);
        await refreshHistory();
        await displayResult(rid);
      } catch (err) {
        if (err instanceof ApiError) {
          store.patch({ error: err.message });
        } else {
          throw err;
        }
      } finally {
        store.patch({ busy: false });
        renderChrome();
        renderHistory();
      }
    });
  }

  function undo(): Promise<void> {
    return queue(async () => {
      const state = store.get();
      const entry = state.resultId ? cache.get(state.resultId) : undefined;
      if (entry?.doc.parent) await displayResult(entry.doc.parent);
    });
  }

  // ---- events ----
  transcript.addEventListener('input', () => {
    store.patch({ transcript: transcript.value });
    renderSpans();
  });
  styleSelect.addEventListener('change', () => {
    store.patch({ style: styleSelect.value });
  });
  chipRow.addEventListener('click', (e) => {
    const target = e.target as HTMLElement;
    const name = target.dataset?.name;
    if (!name) return;
    const pos = transcript.selectionStart ?? transcript.value.length;
    const next = insertGesture(transcript.value, pos, name, CHIP_DURATION_S);
    transcript.value = next.text;
    transcript.selectionStart = next.cursor;
    transcript.selectionEnd = next.cursor;
    transcript.focus();
    store.patch({ transcript: next.text });
    renderSpans();
  });
  submitBtn.addEventListener('click', () => void submit());

  // ---- bootstrap ----
  const ready = queue(async () => {
    const health = await client.health();
    const doc = options.sessionId
      ? await client.getSession(options.sessionId)
      : await client.createSession(options.style ?? health.styles[0] ?? 'neutral');
    store.patch({
      sessionId: doc.session_id,
      style: doc.style,
      styles: doc.styles,
      history: doc.results,
    });
    const last = doc.results[doc.results.length - 1];
    if (last) {
      await displayResult(last.result_id);
    } else {
      renderChrome();
      renderHistory();
    }
  });

  return {
    store,
    client,
    ready,
    submit,
    applyRefine,
    undo,
    show,
    flush: () => inflight,
    dispose: () => preview.dispose(),
  };
}

export type App = ReturnType<typeof createApp>;
