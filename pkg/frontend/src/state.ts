import type { ResultSummary } from './api.js';

// The view mirrors server history and never mutates results locally;
// everything here is which-document-am-I-looking-at bookkeeping.
export interface ViewState {
  sessionId: string | null;
  transcript: string;
  style: string;
  styles: string[];
  history: ResultSummary[];
  resultId: string | null;
  selection: number | null;
  cursor: number;
  busy: boolean;
  error: string | null;
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    transcript: '',
    style: 'neutral',
    styles: [],
    history: [],
    resultId: null,
    selection: null,
    cursor: 0,
    busy: false,
    error: null,
  };
}

export type Listener = (state: ViewState) => void;

export function createStore(seed: ViewState = initialViewState()) {
  let state = seed;
  const listeners = new Set<Listener>();
  return {
    get: () => state,
    patch(part: Partial<ViewState>) {
      state = { ...state, ...part };
      for (const fn of [...listeners]) fn(state);
    },
    subscribe(fn: Listener) {
      listeners.add(fn);
      return () => {
        listeners.delete(fn);
      };
    },
  };
}

export type Store = ReturnType<typeof createStore>;
