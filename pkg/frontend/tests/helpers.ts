import { inject } from 'vitest';
import { createApp, type App, type AppOptions } from '../src/app.js';
import {
  createClient,
  type Client,
  type FetchLike,
  type ProvenanceSegment,
  type ResultDoc,
} from '../src/api.js';

export function apiBase(): string {
  return inject('apiBase');
}

// jsdom has no fetch of its own; Node's implementation handles the
// absolute URLs the client always uses.
export const liveFetch: FetchLike = (input, init) => fetch(input, init);

export function rawClient(): Client {
  return createClient(apiBase(), liveFetch);
}

export interface Mounted {
  app: App;
  root: HTMLElement;
}

export async function mount(overrides: Partial<AppOptions> = {}): Promise<Mounted> {
  const root = document.createElement('div');
  document.body.appendChild(root);
  const app = createApp({
    root,
    apiBase: apiBase(),
    fetchImpl: liveFetch,
    style: 'neutral',
    ...overrides,
  });
  await app.ready;
  return { app, root };
}

export function q<T extends HTMLElement = HTMLElement>(scope: ParentNode, sel: string): T {
  const node = scope.querySelector(sel);
  if (!node) throw new Error(`no element matches ${sel}`);
  return node as T;
}

export function qa<T extends HTMLElement = HTMLElement>(scope: ParentNode, sel: string): T[] {
  return Array.from(scope.querySelectorAll(sel)) as T[];
}

export function typeTranscript(m: Mounted, text: string): void {
  const input = q<HTMLTextAreaElement>(m.root, '.transcript-input');
  input.value = text;
  input.dispatchEvent(new Event('input', { bubbles: true }));
}

/** Type text, click submit, wait for the queue to drain. */
export async function submitText(m: Mounted, text: string): Promise<string> {
  typeTranscript(m, text);
  q<HTMLButtonElement>(m.root, '.submit-btn').click();
  await m.app.flush();
  const state = m.app.store.get();
  if (state.error) throw new Error(`submit failed: ${state.error}`);
  if (!state.resultId) throw new Error('submit produced no result');
  return state.resultId;
}

export function setSlider(m: Mounted, sel: string, value: number): void {
  const el = q<HTMLInputElement>(m.root, sel);
  el.value = String(value);
  el.dispatchEvent(new Event('input', { bubbles: true }));
}

export async function clickApplyRefine(m: Mounted): Promise<void> {
  q<HTMLButtonElement>(m.root, '.apply-refine').click();
  await m.app.flush();
}

export function fakeSegment(over: Partial<ProvenanceSegment> = {}): ProvenanceSegment {
  return {
    core_start: 0,
    core_end: 1,
    repo_start: 0,
    repo_end: 10,
    repo_start_s: 0.0,
    repo_end_s: 0.333,
    match_cost: 0.5,
    length_cost: 0.1,
    ...over,
  };
}

/** A consistent in-memory result document for component tests.
 * Segments are derived from the boundary list unless given explicitly. */
export function fakeResult(over: Partial<ResultDoc> = {}): ResultDoc {
  const nFrames = over.n_frames ?? 12;
  const trace = over.trace ?? {
    n_frames: nFrames,
    frame_segments: new Array<number>(nFrames).fill(0),
    frame_source_times: new Array<number>(nFrames).fill(0),
    boundary_frames: [],
    boundary_radii: [],
    closures: [],
  };
  const nSegments = trace.boundary_frames.length + 1;
  const segments =
    over.provenance?.segments ??
    Array.from({ length: nSegments }, (_, i) => fakeSegment({ repo_start_s: i * 2.0 }));
  return {
    result_id: 'r-fake',
    parent: null,
    edit_text: 'hello there',
    style: 'neutral',
    fps: 30,
    n_frames: nFrames,
    track: '',
    stitched: '',
    preview: null,
    ...over,
    trace,
    provenance: { total_cost: 1.0, segments },
  };
}
