import { describe, expect, it } from 'vitest';
import { changedFrames, changedRuns, createDiffStrip } from '../src/diff.js';

function track(nFrames: number, ch: number, fill = 0): Float32Array {
  return new Float32Array(nFrames * ch).fill(fill);
}

describe('changedFrames', () => {
  it('is all-false for identical tracks', () => {
    const a = track(6, 4, 0.25);
    const mask = changedFrames(a, new Float32Array(a), 6);
    expect(mask).toEqual(new Array(6).fill(false));
  });

  it('marks a frame when any channel differs', () => {
    const a = track(6, 4);
    const b = new Float32Array(a);
    b[2 * 4 + 3] = 1e-8;
    expect(changedFrames(a, b, 6)).toEqual([false, false, true, false, false, false]);
  });

  it('rejects mismatched shapes', () => {
    expect(changedFrames(track(6, 4), track(5, 4), 6)).toBeNull();
    expect(changedFrames(track(6, 4), track(6, 4), 5)).toBeNull();
    expect(changedFrames(track(6, 4), track(6, 4), 0)).toBeNull();
  });
});

describe('changedRuns', () => {
  it('collapses a mask into [start, end) windows', () => {
    const mask = [false, true, true, false, true, false];
    expect(changedRuns(mask)).toEqual([
      { start: 1, end: 3 },
      { start: 4, end: 5 },
    ]);
  });

  it('closes a run that touches the end', () => {
    expect(changedRuns([true, false, true, true])).toEqual([
      { start: 0, end: 1 },
      { start: 2, end: 4 },
    ]);
  });

  it('handles empty and all-false masks', () => {
    expect(changedRuns([])).toEqual([]);
    expect(changedRuns([false, false])).toEqual([]);
  });
});

describe('createDiffStrip', () => {
  it('renders one block per changed run', () => {
    const host = document.createElement('div');
    const strip = createDiffStrip(host);
    strip.render([false, true, true, false, false, true], 6);
    expect(host.dataset.state).toBe('changed');
    const runs = Array.from(host.querySelectorAll('.diff-run'));
    expect(runs.map((r) => (r as HTMLElement).dataset.start)).toEqual(['1', '5']);
    expect(runs.map((r) => (r as HTMLElement).dataset.end)).toEqual(['3', '6']);
  });

  it('reports an identical parent distinctly from no parent', () => {
    const host = document.createElement('div');
    const strip = createDiffStrip(host);
    strip.render(new Array(4).fill(false), 4);
    expect(host.dataset.state).toBe('identical');
    expect(host.querySelectorAll('.diff-run')).toHaveLength(0);
    strip.render(null, 4);
    expect(host.dataset.state).toBe('empty');
  });

  it('clears back to the empty state', () => {
    const host = document.createElement('div');
    const strip = createDiffStrip(host);
    strip.render([true], 1);
    strip.clear();
    expect(host.dataset.state).toBe('empty');
    expect(host.querySelectorAll('.diff-run')).toHaveLength(0);
  });
});
