// Drives the assembled page against a live datagen-backed service and
// checks every claim against documents fetched independently of the UI:
// timeline structure must equal the server trace, refinement diffs must
// stay inside the overridden window, and a reload must rebuild the same
// view from nothing but server history.
import { beforeAll, describe, expect, it } from 'vitest';
import { decodeTrack, type Client, type ResultDoc } from '../src/api.js';
import { changedFrames } from '../src/diff.js';
import {
  clickApplyRefine,
  mount,
  q,
  qa,
  rawClient,
  setSlider,
  submitText,
  typeTranscript,
  type Mounted,
} from './helpers.js';

function changedIndices(a: ResultDoc, b: ResultDoc): number[] {
  const mask = changedFrames(
    decodeTrack(a.stitched, a.n_frames),
    decodeTrack(b.stitched, b.n_frames),
    b.n_frames,
  );
  expect(mask).not.toBeNull();
  return (mask ?? []).flatMap((v, f) => (v ? [f] : []));
}

describe('transcript round-trip', () => {
  let m: Mounted;
  let server: Client;
  let sid: string;

  beforeAll(async () => {
    m = await mount();
    server = rawClient();
    const got = m.app.store.get().sessionId;
    if (!got) throw new Error('no session after mount');
    sid = got;
  });

  it('shows an empty session with style choices', () => {
    expect(q(m.root, '.session-label').textContent).toContain(sid);
    const styles = qa<HTMLOptionElement>(m.root, '.style-select option').map((o) => o.value);
    expect(styles).toContain('neutral');
    expect(styles).toContain('animated');
    expect(qa(m.root, '.history-item')).toHaveLength(0);
  });

  it('mirrors the server trace after submitting an edit', async () => {
    const rid = await submitText(m, 'people over fox');
    const doc = await server.getResult(sid, rid);

    expect(doc.provenance.segments.length).toBeGreaterThan(1);
    const blocks = qa(m.root, '.timeline-block');
    expect(blocks).toHaveLength(doc.provenance.segments.length);
    expect(blocks.map((b) => b.dataset.segment)).toEqual(
      doc.provenance.segments.map((_, i) => String(i)),
    );

    const marks = qa(m.root, '.timeline-boundary').map((el) => Number(el.dataset.frame));
    expect(marks).toEqual(doc.trace.boundary_frames);

    const dots = qa(m.root, '.timeline-closure').map((el) => Number(el.dataset.frame));
    expect(dots).toEqual(doc.trace.closures.map((c) => c.onset_frame));

    expect(q(m.root, '.result-id').textContent).toContain(rid);
    expect(qa(m.root, '.history-item')).toHaveLength(1);
  });

  it('keeps the identical result id when resubmitting unchanged text', async () => {
    const before = m.app.store.get().resultId;
    const historyBefore = qa(m.root, '.history-item').length;
    q<HTMLButtonElement>(m.root, '.submit-btn').click();
    await m.app.flush();
    expect(m.app.store.get().resultId).toBe(before);
    expect(qa(m.root, '.history-item')).toHaveLength(historyBefore);
  });

  it('synthesizes once for a double-clicked submit', async () => {
    const historyBefore = qa(m.root, '.history-item').length;
    typeTranscript(m, 'hi people');
    const btn = q<HTMLButtonElement>(m.root, '.submit-btn');
    btn.click();
    btn.click();
    await m.app.flush();
    expect(m.app.store.get().error).toBeNull();
    expect(qa(m.root, '.history-item')).toHaveLength(historyBefore + 1);
  });

  it('inserts a timed gesture directive from a chip', async () => {
    typeTranscript(m, 'good day');
    const input = q<HTMLTextAreaElement>(m.root, '.transcript-input');
    input.selectionStart = input.value.length;
    input.selectionEnd = input.value.length;
    q<HTMLButtonElement>(m.root, '.chip[data-name="closed_smile"]').click();
    expect(input.value).toBe('good day [closed_smile:1.5s]');
    expect(qa(m.root, '.transcript-spans .tok-gesture')).toHaveLength(1);

    q<HTMLButtonElement>(m.root, '.submit-btn').click();
    await m.app.flush();
    const state = m.app.store.get();
    expect(state.error).toBeNull();
    const doc = await server.getResult(sid, state.resultId ?? '');
    expect(doc.edit_text).toBe('good day [closed_smile:1.5s]');
  });

  it('reports an infeasible wording without disturbing the view', async () => {
    const before = m.app.store.get().resultId;
    const blocksBefore = qa(m.root, '.timeline-block').length;
    typeTranscript(m, 'cat dog');
    q<HTMLButtonElement>(m.root, '.submit-btn').click();
    await m.app.flush();
    expect(q(m.root, '.error-box').textContent).not.toBe('');
    expect(m.app.store.get().resultId).toBe(before);
    expect(qa(m.root, '.timeline-block')).toHaveLength(blocksBefore);
  });

  it('resynthesizes under a different style', async () => {
    const select = q<HTMLSelectElement>(m.root, '.style-select');
    select.value = 'animated';
    select.dispatchEvent(new Event('change', { bubbles: true }));
    const rid = await submitText(m, 'good day [closed_smile:1.5s]');
    const doc = await server.getResult(sid, rid);
    expect(doc.style).toBe('animated');
    expect(q(m.root, '.error-box').textContent).toBe('');
  });
});

describe('refine window confinement', () => {
  let m: Mounted;
  let server: Client;
  let sid: string;
  let baseId: string;
  let baseDoc: ResultDoc;

  beforeAll(async () => {
    m = await mount();
    server = rawClient();
    sid = m.app.store.get().sessionId ?? '';
    baseId = await submitText(m, 'people over fox');
    baseDoc = await server.getResult(sid, baseId);
    expect(baseDoc.trace.boundary_frames.length).toBeGreaterThan(0);
    expect(baseDoc.trace.closures.length).toBeGreaterThan(0);
  });

  it('confines a boundary radius change to the overridden window', async () => {
    const b0 = baseDoc.trace.boundary_frames[0] ?? 0;
    const rOld = baseDoc.trace.boundary_radii[0] ?? 0;
    expect(rOld).toBeGreaterThan(0);

    setSlider(m, '.refine-radius[data-boundary="0"]', 0);
    await clickApplyRefine(m);
    const rid = m.app.store.get().resultId ?? '';
    expect(rid).not.toBe(baseId);

    const doc = await server.getResult(sid, rid);
    expect(doc.parent).toBe(baseId);
    expect(doc.trace.boundary_radii[0]).toBe(0);
    expect(doc.trace.boundary_frames).toEqual(baseDoc.trace.boundary_frames);

    // server truth: frames outside [b0 - rOld, b0 + rOld] are bit-identical
    const changed = changedIndices(baseDoc, doc);
    expect(changed.length).toBeGreaterThan(0);
    for (const f of changed) {
      expect(f).toBeGreaterThanOrEqual(b0 - rOld);
      expect(f).toBeLessThanOrEqual(b0 + rOld);
    }

    // the diff view shows the same confinement
    expect(q(m.root, '.diff-host').dataset.state).toBe('changed');
    const runs = qa(m.root, '.diff-run');
    expect(runs.length).toBeGreaterThan(0);
    for (const run of runs) {
      expect(Number(run.dataset.start)).toBeGreaterThanOrEqual(b0 - rOld);
      expect(Number(run.dataset.end) - 1).toBeLessThanOrEqual(b0 + rOld);
    }
  });

  it('applies nothing when controls sit at the displayed trace', async () => {
    const before = m.app.store.get().resultId;
    const historyBefore = qa(m.root, '.history-item').length;
    await clickApplyRefine(m);
    expect(m.app.store.get().resultId).toBe(before);
    expect(qa(m.root, '.history-item')).toHaveLength(historyBefore);
  });

  it('marks exactly the affected frames when a closure grows', async () => {
    const parentId = m.app.store.get().resultId ?? '';
    const parentDoc = await server.getResult(sid, parentId);
    const mark = parentDoc.trace.closures[0];
    if (!mark) throw new Error('expected a closure to refine');
    const requested = mark.frames + 2;

    const stepper = q<HTMLInputElement>(
      m.root,
      `.closure-stepper[data-token="${mark.token_index}"]`,
    );
    stepper.value = String(requested);
    stepper.dispatchEvent(new Event('input', { bubbles: true }));
    await clickApplyRefine(m);

    const rid = m.app.store.get().resultId ?? '';
    expect(rid).not.toBe(parentId);
    const doc = await server.getResult(sid, rid);
    expect(doc.parent).toBe(parentId);

    const lo = mark.onset_frame;
    const hi = mark.onset_frame + Math.max(mark.frames, requested);
    const changed = changedIndices(parentDoc, doc);
    expect(changed.length).toBeGreaterThan(0);
    for (const f of changed) {
      expect(f).toBeGreaterThanOrEqual(lo);
      expect(f).toBeLessThan(hi);
    }
    for (const run of qa(m.root, '.diff-run')) {
      expect(Number(run.dataset.start)).toBeGreaterThanOrEqual(lo);
      expect(Number(run.dataset.end)).toBeLessThanOrEqual(hi);
    }
  });

  it('stacks refinements by keeping earlier overrides in the trace', async () => {
    const rid = m.app.store.get().resultId ?? '';
    const doc = await server.getResult(sid, rid);
    // the radius chosen two refinements ago still holds
    expect(doc.trace.boundary_radii[0]).toBe(0);
  });

  it('surfaces a rejected override without changing the view', async () => {
    const before = m.app.store.get().resultId;
    await m.app.applyRefine({ boundary_radius: { 99: 3 } });
    expect(q(m.root, '.error-box').textContent).not.toBe('');
    expect(m.app.store.get().resultId).toBe(before);
  });

  it('undo returns to the parent result', async () => {
    const childId = m.app.store.get().resultId ?? '';
    const childDoc = await server.getResult(sid, childId);
    if (!childDoc.parent) throw new Error('expected a refined result');
    q<HTMLButtonElement>(m.root, '.undo-btn').click();
    await m.app.flush();
    expect(m.app.store.get().resultId).toBe(childDoc.parent);
    expect(q(m.root, '.result-id').textContent).toContain(childDoc.parent);
    // history is server truth and keeps the undone child
    expect(qa(m.root, `.history-item[data-rid="${childId}"]`)).toHaveLength(1);
  });
});

describe('view reconstruction', () => {
  it('rebuilds the same view from server history alone', async () => {
    const first = await mount();
    const server = rawClient();
    const sid = first.app.store.get().sessionId ?? '';
    await submitText(first, 'good day');
    const rid = await submitText(first, 'hi people');
    const doc = await server.getResult(sid, rid);
    if (doc.trace.boundary_frames.length > 0) {
      const radius = doc.trace.boundary_radii[0] === 0 ? 1 : 0;
      setSlider(first, '.refine-radius[data-boundary="0"]', radius);
      await clickApplyRefine(first);
    }
    const session = await server.getSession(sid);
    expect(session.results.length).toBeGreaterThanOrEqual(2);
    const latest = session.results[session.results.length - 1];
    if (!latest) throw new Error('history is empty');

    const second = await mount({ sessionId: sid });
    const state = second.app.store.get();
    expect(state.sessionId).toBe(sid);
    expect(state.resultId).toBe(latest.result_id);
    expect(qa(second.root, '.history-item').map((el) => el.dataset.rid)).toEqual(
      session.results.map((r) => r.result_id),
    );

    const latestDoc = await server.getResult(sid, latest.result_id);
    expect(qa(second.root, '.timeline-block')).toHaveLength(latestDoc.provenance.segments.length);
    expect(qa(second.root, '.timeline-boundary').map((el) => Number(el.dataset.frame))).toEqual(
      latestDoc.trace.boundary_frames,
    );
    expect(q(second.root, '.result-id').textContent).toContain(latest.result_id);

    // the two mounts agree with each other, not just with the server
    expect(qa(second.root, '.timeline-block')).toHaveLength(
      qa(first.root, '.timeline-block').length,
    );
  });
});

describe('preview playback', () => {
  let m: Mounted;
  let server: Client;
  let doc: ResultDoc;

  beforeAll(async () => {
    m = await mount();
    server = rawClient();
    const sid = m.app.store.get().sessionId ?? '';
    const rid = await submitText(m, 'move the mouth');
    doc = await server.getResult(sid, rid);
  });

  it('draws the mouth outline the server computed', () => {
    expect(doc.preview).not.toBeNull();
    expect(doc.preview).toHaveLength(doc.n_frames);
    const points = q(m.root, '.preview-outline').getAttribute('points') ?? '';
    expect(points.split(' ')).toHaveLength(20);
    const tagged = Number(q(m.root, '.preview-stage').dataset.minApertureFrame);
    expect(tagged).toBeGreaterThanOrEqual(0);
    expect(tagged).toBeLessThan(doc.n_frames);
  });

  it('reports playback length from the frame count and rate', () => {
    const clock = q(m.root, '.preview-clock').textContent ?? '';
    expect(clock).toContain(`/${doc.n_frames}`);
    expect(clock).toContain(`${(doc.n_frames / doc.fps).toFixed(2)}s`);
    expect(q<HTMLInputElement>(m.root, '.preview-cursor').max).toBe(String(doc.n_frames - 1));
  });

  it('scrubs the cursor through the clip', () => {
    const range = q<HTMLInputElement>(m.root, '.preview-cursor');
    range.value = String(doc.n_frames - 1);
    range.dispatchEvent(new Event('input', { bubbles: true }));
    expect(q(m.root, '.preview-clock').textContent).toContain(
      `frame ${doc.n_frames}/${doc.n_frames}`,
    );
    expect(m.app.store.get().cursor).toBe(doc.n_frames - 1);
  });

  it('draws sparklines for the leading parameter channels', () => {
    const d = q(m.root, '.spark-0').getAttribute('d') ?? '';
    expect(d.startsWith('M')).toBe(true);
    expect(d.split('L')).toHaveLength(doc.n_frames);
  });
});
