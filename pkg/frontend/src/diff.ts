// Frame-level comparison between a result and its parent. Stitched tracks
// are compared, not retargeted ones: a refinement's true footprint is the
// set of frames the stitching stage touched, while the retargeting net
// smears any change across its sliding window.

export function changedFrames(
  a: Float32Array,
  b: Float32Array,
  nFrames: number,
): boolean[] | null {
  if (nFrames <= 0 || a.length !== b.length || a.length % nFrames !== 0) return null;
  const ch = a.length / nFrames;
  const mask: boolean[] = new Array(nFrames).fill(false);
  for (let f = 0; f < nFrames; f++) {
    const base = f * ch;
    for (let c = 0; c < ch; c++) {
      if (a[base + c] !== b[base + c]) {
        mask[f] = true;
        break;
      }
    }
  }
  return mask;
}

/** Contiguous true runs as [start, end) frame windows. */
export function changedRuns(mask: boolean[]): Array<{ start: number; end: number }> {
  const runs: Array<{ start: number; end: number }> = [];
  let start = -1;
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] && start < 0) start = i;
    if (!mask[i] && start >= 0) {
      runs.push({ start, end: i });
      start = -1;
    }
  }
  if (start >= 0) runs.push({ start, end: mask.length });
  return runs;
}

const pct = (x: number) => `${(x * 100).toFixed(3)}%`;

export function createDiffStrip(container: HTMLElement) {
  container.classList.add('diff-strip');

  function render(mask: boolean[] | null, nFrames: number) {
    container.textContent = '';
    if (!mask || nFrames <= 0) {
      container.dataset.state = 'empty';
      return;
    }
    container.dataset.state = mask.some(Boolean) ? 'changed' : 'identical';
    for (const run of changedRuns(mask)) {
      const el = document.createElement('div');
      el.className = 'diff-run';
      el.dataset.start = String(run.start);
      el.dataset.end = String(run.end);
      el.style.left = pct(run.start / nFrames);
      el.style.width = pct((run.end - run.start) / nFrames);
      el.title = `frames ${run.start}–${run.end - 1} differ from the parent`;
      container.appendChild(el);
    }
  }

  function clear() {
    container.textContent = '';
    container.dataset.state = 'empty';
  }

  return { render, clear };
}
