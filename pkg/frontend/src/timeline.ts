import type { ResultDoc } from './api.js';

export interface TimelineOptions {
  onSelect?: (segment: number | null) => void;
}

/** Golden-angle hue keyed by where a segment was cut from the repository,
 * so fragments from the same neighbourhood land in the same colour family. */
export function hueForOrigin(repoStartS: number): number {
  const h = (repoStartS * 137.508) % 360;
  return h < 0 ? h + 360 : h;
}

export function segmentExtents(
  boundaryFrames: number[],
  nFrames: number,
): Array<{ start: number; end: number }> {
  const starts = [0, ...boundaryFrames];
  const ends = [...boundaryFrames, nFrames];
  return starts.map((start, i) => ({ start, end: ends[i] ?? nFrames }));
}

const pct = (x: number) => `${(x * 100).toFixed(3)}%`;

export function createTimeline(container: HTMLElement, options: TimelineOptions = {}) {
  container.classList.add('timeline');
  const lane = document.createElement('div');
  lane.className = 'timeline-lane';
  container.appendChild(lane);

  function render(result: ResultDoc, selection: number | null) {
    lane.textContent = '';
    const n = result.trace.n_frames;
    if (n <= 0) return;
    const extents = segmentExtents(result.trace.boundary_frames, n);

    result.provenance.segments.forEach((seg, i) => {
      const ext = extents[i];
      if (!ext) return;
      const el = document.createElement('div');
      el.className = 'timeline-block' + (selection === i ? ' selected' : '');
      el.dataset.segment = String(i);
      el.style.left = pct(ext.start / n);
      el.style.width = pct((ext.end - ext.start) / n);
      el.style.background = `hsl(${hueForOrigin(seg.repo_start_s).toFixed(1)}, 55%, 62%)`;
      el.title =
        `repo ${seg.repo_start_s.toFixed(2)}s → ${seg.repo_end_s.toFixed(2)}s` +
        ` | match ${seg.match_cost.toFixed(2)} length ${seg.length_cost.toFixed(2)}`;
      el.addEventListener('click', () => options.onSelect?.(i));
      lane.appendChild(el);
    });

    for (const bf of result.trace.boundary_frames) {
      const el = document.createElement('div');
      el.className = 'timeline-boundary';
      el.dataset.frame = String(bf);
      el.style.left = pct(bf / n);
      el.title = `boundary at frame ${bf}`;
      lane.appendChild(el);
    }

    for (const c of result.trace.closures) {
      const el = document.createElement('div');
      el.className = 'timeline-closure';
      el.dataset.frame = String(c.onset_frame);
      el.style.left = pct(c.onset_frame / n);
      el.title = `${c.phoneme} closure, ${c.frames} frames, exemplar ${c.exemplar}`;
      lane.appendChild(el);
    }
  }

  return { render };
}
