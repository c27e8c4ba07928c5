import type { ResultDoc } from './api.js';
import { trackChannels } from './api.js';

// Mouth-outline playback. The server sends one polyline per frame
// (its preview basis applied to each expression frame); playing back is
// just swapping point lists, there is nothing to interpolate here.

const SVG_NS = 'http://www.w3.org/2000/svg';
const VIEW = 100;

export interface PreviewOptions {
  channels?: number[];
  onSeek?: (frame: number) => void;
}

/** Vertical spread of the outline per frame; a closed mouth scores low. */
export function apertureSeries(preview: number[][][]): number[] {
  return preview.map((points) => {
    let lo = Infinity;
    let hi = -Infinity;
    for (const p of points) {
      const y = p[1] ?? 0;
      if (y < lo) lo = y;
      if (y > hi) hi = y;
    }
    return points.length > 0 ? hi - lo : 0;
  });
}

export function argminAperture(preview: number[][][]): number {
  const series = apertureSeries(preview);
  let best = 0;
  for (let i = 1; i < series.length; i++) {
    if ((series[i] ?? Infinity) < (series[best] ?? Infinity)) best = i;
  }
  return best;
}

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
  return document.createElementNS(SVG_NS, tag);
}

export function createPreviewPlayer(container: HTMLElement, options: PreviewOptions = {}) {
  container.classList.add('preview-panel-body');
  const channels = options.channels ?? [0, 1, 2, 3];

  const outlineSvg = svgEl('svg');
  outlineSvg.setAttribute('class', 'preview-stage');
  outlineSvg.setAttribute('viewBox', `0 0 ${VIEW} ${VIEW}`);
  const outline = svgEl('polyline');
  outline.setAttribute('class', 'preview-outline');
  outlineSvg.appendChild(outline);
  container.appendChild(outlineSvg);

  const sparkSvg = svgEl('svg');
  sparkSvg.setAttribute('class', 'preview-sparks');
  sparkSvg.setAttribute('viewBox', `0 0 ${VIEW} ${VIEW}`);
  sparkSvg.setAttribute('preserveAspectRatio', 'none');
  const sparkPaths: SVGPathElement[] = channels.map((_, i) => {
    const p = svgEl('path');
    p.setAttribute('class', `spark spark-${i}`);
    sparkSvg.appendChild(p);
    return p;
  });
  const cursorLine = svgEl('line');
  cursorLine.setAttribute('class', 'spark-cursor');
  cursorLine.setAttribute('y1', '0');
  cursorLine.setAttribute('y2', String(VIEW));
  sparkSvg.appendChild(cursorLine);
  container.appendChild(sparkSvg);

  const transport = document.createElement('div');
  transport.className = 'preview-transport';
  const playBtn = document.createElement('button');
  playBtn.type = 'button';
  playBtn.className = 'preview-play';
  playBtn.textContent = 'Play';
  transport.appendChild(playBtn);
  const range = document.createElement('input');
  range.type = 'range';
  range.className = 'preview-cursor';
  range.min = '0';
  range.max = '0';
  range.step = '1';
  range.value = '0';
  transport.appendChild(range);
  const clock = document.createElement('span');
  clock.className = 'preview-clock';
  transport.appendChild(clock);
  container.appendChild(transport);

  let doc: ResultDoc | null = null;
  let frame = 0;
  let timer: ReturnType<typeof setInterval> | null = null;
  // cached outline scaling so every frame maps through the same transform
  let sx = 1;
  let sy = 1;
  let ox = 0;
  let oy = 0;

  const stop = () => {
    if (timer !== null) clearInterval(timer);
    timer = null;
    playBtn.textContent = 'Play';
  };

  function fitOutline(preview: number[][][]) {
    let xLo = Infinity;
    let xHi = -Infinity;
    let yLo = Infinity;
    let yHi = -Infinity;
    for (const points of preview) {
      for (const p of points) {
        const x = p[0] ?? 0;
        const y = p[1] ?? 0;
        if (x < xLo) xLo = x;
        if (x > xHi) xHi = x;
        if (y < yLo) yLo = y;
        if (y > yHi) yHi = y;
      }
    }
    const w = xHi - xLo;
    const h = yHi - yLo;
    const span = Math.max(w, h, 1e-9);
    const scale = (VIEW * 0.9) / span;
    sx = scale;
    sy = -scale; // screen y grows downward
    ox = (VIEW - w * scale) / 2 - xLo * scale;
    oy = VIEW - ((VIEW - h * scale) / 2 - yLo * scale);
  }

  function pointsAttr(points: number[][]): string {
    return points
      .map((p) => `${((p[0] ?? 0) * sx + ox).toFixed(2)},${((p[1] ?? 0) * sy + oy).toFixed(2)}`)
      .join(' ');
  }

  function drawFrame() {
    if (!doc) return;
    if (doc.preview) {
      const pts = doc.preview[frame];
      if (pts) outline.setAttribute('points', pointsAttr(pts));
    }
    const n = doc.n_frames;
    const x = n > 1 ? (frame / (n - 1)) * VIEW : 0;
    cursorLine.setAttribute('x1', x.toFixed(2));
    cursorLine.setAttribute('x2', x.toFixed(2));
    range.value = String(frame);
    clock.textContent = `frame ${frame + 1}/${n} · ${(n / doc.fps).toFixed(2)}s`;
  }

  function drawSparks(track: Float32Array) {
    if (!doc) return;
    const n = doc.n_frames;
    const ch = trackChannels(track, n);
    channels.forEach((c, i) => {
      const path = sparkPaths[i];
      if (!path) return;
      if (c >= ch || n === 0) {
        path.setAttribute('d', '');
        return;
      }
      let lo = Infinity;
      let hi = -Infinity;
      for (let f = 0; f < n; f++) {
        const v = track[f * ch + c] ?? 0;
        if (v < lo) lo = v;
        if (v > hi) hi = v;
      }
      const span = hi - lo || 1;
      const parts: string[] = [];
      for (let f = 0; f < n; f++) {
        const v = track[f * ch + c] ?? 0;
        const x = n > 1 ? (f / (n - 1)) * VIEW : 0;
        const y = VIEW - ((v - lo) / span) * (VIEW - 10) - 5;
        parts.push(`${f === 0 ? 'M' : 'L'}${x.toFixed(2)},${y.toFixed(2)}`);
      }
      path.setAttribute('d', parts.join(' '));
    });
  }

  function load(result: ResultDoc, track: Float32Array) {
    stop();
    doc = result;
    frame = 0;
    range.max = String(Math.max(0, result.n_frames - 1));
    outlineSvg.style.display = result.preview ? '' : 'none';
    if (result.preview) {
      fitOutline(result.preview);
      const at = argminAperture(result.preview);
      outlineSvg.dataset.minApertureFrame = String(at);
    }
    drawSparks(track);
    drawFrame();
  }

  function seek(f: number) {
    if (!doc) return;
    frame = Math.max(0, Math.min(doc.n_frames - 1, Math.round(f)));
    drawFrame();
    options.onSeek?.(frame);
  }

  function playToggle() {
    if (!doc) return;
    if (timer !== null) {
      stop();
      return;
    }
    playBtn.textContent = 'Pause';
    timer = setInterval(() => {
      if (!doc) return;
      seek(frame + 1 >= doc.n_frames ? 0 : frame + 1);
    }, 1000 / doc.fps);
  }

  playBtn.addEventListener('click', playToggle);
  range.addEventListener('input', () => seek(Number(range.value)));

  return {
    load,
    seek,
    playToggle,
    frame: () => frame,
    dispose: stop,
  };
}
