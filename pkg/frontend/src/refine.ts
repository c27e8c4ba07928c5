import type { Overrides, ResultDoc } from './api.js';

// Refinement controls for the displayed result: a smoothing-radius slider
// per segment boundary and a closure-length stepper per closure phoneme.
// Only values that differ from the result's trace are posted, so repeated
// refinements accumulate on the server side.

export interface RefineOptions {
  onApply?: (overrides: Overrides) => void;
  onUndo?: () => void;
}

const MAX_RADIUS = 8;
const MAX_CLOSURE = 12;

export function createRefinePanel(container: HTMLElement, options: RefineOptions = {}) {
  container.classList.add('refine-panel-body');
  const rows = document.createElement('div');
  rows.className = 'refine-rows';
  container.appendChild(rows);

  const actions = document.createElement('div');
  actions.className = 'refine-actions';
  const applyBtn = document.createElement('button');
  applyBtn.type = 'button';
  applyBtn.className = 'apply-refine';
  applyBtn.textContent = 'Apply refinement';
  actions.appendChild(applyBtn);
  const undoBtn = document.createElement('button');
  undoBtn.type = 'button';
  undoBtn.className = 'undo-btn';
  undoBtn.textContent = 'Undo';
  actions.appendChild(undoBtn);
  container.appendChild(actions);

  let current: ResultDoc | null = null;

  function render(result: ResultDoc) {
    current = result;
    rows.textContent = '';
    const trace = result.trace;

    trace.boundary_frames.forEach((bf, i) => {
      const row = document.createElement('label');
      row.className = 'refine-row';
      const text = document.createElement('span');
      text.textContent = `boundary ${i} @ frame ${bf}`;
      row.appendChild(text);
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.className = 'refine-radius';
      slider.dataset.boundary = String(i);
      slider.min = '0';
      slider.max = String(MAX_RADIUS);
      slider.step = '1';
      slider.value = String(trace.boundary_radii[i] ?? 0);
      row.appendChild(slider);
      const readout = document.createElement('span');
      readout.className = 'refine-readout';
      readout.textContent = slider.value;
      slider.addEventListener('input', () => {
        readout.textContent = slider.value;
      });
      row.appendChild(readout);
      rows.appendChild(row);
    });

    for (const c of trace.closures) {
      const row = document.createElement('label');
      row.className = 'refine-row';
      const text = document.createElement('span');
      text.textContent = `${c.phoneme} closure @ frame ${c.onset_frame}`;
      row.appendChild(text);
      const stepper = document.createElement('input');
      stepper.type = 'number';
      stepper.className = 'closure-stepper';
      stepper.dataset.token = String(c.token_index);
      stepper.min = '0';
      stepper.max = String(MAX_CLOSURE);
      stepper.step = '1';
      stepper.value = String(c.frames);
      row.appendChild(stepper);
      rows.appendChild(row);
    }

    if (trace.boundary_frames.length === 0 && trace.closures.length === 0) {
      const note = document.createElement('div');
      note.className = 'refine-empty';
      note.textContent = 'nothing to refine: single segment, no closures';
      rows.appendChild(note);
    }

    undoBtn.disabled = !result.parent;
    applyBtn.disabled = false;
  }

  /** Overrides for every control whose value departs from the trace. */
  function collect(): Overrides {
    const overrides: Overrides = {};
    if (!current) return overrides;
    const radii: Record<number, number> = {};
    for (const el of rows.querySelectorAll<HTMLInputElement>('.refine-radius')) {
      const i = Number(el.dataset.boundary);
      const v = Number(el.value);
      if (v !== (current.trace.boundary_radii[i] ?? 0)) radii[i] = v;
    }
    if (Object.keys(radii).length > 0) overrides.boundary_radius = radii;
    const closures: Record<number, number> = {};
    const byToken = new Map(current.trace.closures.map((c) => [c.token_index, c.frames]));
    for (const el of rows.querySelectorAll<HTMLInputElement>('.closure-stepper')) {
      const tok = Number(el.dataset.token);
      const v = Number(el.value);
      if (v !== byToken.get(tok)) closures[tok] = v;
    }
    if (Object.keys(closures).length > 0) overrides.closures = closures;
    return overrides;
  }

  applyBtn.addEventListener('click', () => options.onApply?.(collect()));
  undoBtn.addEventListener('click', () => options.onUndo?.());

  return { render, collect };
}
