// Transcript tokenization for directive highlighting and gesture chips.
// This is presentation only; the server owns the real grammar.

export type SpanKind = 'word' | 'gesture' | 'invalid';

export interface Span {
  kind: SpanKind;
  text: string;
  start: number;
  end: number;
  name?: string;
  durationS?: number;
}

const GESTURE_RE = /^\[([a-z_]+)(?::(\d+(?:\.\d+)?|\.\d+)s)?\]$/;

export function tokenizeTranscript(text: string): Span[] {
  const spans: Span[] = [];
  const re = /\S+/g;
  let m: RegExpExecArray | null;
  while ((m = re.exec(text)) !== null) {
    const item = m[0];
    const start = m.index;
    const end = start + item.length;
    if (item.startsWith('[') || item.endsWith(']')) {
      const g = GESTURE_RE.exec(item);
      const dur = g && g[2] !== undefined ? Number(g[2]) : undefined;
      if (g && (dur === undefined || dur > 0)) {
        const span: Span = { kind: 'gesture', text: item, start, end, name: g[1] };
        if (dur !== undefined) span.durationS = dur;
        spans.push(span);
      } else {
        spans.push({ kind: 'invalid', text: item, start, end });
      }
    } else {
      spans.push({ kind: 'word', text: item, start, end });
    }
  }
  return spans;
}

export function formatDirective(name: string, durationS?: number): string {
  if (durationS === undefined) return `[${name}]`;
  const dur = Number(durationS.toFixed(3)).toString();
  return `[${name}:${dur}s]`;
}

/** Splice a gesture directive into the transcript at pos, padding with
 * spaces so the directive stays its own token. */
export function insertGesture(
  text: string,
  pos: number,
  name: string,
  durationS?: number,
): { text: string; cursor: number } {
  const p = Math.max(0, Math.min(text.length, pos));
  const chip = formatDirective(name, durationS);
  const before = text.slice(0, p);
  const after = text.slice(p);
  const lead = before.length > 0 && !/\s$/.test(before) ? ' ' : '';
  const trail = after.length > 0 && !/^\s/.test(after) ? ' ' : '';
  return {
    text: before + lead + chip + trail + after,
    cursor: p + lead.length + chip.length,
  };
}
