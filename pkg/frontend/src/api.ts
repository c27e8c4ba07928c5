// Typed client for the synthesis service. All engine work happens on the
// server; this module only moves JSON and decodes binary track payloads.

export interface HealthDoc {
  status: string;
  styles: string[];
  has_model: boolean;
  has_target: boolean;
}

export interface ResultSummary {
  result_id: string;
  parent: string | null;
  edit_text: string;
  style: string;
}

export interface SessionDoc {
  session_id: string;
  style: string;
  styles: string[];
  results: ResultSummary[];
}

export interface ClosureMark {
  token_index: number;
  phoneme: string;
  onset_frame: number;
  frames: number;
  exemplar: number;
}

export interface Trace {
  n_frames: number;
  frame_segments: number[];
  frame_source_times: number[];
  boundary_frames: number[];
  boundary_radii: number[];
  closures: ClosureMark[];
}

export interface ProvenanceSegment {
  core_start: number;
  core_end: number;
  repo_start: number;
  repo_end: number;
  repo_start_s: number;
  repo_end_s: number;
  match_cost: number;
  length_cost: number;
}

export interface Provenance {
  total_cost: number;
  segments: ProvenanceSegment[];
}

export interface ResultDoc {
  result_id: string;
  parent: string | null;
  edit_text: string;
  style: string;
  fps: number;
  n_frames: number;
  track: string;
  stitched: string;
  trace: Trace;
  provenance: Provenance;
  preview: number[][][] | null;
}

export interface Overrides {
  boundary_radius?: Record<number, number>;
  closures?: Record<number, number>;
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = 'ApiError';
    this.status = status;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Decode a base64 little-endian float32 track into one flat array.
 * nFrames only validates the payload; pass 0 to skip the check. */
export function decodeTrack(b64: string, nFrames = 0): Float32Array {
  const bin = atob(b64);
  if (bin.length % 4 !== 0) {
    throw new Error(`track payload is ${bin.length} bytes, not a float32 multiple`);
  }
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  // every supported host is little-endian, so the raw view is already correct
  const values = new Float32Array(bytes.buffer);
  if (nFrames > 0 && values.length % nFrames !== 0) {
    throw new Error(`track of ${values.length} floats does not divide into ${nFrames} frames`);
  }
  return values;
}

export function trackChannels(track: Float32Array, nFrames: number): number {
  return nFrames > 0 ? Math.floor(track.length / nFrames) : 0;
}

export function createClient(baseUrl: string, fetchImpl?: FetchLike) {
  const base = baseUrl.replace(/\/+$/, '');
  const doFetch: FetchLike = fetchImpl ?? ((input, init) => fetch(input, init));

  async function request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const res = await doFetch(base + path, init);
    if (!res.ok) {
      let detail = `request failed with status ${res.status}`;
      try {
        const doc: unknown = await res.json();
        const d = (doc as { detail?: unknown }).detail;
        if (typeof d === 'string') detail = d;
        else if (d !== undefined) detail = JSON.stringify(d);
      } catch {
        // keep the status-only message
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  return {
    health: () => request<HealthDoc>('GET', '/health'),
    createSession: (style: string) => request<SessionDoc>('POST', '/sessions', { style }),
    getSession: (id: string) => request<SessionDoc>('GET', `/sessions/${id}`),
    submitEdit: async (id: string, text: string, style?: string): Promise<string> => {
      const body: Record<string, unknown> = { text };
      if (style) body.style = style;
      const res = await request<{ result_id: string }>('POST', `/sessions/${id}/edits`, body);
      return res.result_id;
    },
    getResult: (id: string, rid: string) =>
      request<ResultDoc>('GET', `/sessions/${id}/results/${rid}`),
    refine: async (id: string, rid: string, overrides: Overrides): Promise<string> => {
      const res = await request<{ result_id: string }>(
        'POST',
        `/sessions/${id}/results/${rid}/refine`,
        { overrides },
      );
      return res.result_id;
    },
  };
}

export type Client = ReturnType<typeof createClient>;
