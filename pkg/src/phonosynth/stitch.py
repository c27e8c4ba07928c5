"""Fragment stitching.

Turns a PartitionResult into one coherent expression track on the edit
timeline: per-phoneme linear retiming of each matched repository range,
linear crossfade over the two-token overlap between adjacent fragments,
normalized Gaussian smoothing around each segment boundary, and forced
mouth closures at the onset of every closure-class phoneme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    EXPRESSION_DIM,
    PHONEME,
    ExpressionTrack,
    GeneralizedToken,
    InvalidEditError,
    TokenSequence,
    VisemeTable,
    sample_channels,
)
from .repo_io import RepositoryBundle
from .search import PartitionResult, SegmentMatch


def frame_of(t_s: float, fps: float) -> int:
    """Output frame index of a timeline instant (round half to even)."""
    return int(round(t_s * fps))


@dataclass(frozen=True)
class StitchConfig:
    gaussian_sigma_frames: float = 1.0
    gaussian_radius_frames: int = 2
    closure_frames: int = 2
    # boundary index (0-based, between segments i and i+1) -> radius frames
    boundary_radius_overrides: Mapping[int, int] = field(default_factory=dict)
    # edit token index -> closure length in frames
    closure_overrides: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.gaussian_sigma_frames < 0:
            raise ValueError("gaussian_sigma_frames must be >= 0")
        if self.gaussian_radius_frames < 0:
            raise ValueError("gaussian_radius_frames must be >= 0")
        if self.closure_frames < 0:
            raise ValueError("closure_frames must be >= 0")
        for k, v in self.boundary_radius_overrides.items():
            if v < 0:
                raise ValueError(f"boundary radius override {k} must be >= 0")
        for k, v in self.closure_overrides.items():
            if v < 0:
                raise ValueError(f"closure override {k} must be >= 0")

    def radius_at(self, boundary_index: int) -> int:
        return int(self.boundary_radius_overrides.get(boundary_index, self.gaussian_radius_frames))

    def closure_at(self, token_index: int) -> int:
        return int(self.closure_overrides.get(token_index, self.closure_frames))


@dataclass(frozen=True)
class ClosureInsertion:
    token_index: int  # index into the edit token sequence
    phoneme: str
    onset_frame: int
    frames: int  # frames actually blended
    exemplar: int  # repository frame index of the chosen exemplar


@dataclass(frozen=True)
class StitchTrace:
    n_frames: int
    # per output frame: owning segment (dominant crossfade weight) and the
    # repository time it was sampled from
    frame_segments: tuple[int, ...]
    frame_source_times: tuple[float, ...]
    boundary_frames: tuple[int, ...]
    boundary_radii: tuple[int, ...]
    closures: tuple[ClosureInsertion, ...]

    def __post_init__(self):
        if len(self.frame_segments) != self.n_frames or len(self.frame_source_times) != self.n_frames:
            raise ValueError("provenance arrays must cover every output frame")
        if any(b >= c for b, c in zip(self.boundary_frames, self.boundary_frames[1:])):
            raise ValueError("boundary frames must be strictly increasing")

    def to_json(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "frame_segments": list(self.frame_segments),
            "frame_source_times": [float(t) for t in self.frame_source_times],
            "boundary_frames": list(self.boundary_frames),
            "boundary_radii": list(self.boundary_radii),
            "closures": [
                {
                    "token_index": c.token_index,
                    "phoneme": c.phoneme,
                    "onset_frame": c.onset_frame,
                    "frames": c.frames,
                    "exemplar": c.exemplar,
                }
                for c in self.closures
            ],
        }

    @staticmethod
    def from_json(doc: dict) -> "StitchTrace":
        return StitchTrace(
            n_frames=int(doc["n_frames"]),
            frame_segments=tuple(int(s) for s in doc["frame_segments"]),
            frame_source_times=tuple(float(t) for t in doc["frame_source_times"]),
            boundary_frames=tuple(int(b) for b in doc["boundary_frames"]),
            boundary_radii=tuple(int(r) for r in doc["boundary_radii"]),
            closures=tuple(
                ClosureInsertion(
                    token_index=int(c["token_index"]),
                    phoneme=str(c["phoneme"]),
                    onset_frame=int(c["onset_frame"]),
                    frames=int(c["frames"]),
                    exemplar=int(c["exemplar"]),
                )
                for c in doc["closures"]
            ),
        )


@dataclass(frozen=True)
class Fragment:
    """Retimed expression values for one matched segment, positioned on the
    edit-timeline frame grid."""

    start_frame: int
    core_onset_frame: int  # first frame of the segment's first core token
    values: np.ndarray  # (n, 64) float64
    source_times: np.ndarray  # (n,) repository seconds each frame samples

    @property
    def end_frame(self) -> int:  # exclusive
        return self.start_frame + self.values.shape[0]


def retime_segment(
    match: SegmentMatch,
    repo: RepositoryBundle,
    edit_times: TokenSequence,
    fps: float,
) -> Fragment:
    """Linearly retime the matched repository range onto the edit timeline.

    The fragment covers the segment's expanded tokens that lie inside the
    edit (outer transcript context has no place on the output timeline).
    Each edit token's frames sample its matched repository token span at
    the same relative position, values linearly interpolated.
    """
    repo_tokens = _merged_tokens(repo)
    f_first = frame_of(edit_times[match.expanded_start].start_s, fps)
    frames: list[np.ndarray] = []
    times: list[float] = []
    expected = f_first
    for iw in range(match.expanded_start, match.expanded_end + 1):
        w = edit_times[iw]
        if w.duration_s <= 0.0:
            raise InvalidEditError(f"zero-duration edit token {w.name!r} at index {iw}")
        v = repo_tokens[match.repo_position_of(iw)]
        f0 = frame_of(w.start_s, fps)
        f1 = frame_of(w.end_s, fps)
        if f0 != expected:
            raise InvalidEditError(
                f"edit tokens must be contiguous on the frame grid; token {iw} "
                f"starts at frame {f0}, expected {expected}"
            )
        expected = f1
        for f in range(f0, f1):
            u = (f / fps - w.start_s) / w.duration_s
            u = min(1.0, max(0.0, u))
            t_src = v.start_s + u * (v.end_s - v.start_s)
            frames.append(sample_channels(repo.track.values, repo.track.fps, t_src))
            times.append(t_src)
    values = np.array(frames, dtype=np.float64) if frames else np.empty((0, EXPRESSION_DIM))
    return Fragment(
        start_frame=f_first,
        core_onset_frame=frame_of(edit_times[match.core_start].start_s, fps),
        values=values,
        source_times=np.array(times, dtype=np.float64),
    )


def _merged_tokens(repo: RepositoryBundle) -> tuple[GeneralizedToken, ...]:
    from .search import search_tokens

    return search_tokens(repo)


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones(1)
    if sigma <= 0.0:
        k = np.zeros(2 * radius + 1)
        k[radius] = 1.0
        return k
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(offs**2) / (2.0 * sigma * sigma))


def blend_and_smooth(
    fragments: Sequence[Fragment],
    matches: Sequence[SegmentMatch],
    cfg: StitchConfig,
) -> tuple[np.ndarray, StitchTrace]:
    """Crossfade overlapping fragments, then smooth around each boundary.

    Returns the blended float64 values plus the trace (closures empty; they
    are appended by force_closures).
    """
    if len(fragments) != len(matches) or not fragments:
        raise ValueError("need one fragment per match, at least one")
    for prev, cur in zip(fragments, fragments[1:]):
        # Fragments overlap on shared context tokens; at a kind boundary
        # (no expansion possible) they abut exactly.
        if cur.start_frame > prev.end_frame:
            raise ValueError(
                f"fragments must overlap or abut: previous ends at frame "
                f"{prev.end_frame}, next starts at {cur.start_frame}"
            )

    first = fragments[0].start_frame
    n = fragments[-1].end_frame - first
    acc = np.zeros((n, EXPRESSION_DIM), dtype=np.float64)
    wsum = np.zeros(n, dtype=np.float64)
    # Dominant-ownership provenance: the fragment with the largest weight.
    best_w = np.full(n, -1.0)
    seg_of = np.zeros(n, dtype=np.int64)
    src_of = np.zeros(n, dtype=np.float64)

    for i, frag in enumerate(fragments):
        k = frag.values.shape[0]
        w = np.ones(k, dtype=np.float64)
        if i > 0:  # ramp in over the overlap with the previous fragment
            ov = fragments[i - 1].end_frame - frag.start_frame
            w[:ov] *= _ramp(ov)
        if i + 1 < len(fragments):  # ramp out under the next fragment
            ov = frag.end_frame - fragments[i + 1].start_frame
            w[k - ov :] *= _ramp(ov)[::-1]
        lo = frag.start_frame - first
        acc[lo : lo + k] += w[:, None] * frag.values
        wsum[lo : lo + k] += w
        take = w >= best_w[lo : lo + k]  # ties go to the later fragment
        idx = np.nonzero(take)[0] + lo
        best_w[idx] = w[take]
        seg_of[idx] = i
        src_of[idx] = frag.source_times[take]

    if np.any(wsum <= 0.0):
        raise ValueError("output frames left uncovered by every fragment")
    values = acc / wsum[:, None]

    boundary_frames: list[int] = []
    boundary_radii: list[int] = []
    base = values.copy()  # smoothing reads pre-smoothing values only
    for b, frag in enumerate(fragments[1:]):
        c = frag.core_onset_frame - first
        radius = cfg.radius_at(b)
        boundary_frames.append(c + first)
        boundary_radii.append(radius)
        if radius == 0:
            continue
        kernel = _gaussian_kernel(cfg.gaussian_sigma_frames, radius)
        for f in range(max(0, c - radius), min(n, c + radius + 1)):
            klo = max(-radius, -f)
            khi = min(radius, n - 1 - f)
            ks = kernel[klo + radius : khi + radius + 1]
            values[f] = (ks[:, None] * base[f + klo : f + khi + 1]).sum(axis=0) / ks.sum()

    trace = StitchTrace(
        n_frames=n,
        frame_segments=tuple(int(s) for s in seg_of),
        frame_source_times=tuple(float(t) for t in src_of),
        boundary_frames=tuple(boundary_frames),
        boundary_radii=tuple(boundary_radii),
        closures=(),
    )
    return values, trace


def _ramp(k: int) -> np.ndarray:
    """Linear crossfade weights 0→1 over k frames; a single frame gets 0.5."""
    if k <= 0:
        return np.empty(0)
    if k == 1:
        return np.array([0.5])
    return np.arange(k, dtype=np.float64) / (k - 1)


def force_closures(
    values: np.ndarray,
    trace: StitchTrace,
    edit_times: TokenSequence,
    repo: RepositoryBundle,
    cfg: StitchConfig,
    table: VisemeTable,
    fps: float,
    first_frame: int = 0,
) -> tuple[np.ndarray, StitchTrace]:
    """Blend closed-mouth exemplars into the first k frames of every
    closure-class phoneme; the onset frame becomes the exemplar exactly."""
    closure_tokens = [
        (i, w)
        for i, w in enumerate(edit_times)
        if w.kind == PHONEME and table.class_of(w) == table.closure_class
    ]
    if not closure_tokens:
        return values, trace
    if not repo.closed_mouth_frames:
        raise ValueError("repository has no closed-mouth exemplars")
    exemplars = np.array(
        [repo.track.values[i].astype(np.float64) for i in repo.closed_mouth_frames]
    )
    out = values.copy()
    n = out.shape[0]
    insertions: list[ClosureInsertion] = []
    for i, w in closure_tokens:
        k = cfg.closure_at(i)
        if k == 0:
            continue
        f0 = frame_of(w.start_s, fps) - first_frame
        f1 = frame_of(w.end_s, fps) - first_frame
        k_eff = min(k, max(0, min(f1, n) - f0))
        if f0 < 0 or k_eff <= 0:
            continue
        d = np.linalg.norm(exemplars - out[f0], axis=1)
        choice = int(np.argmin(d))
        ex = exemplars[choice]
        for t in range(k_eff):
            alpha = 1.0 - t / k
            out[f0 + t] = alpha * ex + (1.0 - alpha) * out[f0 + t]
        insertions.append(
            ClosureInsertion(
                token_index=i,
                phoneme=w.name,
                onset_frame=f0 + first_frame,
                frames=k_eff,
                exemplar=int(repo.closed_mouth_frames[choice]),
            )
        )
    new_trace = replace(trace, closures=trace.closures + tuple(insertions))
    return out, new_trace


def stitch(
    partition: PartitionResult,
    repo: RepositoryBundle,
    edit_times: TokenSequence,
    cfg: StitchConfig,
    table: VisemeTable,
) -> tuple[ExpressionTrack, StitchTrace]:
    """Retime every matched segment, crossfade, smooth, force closures."""
    fps = repo.track.fps
    fragments = [retime_segment(m, repo, edit_times, fps) for m in partition.segments]
    values, trace = blend_and_smooth(fragments, partition.segments, cfg)
    first = fragments[0].start_frame
    values, trace = force_closures(values, trace, edit_times, repo, cfg, table, fps, first)
    track = ExpressionTrack(fps=fps, values=values.astype(np.float32))
    return track, trace
