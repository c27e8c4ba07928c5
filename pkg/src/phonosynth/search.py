"""Fast phoneme search.

Partitions an edit token sequence W into subsequences, each expanded by one
context token per side, and matches every expanded subsequence against the
repository with a substitution-only cost (no insertions or deletions, so
query and match always have equal length). Candidate matches are retrieved
through a viseme bi-gram index keyed on the first two tokens of the
expanded query; a DP over end positions with segment lengths capped at L
picks the minimum-cost partition. A brute-force oracle over all partitions
is provided for testing and quality-gap measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    GESTURE,
    GeneralizedToken,
    PhonosynthError,
    TokenSequence,
    VisemeTable,
)
from .repo_io import RepositoryBundle

NO_MATCH = math.inf


class NoMatchError(PhonosynthError):
    """No finite-cost partition exists. Carries the offending query."""

    def __init__(self, query: Sequence[GeneralizedToken]):
        self.query = tuple(query)
        names = " ".join(t.name for t in self.query)
        super().__init__(f"no finite-cost repository match for query [{names}]")


class InstanceTooLargeError(PhonosynthError):
    """Brute-force oracle guard; pass force=True to override."""


@dataclass(frozen=True)
class CostConfig:
    """Weights of the substitution cost and the segment-length penalty."""

    c_phoneme: float = 1.0
    c_viseme: float = 10.0
    c_time: float = 4.0  # per second of duration difference
    kappa_len: float = 20.0
    max_segment_len: int = 6

    def __post_init__(self):
        for name in ("c_phoneme", "c_viseme", "c_time", "kappa_len"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_segment_len < 1:
            raise ValueError("max_segment_len must be >= 1")


def substitution_cost(
    w: GeneralizedToken, v: GeneralizedToken, cfg: CostConfig, table: VisemeTable
) -> float:
    """Cost of substituting repository token ``v`` for query token ``w``.

    Gestures only ever match the identical gesture name; mixed kinds never
    match. Returns ``math.inf`` for a non-match.
    """
    if w.kind != v.kind:
        return NO_MATCH
    if w.kind == GESTURE:
        if w.name != v.name:
            return NO_MATCH
        return cfg.c_time * abs(w.duration_s - v.duration_s)
    cost = 0.0
    if w.name != v.name:
        cost += cfg.c_phoneme
    if table.class_of(w) != table.class_of(v):
        cost += cfg.c_viseme
    cost += cfg.c_time * abs(w.duration_s - v.duration_s)
    return cost


def match_cost(
    wq: Sequence[GeneralizedToken],
    vq: Sequence[GeneralizedToken],
    cfg: CostConfig,
    table: VisemeTable,
) -> float:
    """Sum of element-wise substitution costs; requires equal lengths."""
    if len(wq) != len(vq):
        raise ValueError(f"match_cost requires equal lengths, got {len(wq)} vs {len(vq)}")
    total = 0.0
    for w, v in zip(wq, vq):
        c = substitution_cost(w, v, cfg, table)
        if c == NO_MATCH:
            return NO_MATCH
        total += c
    return total


def search_tokens(repo: RepositoryBundle) -> tuple[GeneralizedToken, ...]:
    """The repository sequence the search runs over: phoneme tokens and
    gesture annotations merged in time order."""
    merged = list(repo.tokens) + list(repo.gestures)
    merged.sort(key=lambda t: (t.start_s, t.end_s, t.kind, t.name))
    return tuple(merged)


@dataclass(frozen=True)
class BigramIndex:
    """Inverted index: viseme-class bi-gram -> ascending start positions in
    the merged repository sequence. Unigram postings back the single-token
    query edge case."""

    tokens: tuple[GeneralizedToken, ...]
    table: VisemeTable
    classes: np.ndarray  # (n,) int viseme class per token
    bigrams: Mapping[tuple[int, int], np.ndarray]
    unigrams: Mapping[int, np.ndarray]
    # Parallel arrays for vectorized cost evaluation.
    names: np.ndarray = field(repr=False, default=None)
    durations: np.ndarray = field(repr=False, default=None)
    is_gesture: np.ndarray = field(repr=False, default=None)

    def lookup(self, key: tuple[int, int]) -> np.ndarray:
        return self.bigrams.get(key, _EMPTY_POSITIONS)

    def lookup_unigram(self, cls: int) -> np.ndarray:
        return self.unigrams.get(cls, _EMPTY_POSITIONS)

    def __len__(self) -> int:
        return len(self.tokens)


_EMPTY_POSITIONS = np.empty(0, dtype=np.intp)


def build_index(repo: RepositoryBundle, table: VisemeTable) -> BigramIndex:
    """Pre-compute the viseme bi-gram index over the merged repository
    sequence (gesture annotations included under their singleton classes)."""
    tokens = search_tokens(repo)
    if len(tokens) < 2:
        raise ValueError(f"repository too short to index ({len(tokens)} tokens, need >= 2)")
    classes = np.array([table.class_of(t) for t in tokens], dtype=np.int64)
    bigrams: dict[tuple[int, int], list[int]] = {}
    unigrams: dict[int, list[int]] = {}
    for p in range(len(tokens) - 1):
        bigrams.setdefault((int(classes[p]), int(classes[p + 1])), []).append(p)
    for p in range(len(tokens)):
        unigrams.setdefault(int(classes[p]), []).append(p)
    return BigramIndex(
        tokens=tokens,
        table=table,
        classes=classes,
        bigrams={k: np.array(v, dtype=np.intp) for k, v in bigrams.items()},
        unigrams={k: np.array(v, dtype=np.intp) for k, v in unigrams.items()},
        names=np.array([t.name for t in tokens]),
        durations=np.array([t.duration_s for t in tokens], dtype=np.float64),
        is_gesture=np.array([t.kind == GESTURE for t in tokens], dtype=bool),
    )


@dataclass(frozen=True)
class SegmentMatch:
    """One matched segment: core tokens of W plus context expansion, and the
    equal-length repository range it maps to."""

    core_start: int
    core_end: int  # inclusive, indices into W
    expanded_start: int
    expanded_end: int  # inclusive, clamped to W
    outer_left: bool  # transcript-context token beyond W's left edge
    outer_right: bool
    repo_start: int
    repo_end: int  # inclusive, indices into the merged repository sequence
    match_cost: float
    length_cost: float
    candidates: int = 0

    @property
    def core_len(self) -> int:
        return self.core_end - self.core_start + 1

    @property
    def query_len(self) -> int:
        return (self.expanded_end - self.expanded_start + 1) + int(self.outer_left) + int(self.outer_right)

    @property
    def repo_len(self) -> int:
        return self.repo_end - self.repo_start + 1

    def repo_position_of(self, w_index: int) -> int:
        """Merged-sequence position matched to W token ``w_index`` (must lie
        in the expanded range)."""
        if not self.expanded_start <= w_index <= self.expanded_end:
            raise IndexError(f"W index {w_index} outside expanded range")
        return self.repo_start + int(self.outer_left) + (w_index - self.expanded_start)


@dataclass(frozen=True)
class PartitionResult:
    segments: tuple[SegmentMatch, ...]
    total_cost: float

    def segment_covering(self, w_index: int) -> SegmentMatch:
        for seg in self.segments:
            if seg.core_start <= w_index <= seg.core_end:
                return seg
        raise IndexError(f"no segment covers W index {w_index}")


@dataclass
class SearchStats:
    """Optional instrumentation collected during optimal_partition."""

    queries: int = 0
    distinct_queries: int = 0
    candidates: int = 0
    memo_hits: int = 0


def _expanded_query(
    W: TokenSequence,
    a: int,
    b: int,
    left_context: GeneralizedToken | None,
    right_context: GeneralizedToken | None,
) -> tuple[list[GeneralizedToken], int, int, bool, bool]:
    """Expanded query tokens for core W[a..b] plus range bookkeeping.

    Expansion happens between phonemes only: a gesture never serves as a
    context token and a gesture core edge takes none, since gesture
    mismatches cost infinity and the context would make whole-gesture
    retrieval unsatisfiable. Adjacent segments at a kind boundary simply
    abut instead of overlapping.
    """
    q: list[GeneralizedToken] = []
    exp_start, exp_end = a, b
    outer_left = outer_right = False

    def phoneme_pair(ctx: GeneralizedToken, edge: GeneralizedToken) -> bool:
        return ctx.kind != GESTURE and edge.kind != GESTURE

    if a > 0:
        if phoneme_pair(W[a - 1], W[a]):
            q.append(W[a - 1])
            exp_start = a - 1
    elif left_context is not None and phoneme_pair(left_context, W[a]):
        q.append(left_context)
        outer_left = True
    q.extend(W[i] for i in range(a, b + 1))
    if b + 1 < len(W):
        if phoneme_pair(W[b + 1], W[b]):
            q.append(W[b + 1])
            exp_end = b + 1
    elif right_context is not None and phoneme_pair(right_context, W[b]):
        q.append(right_context)
        outer_right = True
    return q, exp_start, exp_end, outer_left, outer_right


def _query_key(q: Sequence[GeneralizedToken]) -> tuple:
    return tuple((t.kind, t.name, t.duration_s) for t in q)


def _best_candidate(
    q: Sequence[GeneralizedToken],
    index: BigramIndex,
    cfg: CostConfig,
    table: VisemeTable,
) -> tuple[float, int, int]:
    """(best cost, best start position, candidate count) for one expanded
    query; cost is inf when no candidate matches."""
    n = len(index)
    qlen = len(q)
    if qlen >= 2:
        key = (table.class_of(q[0]), table.class_of(q[1]))
        cands = index.lookup(key)
    else:
        cands = index.lookup_unigram(table.class_of(q[0]))
    cands = cands[cands <= n - qlen]
    if cands.size == 0:
        return NO_MATCH, -1, 0
    total = np.zeros(cands.size, dtype=np.float64)
    for o, w in enumerate(q):
        pos = cands + o
        if w.kind == GESTURE:
            ok = index.is_gesture[pos] & (index.names[pos] == w.name)
            step = np.where(ok, cfg.c_time * np.abs(index.durations[pos] - w.duration_s), np.inf)
        else:
            w_cls = table.class_of(w)
            step = (
                cfg.c_phoneme * (index.names[pos] != w.name)
                + cfg.c_viseme * (index.classes[pos] != w_cls)
                + cfg.c_time * np.abs(index.durations[pos] - w.duration_s)
            )
            step = np.where(index.is_gesture[pos], np.inf, step)
        total += step
    best = int(np.argmin(total))  # first occurrence: earliest repository position
    cost = float(total[best])
    if not math.isfinite(cost):
        return NO_MATCH, -1, int(cands.size)
    return cost, int(cands[best]), int(cands.size)


def optimal_partition(
    W: TokenSequence,
    repo: RepositoryBundle,
    index: BigramIndex,
    cfg: CostConfig,
    left_context: GeneralizedToken | None = None,
    right_context: GeneralizedToken | None = None,
    memoize: bool = True,
    stats: SearchStats | None = None,
) -> PartitionResult:
    """Minimum-cost partition of W into matched segments of length <= L.

    Each candidate segment is expanded by one context token per side (from
    W for interior boundaries, from the surrounding transcript when given)
    and matched through the bi-gram index. Ties break toward fewer
    segments, then the earliest repository position.
    """
    m = len(W)
    if m == 0:
        raise ValueError("W must be non-empty")
    L = cfg.max_segment_len

    memo: dict[tuple, tuple[float, int, int]] = {}
    failed: dict[int, list[GeneralizedToken]] = {}

    INF = math.inf
    best_cost = [INF] * (m + 1)
    best_nseg = [0] * (m + 1)
    choice: list[SegmentMatch | None] = [None] * (m + 1)
    best_cost[0] = 0.0

    for j in range(1, m + 1):
        for seg_len in range(1, min(L, j) + 1):
            a = j - seg_len
            if best_cost[a] == INF:
                continue
            b = j - 1
            q, exp_start, exp_end, outer_left, outer_right = _expanded_query(
                W, a, b, left_context, right_context
            )
            key = _query_key(q)
            if memoize and key in memo:
                cost, pos, n_cands = memo[key]
                if stats is not None:
                    stats.queries += 1
                    stats.memo_hits += 1
            else:
                cost, pos, n_cands = _best_candidate(q, index, cfg, table=index.table)
                if memoize:
                    memo[key] = (cost, pos, n_cands)
                if stats is not None:
                    stats.queries += 1
                    stats.distinct_queries += 1
                    stats.candidates += n_cands
            if cost == NO_MATCH:
                failed.setdefault(a, q)
                continue
            length_cost = cfg.kappa_len / seg_len
            total = best_cost[a] + cost + length_cost
            nseg = best_nseg[a] + 1
            if (total, nseg) < (best_cost[j], best_nseg[j]):
                best_cost[j] = total
                best_nseg[j] = nseg
                choice[j] = SegmentMatch(
                    core_start=a,
                    core_end=b,
                    expanded_start=exp_start,
                    expanded_end=exp_end,
                    outer_left=outer_left,
                    outer_right=outer_right,
                    repo_start=pos,
                    repo_end=pos + len(q) - 1,
                    match_cost=cost,
                    length_cost=length_cost,
                    candidates=n_cands,
                )

    if best_cost[m] == INF:
        # Report the failing query covering the earliest unreachable position.
        query = failed.get(min(failed), []) if failed else list(W)
        raise NoMatchError(query)

    segments: list[SegmentMatch] = []
    j = m
    while j > 0:
        seg = choice[j]
        assert seg is not None
        segments.append(seg)
        j = seg.core_start
    segments.reverse()
    return PartitionResult(segments=tuple(segments), total_cost=best_cost[m])


def _compositions(total: int, max_len: int):
    """All ordered compositions of ``total`` into parts of size <= max_len."""
    if total == 0:
        yield []
        return
    for first in range(1, min(max_len, total) + 1):
        for rest in _compositions(total - first, max_len):
            yield [first] + rest


def brute_force_oracle(
    W: TokenSequence,
    repo: RepositoryBundle,
    cfg: CostConfig,
    table: VisemeTable,
    left_context: GeneralizedToken | None = None,
    right_context: GeneralizedToken | None = None,
    constrained: bool = True,
    force: bool = False,
) -> PartitionResult:
    """Exhaustive reference search over all partitions (parts <= L).

    ``constrained`` keeps the bi-gram start restriction (for equivalence
    checks against optimal_partition); without it every repository position
    is a candidate (for quality-gap measurement). Independent of
    BigramIndex: candidate filtering compares viseme classes directly.
    """
    tokens = search_tokens(repo)
    m, n = len(W), len(tokens)
    if m == 0:
        raise ValueError("W must be non-empty")
    if not force and (m > 10 or n > 400):
        raise InstanceTooLargeError(
            f"|W|={m}, |V|={n} exceeds the oracle guard (10, 400); pass force=True"
        )

    seg_cache: dict[tuple[int, int], tuple[float, int]] = {}

    def best_for_segment(a: int, b: int) -> tuple[float, int]:
        if (a, b) in seg_cache:
            return seg_cache[(a, b)]
        q, *_ = _expanded_query(W, a, b, left_context, right_context)
        best = (NO_MATCH, -1)
        for p in range(0, n - len(q) + 1):
            if constrained:
                if table.class_of(tokens[p]) != table.class_of(q[0]):
                    continue
                if len(q) >= 2 and table.class_of(tokens[p + 1]) != table.class_of(q[1]):
                    continue
            c = match_cost(q, tokens[p : p + len(q)], cfg, table)
            if c < best[0]:
                best = (c, p)
        seg_cache[(a, b)] = best
        return best

    best_total = NO_MATCH
    best_key: tuple | None = None
    best_parts: list[tuple[int, int, float, int]] | None = None
    for comp in _compositions(m, cfg.max_segment_len):
        total = 0.0
        a = 0
        parts: list[tuple[int, int, float, int]] = []
        positions: list[int] = []
        feasible = True
        for seg_len in comp:
            b = a + seg_len - 1
            c, p = best_for_segment(a, b)
            if c == NO_MATCH:
                feasible = False
                break
            # Two separate additions, matching the DP's accumulation order,
            # so equal partitions produce bit-equal totals.
            total += c
            total += cfg.kappa_len / seg_len
            parts.append((a, b, c, p))
            positions.append(p)
            a = b + 1
        if not feasible:
            continue
        key = (total, len(comp), tuple(positions))
        if best_key is None or key < best_key:
            best_key = key
            best_total = total
            best_parts = parts

    if best_parts is None:
        raise NoMatchError(list(W))

    segments = []
    for a, b, c, p in best_parts:
        q, exp_start, exp_end, outer_left, outer_right = _expanded_query(
            W, a, b, left_context, right_context
        )
        segments.append(
            SegmentMatch(
                core_start=a,
                core_end=b,
                expanded_start=exp_start,
                expanded_end=exp_end,
                outer_left=outer_left,
                outer_right=outer_right,
                repo_start=p,
                repo_end=p + len(q) - 1,
                match_cost=c,
                length_cost=cfg.kappa_len / (b - a + 1),
            )
        )
    return PartitionResult(segments=tuple(segments), total_cost=best_total)
