"""End-to-end orchestration and editing sessions.

The synthesis pipeline runs search, stitch, retargeting inference, and
expansion to full face parameters in that order. Sessions record every
edit with the exact inputs that produced it (append-only, write-then-
rename persistence), so any result can be reproduced bit-for-bit and
refinement re-runs stitching onward from the stored partition.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    EditScript,
    ExpressionTrack,
    FullFaceFrame,
    PhonosynthError,
    TokenSequence,
    VisemeTable,
    parse_edit_script,
    sample_channels,
    token_from_json,
    token_to_json,
)
from .repo_io import (
    RepositoryBundle,
    TargetClip,
    default_lexicon,
    load_bundle,
    load_target,
)
from .retarget import RetargetModel, load_model
from .search import (
    BigramIndex,
    CostConfig,
    PartitionResult,
    SegmentMatch,
    build_index,
    optimal_partition,
    search_tokens,
)
from .stitch import StitchConfig, StitchTrace, stitch


class UntrainedSessionError(PhonosynthError):
    """An edit was requested before a retargeting model was available."""


class UnknownResultError(PhonosynthError):
    pass


class InvalidOverrideError(PhonosynthError):
    """A refinement override references a boundary that does not exist."""


# ---------------------------------------------------------------------------
# pure pipeline steps


@dataclass(frozen=True)
class SynthesisResult:
    edit: EditScript
    style: str
    partition: PartitionResult
    stitched: ExpressionTrack
    retargeted: ExpressionTrack | None
    trace: StitchTrace


def synthesize(
    edit: EditScript | str,
    repo: RepositoryBundle,
    index: BigramIndex,
    table: VisemeTable,
    cost_cfg: CostConfig,
    stitch_cfg: StitchConfig,
    model: RetargetModel | None = None,
    lexicon=None,
) -> SynthesisResult:
    """Search, stitch, and (given a model) retarget one edit script."""
    if isinstance(edit, str):
        edit = parse_edit_script(edit, lexicon=lexicon or default_lexicon())
    partition = optimal_partition(edit.tokens, repo, index, cost_cfg)
    track, trace = stitch(partition, repo, edit.tokens, stitch_cfg, table)
    retargeted = model.infer(track) if model is not None else None
    return SynthesisResult(
        edit=edit,
        style=repo.style,
        partition=partition,
        stitched=track,
        retargeted=retargeted,
        trace=trace,
    )


def expand_to_full(
    target: TargetClip,
    track: ExpressionTrack,
    edit_start_s: float,
    edit_end_s: float,
) -> list[FullFaceFrame]:
    """Full face parameters for the edit: pose and illumination are the
    target's values over [edit_start_s, edit_end_s] linearly retimed onto
    the edit duration; geometry and reflectance are copied unchanged."""
    clip_dur = target.duration_s
    if not 0.0 <= edit_start_s <= edit_end_s <= clip_dur + 1e-9:
        raise ValueError(
            f"edit location [{edit_start_s}, {edit_end_s}] outside clip of {clip_dur:.3f}s"
        )
    n = track.n_frames
    if n == 0:
        return []
    u = np.arange(n, dtype=np.float64) / n
    t_src = edit_start_s + u * (edit_end_s - edit_start_s)
    pose = sample_channels(target.pose, target.track.fps, t_src)
    illum = sample_channels(target.illumination, target.track.fps, t_src)
    frames = []
    for i in range(n):
        frames.append(
            FullFaceFrame(
                expression=track.values[i],
                geometry=target.geometry,
                reflectance=target.reflectance,
                pose=pose[i].astype(np.float32),
                illumination=illum[i].astype(np.float32),
            )
        )
    return frames


def default_edit_interval(target: TargetClip, edit_duration_s: float) -> tuple[float, float]:
    """Centered interval of the edit's own duration, clamped to the clip."""
    clip = target.duration_s
    if edit_duration_s >= clip:
        return 0.0, clip
    t0 = (clip - edit_duration_s) / 2.0
    return t0, t0 + edit_duration_s


# ---------------------------------------------------------------------------
# config (de)serialization for session records


def cost_to_json(cfg: CostConfig) -> dict:
    return dataclasses.asdict(cfg)


def cost_from_json(doc: dict) -> CostConfig:
    return CostConfig(**doc)


def stitch_to_json(cfg: StitchConfig) -> dict:
    return {
        "gaussian_sigma_frames": cfg.gaussian_sigma_frames,
        "gaussian_radius_frames": cfg.gaussian_radius_frames,
        "closure_frames": cfg.closure_frames,
        "boundary_radius_overrides": {str(k): v for k, v in cfg.boundary_radius_overrides.items()},
        "closure_overrides": {str(k): v for k, v in cfg.closure_overrides.items()},
    }


def stitch_from_json(doc: dict) -> StitchConfig:
    return StitchConfig(
        gaussian_sigma_frames=float(doc["gaussian_sigma_frames"]),
        gaussian_radius_frames=int(doc["gaussian_radius_frames"]),
        closure_frames=int(doc["closure_frames"]),
        boundary_radius_overrides={int(k): int(v) for k, v in doc.get("boundary_radius_overrides", {}).items()},
        closure_overrides={int(k): int(v) for k, v in doc.get("closure_overrides", {}).items()},
    )


def apply_overrides(cfg: StitchConfig, overrides: dict | None) -> StitchConfig:
    """Merge refinement controls into a stitch config. ``overrides`` keys:
    ``boundary_radius`` and ``closures``, each mapping index -> frames."""
    if not overrides:
        return cfg
    radius = dict(cfg.boundary_radius_overrides)
    closures = dict(cfg.closure_overrides)
    for k, v in (overrides.get("boundary_radius") or {}).items():
        radius[int(k)] = int(v)
    for k, v in (overrides.get("closures") or {}).items():
        closures[int(k)] = int(v)
    return dataclasses.replace(
        cfg, boundary_radius_overrides=radius, closure_overrides=closures
    )


def partition_to_json(partition: PartitionResult) -> dict:
    return {
        "total_cost": partition.total_cost,
        "segments": [dataclasses.asdict(s) for s in partition.segments],
    }


def partition_from_json(doc: dict) -> PartitionResult:
    return PartitionResult(
        segments=tuple(SegmentMatch(**s) for s in doc["segments"]),
        total_cost=float(doc["total_cost"]),
    )


# ---------------------------------------------------------------------------
# workspace: bundles, model, target, configs rooted in one directory


class Workspace:
    """Lazy-loading view of a synthesis workspace directory:
    ``bundles/<style>.json``, ``target.json``, ``model.rtm``, and an
    optional ``config.toml`` overriding packaged defaults."""

    def __init__(self, root: str | Path, table: VisemeTable | None = None):
        from .config import load_configs

        self.root = Path(root)
        self.table = table or VisemeTable.default()
        cfg_path = self.root / "config.toml"
        self.configs = load_configs(cfg_path if cfg_path.exists() else None)
        self.lexicon = default_lexicon()
        self._bundles: dict[str, RepositoryBundle] = {}
        self._indexes: dict[str, BigramIndex] = {}
        self._model: RetargetModel | None = None
        self._model_loaded = False
        self._target: TargetClip | None = None
        self._target_loaded = False

    def styles(self) -> list[str]:
        bdir = self.root / "bundles"
        if not bdir.is_dir():
            return []
        return sorted(p.stem for p in bdir.glob("*.json"))

    def bundle(self, style: str) -> RepositoryBundle:
        if style not in self._bundles:
            path = self.root / "bundles" / f"{style}.json"
            if not path.exists():
                raise KeyError(f"unknown style {style!r}; available: {self.styles()}")
            self._bundles[style] = load_bundle(path)
        return self._bundles[style]

    def index(self, style: str) -> BigramIndex:
        if style not in self._indexes:
            self._indexes[style] = build_index(self.bundle(style), self.table)
        return self._indexes[style]

    def model(self) -> RetargetModel | None:
        if not self._model_loaded:
            path = self.root / "model.rtm"
            self._model = load_model(path) if path.exists() else None
            self._model_loaded = True
        return self._model

    def model_path(self) -> Path:
        return self.root / "model.rtm"

    def target(self) -> TargetClip | None:
        if not self._target_loaded:
            path = self.root / "target.json"
            self._target = load_target(path) if path.exists() else None
            self._target_loaded = True
        return self._target


# ---------------------------------------------------------------------------
# sessions


@dataclass
class ResultRecord:
    result_id: str
    parent: str | None
    edit_text: str
    style: str
    cost: CostConfig
    stitch_cfg: StitchConfig
    edit_tokens: TokenSequence
    partition: PartitionResult
    trace: StitchTrace
    stitched: ExpressionTrack
    final: ExpressionTrack  # retargeted when a model exists


class Session:
    def __init__(self, store: "SessionStore", session_id: str, style: str):
        self.store = store
        self.id = session_id
        self.style = style
        self.result_ids: list[str] = []

    @property
    def dir(self) -> Path:
        return self.store.root / self.id


class SessionStore:
    """Append-only persistence for editing sessions. Each result is a JSON
    record plus raw float32 track files; writes go to a temp file first and
    are renamed into place."""

    def __init__(self, workspace: Workspace, root: str | Path | None = None):
        self.workspace = workspace
        self.root = Path(root) if root is not None else workspace.root / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._load_existing()

    def _load_existing(self) -> None:
        for sdir in sorted(self.root.glob("s*")):
            meta = sdir / "session.json"
            if not meta.is_file():
                continue
            doc = json.loads(meta.read_text())
            session = Session(self, doc["id"], doc["style"])
            session.result_ids = list(doc["results"])
            self._sessions[session.id] = session

    def create_session(self, style: str = "neutral") -> Session:
        if style not in self.workspace.styles():
            raise KeyError(f"unknown style {style!r}; available: {self.workspace.styles()}")
        n = 1
        while f"s{n}" in self._sessions:
            n += 1
        session = Session(self, f"s{n}", style)
        session.dir.mkdir(parents=True, exist_ok=True)
        self._sessions[session.id] = session
        self._write_session_meta(session)
        return session

    def get(self, session_id: str) -> Session:
        if session_id not in self._sessions:
            raise KeyError(f"unknown session {session_id!r}")
        return self._sessions[session_id]

    def sessions(self) -> list[Session]:
        return list(self._sessions.values())

    def _write_session_meta(self, session: Session) -> None:
        doc = {"id": session.id, "style": session.style, "results": session.result_ids}
        _write_atomic(session.dir / "session.json", json.dumps(doc, indent=1, sort_keys=True).encode())

    # -- synthesis ---------------------------------------------------------

    def synthesize_edit(
        self,
        session: Session,
        text: str,
        style: str | None = None,
        overrides: dict | None = None,
    ) -> str:
        ws = self.workspace
        model = ws.model()
        if model is None:
            raise UntrainedSessionError(
                "no retargeting model in the workspace; run training first"
            )
        style = style or session.style
        repo = ws.bundle(style)
        index = ws.index(style)
        cost_cfg = ws.configs.cost
        stitch_cfg = apply_overrides(ws.configs.stitch, overrides)
        edit = parse_edit_script(text, lexicon=ws.lexicon)
        partition = optimal_partition(edit.tokens, repo, index, cost_cfg)
        return self._run_and_record(
            session, None, text, style, cost_cfg, stitch_cfg, edit.tokens, partition
        )

    def refine(self, session: Session, result_id: str, overrides: dict | None) -> str:
        """Re-run stitching onward with merged overrides; the stored
        partition is reused, so search never re-executes."""
        parent = self.load_result(session, result_id)
        stitch_cfg = apply_overrides(parent.stitch_cfg, overrides)
        n_boundaries = max(0, len(parent.partition.segments) - 1)
        for b in stitch_cfg.boundary_radius_overrides:
            if not 0 <= b < n_boundaries:
                raise InvalidOverrideError(
                    f"boundary index {b} out of range (result has {n_boundaries})"
                )
        return self._run_and_record(
            session,
            result_id,
            parent.edit_text,
            parent.style,
            parent.cost,
            stitch_cfg,
            parent.edit_tokens,
            parent.partition,
        )

    def _run_and_record(
        self,
        session: Session,
        parent: str | None,
        text: str,
        style: str,
        cost_cfg: CostConfig,
        stitch_cfg: StitchConfig,
        edit_tokens: TokenSequence,
        partition: PartitionResult,
    ) -> str:
        ws = self.workspace
        repo = ws.bundle(style)
        track, trace = stitch(partition, repo, edit_tokens, stitch_cfg, ws.table)
        model = ws.model()
        final = model.infer(track) if model is not None else track
        rid = f"r{len(session.result_ids) + 1}"
        record = ResultRecord(
            result_id=rid,
            parent=parent,
            edit_text=text,
            style=style,
            cost=cost_cfg,
            stitch_cfg=stitch_cfg,
            edit_tokens=edit_tokens,
            partition=partition,
            trace=trace,
            stitched=track,
            final=final,
        )
        self._persist(session, record)
        session.result_ids.append(rid)
        self._write_session_meta(session)
        return rid

    # -- persistence -------------------------------------------------------

    def _persist(self, session: Session, rec: ResultRecord) -> None:
        base = session.dir / rec.result_id
        _write_atomic(Path(f"{base}.stitched.f32"), rec.stitched.values.astype("<f4").tobytes())
        _write_atomic(Path(f"{base}.final.f32"), rec.final.values.astype("<f4").tobytes())
        doc = {
            "result_id": rec.result_id,
            "parent": rec.parent,
            "edit_text": rec.edit_text,
            "style": rec.style,
            "cost": cost_to_json(rec.cost),
            "stitch": stitch_to_json(rec.stitch_cfg),
            "edit_tokens": [token_to_json(t) for t in rec.edit_tokens],
            "partition": partition_to_json(rec.partition),
            "trace": rec.trace.to_json(),
            "fps": rec.final.fps,
            "n_frames": rec.final.n_frames,
        }
        _write_atomic(Path(f"{base}.json"), json.dumps(doc, indent=1, sort_keys=True).encode())

    def load_result(self, session: Session, result_id: str) -> ResultRecord:
        base = session.dir / result_id
        path = Path(f"{base}.json")
        if not path.is_file():
            raise UnknownResultError(f"unknown result {result_id!r} in session {session.id}")
        doc = json.loads(path.read_text())
        fps = float(doc["fps"])
        n = int(doc["n_frames"])

        def read_track(suffix: str) -> ExpressionTrack:
            raw = Path(f"{base}.{suffix}.f32").read_bytes()
            values = np.frombuffer(raw, dtype="<f4").reshape(n, -1)
            return ExpressionTrack(fps=fps, values=values)

        return ResultRecord(
            result_id=doc["result_id"],
            parent=doc["parent"],
            edit_text=doc["edit_text"],
            style=doc["style"],
            cost=cost_from_json(doc["cost"]),
            stitch_cfg=stitch_from_json(doc["stitch"]),
            edit_tokens=TokenSequence([token_from_json(t) for t in doc["edit_tokens"]]),
            partition=partition_from_json(doc["partition"]),
            trace=StitchTrace.from_json(doc["trace"]),
            stitched=read_track("stitched"),
            final=read_track("final"),
        )

    # -- presentation ------------------------------------------------------

    def result_payload(self, session: Session, result_id: str) -> dict:
        """The full result document served over HTTP: final track (base64
        float32), trace, per-segment provenance, and the preview polyline
        for every frame."""
        import base64

        rec = self.load_result(session, result_id)
        repo = self.workspace.bundle(rec.style)
        tokens = search_tokens(repo)
        provenance = []
        for seg in rec.partition.segments:
            provenance.append(
                {
                    "core_start": seg.core_start,
                    "core_end": seg.core_end,
                    "repo_start": seg.repo_start,
                    "repo_end": seg.repo_end,
                    "repo_start_s": tokens[seg.repo_start].start_s,
                    "repo_end_s": tokens[seg.repo_end].end_s,
                    "match_cost": seg.match_cost,
                    "length_cost": seg.length_cost,
                }
            )
        preview = None
        if repo.preview_basis is not None:
            poly = rec.final.values.astype(np.float64) @ repo.preview_basis.astype(np.float64).T
            preview = poly.reshape(rec.final.n_frames, -1, 2).tolist()
        return {
            "result_id": rec.result_id,
            "parent": rec.parent,
            "edit_text": rec.edit_text,
            "style": rec.style,
            "fps": rec.final.fps,
            "n_frames": rec.final.n_frames,
            "track": base64.b64encode(rec.final.values.astype("<f4").tobytes()).decode("ascii"),
            "stitched": base64.b64encode(rec.stitched.values.astype("<f4").tobytes()).decode("ascii"),
            "trace": rec.trace.to_json(),
            "provenance": {"total_cost": rec.partition.total_cost, "segments": provenance},
            "preview": preview,
        }


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
