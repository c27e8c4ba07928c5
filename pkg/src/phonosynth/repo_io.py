"""Load/save repository bundles and target clips; alignment and lexicon IO.

Bundles are single JSON documents (see docs/formats.md). Expression tracks
are stored as flat row-major float lists, or as a sidecar binary of
little-endian float32 referenced by relative path for large tracks. Decimal
serialization round-trips float32 payloads exactly.
"""
from __future__ import annotations

import difflib
import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    EXPRESSION_DIM,
    GEOMETRY_DIM,
    ILLUMINATION_DIM,
    POSE_DIM,
    REFLECTANCE_DIM,
    ExpressionTrack,
    GeneralizedToken,
    OutOfVocabularyError,
    PhonosynthError,
    TokenSequence,
    token_from_json,
    token_to_json,
)

BUNDLE_FORMAT = "phonosynth-bundle/1"
TARGET_FORMAT = "phonosynth-target/1"

PREVIEW_POINTS = 20
PREVIEW_ROWS = 2 * PREVIEW_POINTS

# Tracks longer than this are written as .f32 sidecars by default.
SIDECAR_THRESHOLD_FRAMES = 20_000

_TIME_EPS = 1e-9


class SchemaError(PhonosynthError):
    """A bundle/clip document violates the schema. Carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class AlignmentError(PhonosynthError):
    """A phoneme alignment file is malformed."""


@dataclass(frozen=True)
class RepositoryBundle:
    """Annotated source-actor repository: tokens, expression track, closure
    exemplars, gesture annotations and an optional mouth-outline preview
    basis for visualization."""

    style: str
    tokens: TokenSequence
    track: ExpressionTrack
    closed_mouth_frames: tuple[int, ...] = ()
    gestures: tuple[GeneralizedToken, ...] = ()
    preview_basis: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "closed_mouth_frames", tuple(int(i) for i in self.closed_mouth_frames))
        object.__setattr__(self, "gestures", tuple(self.gestures))
        dur = self.track.duration_s
        for i in self.closed_mouth_frames:
            if not 0 <= i < self.track.n_frames:
                raise ValueError(f"closed-mouth frame {i} out of range (track has {self.track.n_frames})")
        if self.tokens and self.tokens.end_s > dur + _TIME_EPS:
            raise ValueError(f"tokens end at {self.tokens.end_s}s but track is {dur}s")
        for g in self.gestures:
            if g.kind != "gesture":
                raise ValueError(f"gesture annotation {g.name!r} has kind {g.kind!r}")
            if g.start_s < -_TIME_EPS or g.end_s > dur + _TIME_EPS:
                raise ValueError(f"gesture {g.name} [{g.start_s},{g.end_s}] outside track of {dur}s")
        if self.preview_basis is not None:
            basis = np.asarray(self.preview_basis, dtype=np.float32)
            if basis.shape != (PREVIEW_ROWS, EXPRESSION_DIM):
                raise ValueError(f"preview basis must be ({PREVIEW_ROWS}, {EXPRESSION_DIM}), got {basis.shape}")
            basis.setflags(write=False)
            object.__setattr__(self, "preview_basis", basis)


@dataclass(frozen=True)
class TargetClip:
    """Short target-actor clip: aligned phonemes, expression track, per-frame
    pose/illumination, constant geometry/reflectance."""

    tokens: TokenSequence
    track: ExpressionTrack
    pose: np.ndarray
    illumination: np.ndarray
    geometry: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        n = self.track.n_frames
        for attr, shape in (
            ("pose", (n, POSE_DIM)),
            ("illumination", (n, ILLUMINATION_DIM)),
            ("geometry", (GEOMETRY_DIM,)),
            ("reflectance", (REFLECTANCE_DIM,)),
        ):
            arr = np.asarray(getattr(self, attr), dtype=np.float32)
            if arr.shape != shape:
                raise ValueError(f"{attr}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{attr}: non-finite values")
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    @property
    def fps(self) -> float:
        return self.track.fps

    @property
    def duration_s(self) -> float:
        return self.track.duration_s


# ---------------------------------------------------------------------------
# JSON (de)serialization helpers
# ---------------------------------------------------------------------------


def _expect(doc: Mapping, key: str, kind, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing field")
    val = doc[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SchemaError(f"{path}.{key}" if path else key, f"expected number, got {type(val).__name__}")
        return float(val)
    if not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _array_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(x) for x in np.asarray(arr, dtype=np.float32).ravel()]}


def _array_from_json(doc, path: str, sidecar_dir: str | None = None) -> np.ndarray:
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected an object with 'shape' and 'data' or 'file'")
    shape = _expect(doc, "shape", list, path)
    try:
        shape = tuple(int(s) for s in shape)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}.shape", "expected a list of integers") from None
    n = int(np.prod(shape)) if shape else 0
    if "file" in doc:
        rel = _expect(doc, "file", str, path)
        if sidecar_dir is None:
            raise SchemaError(f"{path}.file", "sidecar reference but no base directory")
        full = os.path.join(sidecar_dir, rel)
        if not os.path.exists(full):
            raise SchemaError(f"{path}.file", f"sidecar not found: {rel}")
        flat = np.fromfile(full, dtype="<f4")
    else:
        data = _expect(doc, "data", list, path)
        flat = np.asarray(data, dtype=np.float32)
    if flat.size != n:
        raise SchemaError(f"{path}.data", f"expected {n} values for shape {shape}, got {flat.size}")
    return flat.reshape(shape)


def _tokens_from_json(items, path: str) -> list[GeneralizedToken]:
    if not isinstance(items, list):
        raise SchemaError(path, "expected a list")
    out = []
    for i, obj in enumerate(items):
        try:
            out.append(token_from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}[{i}]", str(exc)) from exc
    return out


def _write_json_atomic(doc: dict, path: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _maybe_sidecar(arr: np.ndarray, json_path: str, stem_suffix: str, sidecar: bool | None) -> dict:
    json_path = os.fspath(json_path)
    use = sidecar if sidecar is not None else arr.shape[0] > SIDECAR_THRESHOLD_FRAMES
    if not use:
        return _array_to_json(arr)
    rel = os.path.splitext(os.path.basename(json_path))[0] + stem_suffix
    full = os.path.join(os.path.dirname(json_path) or ".", rel)
    np.asarray(arr, dtype="<f4").tofile(full)
    return {"shape": list(arr.shape), "file": rel}


def save_bundle(bundle: RepositoryBundle, path: str, sidecar: bool | None = None) -> None:
    """Write a bundle as JSON; large tracks go to a .f32 sidecar unless
    ``sidecar`` forces either behavior."""
    path = os.fspath(path)
    doc = {
        "format": BUNDLE_FORMAT,
        "style": bundle.style,
        "fps": bundle.track.fps,
        "tokens": [token_to_json(t) for t in bundle.tokens],
        "gestures": [token_to_json(t) for t in bundle.gestures],
        "closed_mouth_frames": list(bundle.closed_mouth_frames),
        "expression": _maybe_sidecar(bundle.track.values, path, ".expression.f32", sidecar),
        "preview_basis": _array_to_json(bundle.preview_basis) if bundle.preview_basis is not None else None,
    }
    _write_json_atomic(doc, path)


def load_bundle(path: str) -> RepositoryBundle:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"not valid JSON: {exc}") from exc
    fmt = _expect(doc, "format", str, "")
    if fmt != BUNDLE_FORMAT:
        raise SchemaError("format", f"expected {BUNDLE_FORMAT!r}, got {fmt!r}")
    base = os.path.dirname(os.path.abspath(path))
    fps = _expect(doc, "fps", float, "")
    values = _array_from_json(_expect(doc, "expression", dict, ""), "expression", base)
    if values.ndim != 2 or values.shape[1] != EXPRESSION_DIM:
        raise SchemaError("expression.shape", f"expected (n, {EXPRESSION_DIM}), got {values.shape}")
    basis_doc = doc.get("preview_basis")
    basis = _array_from_json(basis_doc, "preview_basis", base) if basis_doc is not None else None
    try:
        return RepositoryBundle(
            style=_expect(doc, "style", str, ""),
            tokens=TokenSequence(tuple(_tokens_from_json(_expect(doc, "tokens", list, ""), "tokens"))),
            track=ExpressionTrack(fps=fps, values=values),
            closed_mouth_frames=tuple(_expect(doc, "closed_mouth_frames", list, "")),
            gestures=tuple(_tokens_from_json(_expect(doc, "gestures", list, ""), "gestures")),
            preview_basis=basis,
        )
    except ValueError as exc:
        raise SchemaError("", str(exc)) from exc


def save_target(clip: TargetClip, path: str, sidecar: bool | None = None) -> None:
    path = os.fspath(path)
    doc = {
        "format": TARGET_FORMAT,
        "fps": clip.track.fps,
        "tokens": [token_to_json(t) for t in clip.tokens],
        "expression": _maybe_sidecar(clip.track.values, path, ".expression.f32", sidecar),
        "pose": _maybe_sidecar(clip.pose, path, ".pose.f32", sidecar),
        "illumination": _maybe_sidecar(clip.illumination, path, ".illumination.f32", sidecar),
        "geometry": _array_to_json(clip.geometry),
        "reflectance": _array_to_json(clip.reflectance),
    }
    _write_json_atomic(doc, path)


def load_target(path: str) -> TargetClip:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"not valid JSON: {exc}") from exc
    fmt = _expect(doc, "format", str, "")
    if fmt != TARGET_FORMAT:
        raise SchemaError("format", f"expected {TARGET_FORMAT!r}, got {fmt!r}")
    base = os.path.dirname(os.path.abspath(path))
    fps = _expect(doc, "fps", float, "")
    values = _array_from_json(_expect(doc, "expression", dict, ""), "expression", base)
    if values.ndim != 2 or values.shape[1] != EXPRESSION_DIM:
        raise SchemaError("expression.shape", f"expected (n, {EXPRESSION_DIM}), got {values.shape}")
    try:
        return TargetClip(
            tokens=TokenSequence(tuple(_tokens_from_json(_expect(doc, "tokens", list, ""), "tokens"))),
            track=ExpressionTrack(fps=fps, values=values),
            pose=_array_from_json(_expect(doc, "pose", dict, ""), "pose", base),
            illumination=_array_from_json(_expect(doc, "illumination", dict, ""), "illumination", base),
            geometry=_array_from_json(_expect(doc, "geometry", dict, ""), "geometry", base),
            reflectance=_array_from_json(_expect(doc, "reflectance", dict, ""), "reflectance", base),
        )
    except ValueError as exc:
        raise SchemaError("", str(exc)) from exc


# ---------------------------------------------------------------------------
# Alignment files and lexicon
# ---------------------------------------------------------------------------


def ingest_alignment(source: str | Sequence[str]) -> TokenSequence:
    """Parse an alignment file: UTF-8 lines ``NAME START_S END_S``.

    ``source`` is a path or an iterable of lines. Names in the gesture
    vocabulary become gesture tokens, everything else is a phoneme.
    """
    from .core import GESTURE_NAMES

    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    tokens: list[GeneralizedToken] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise AlignmentError(f"line {lineno}: expected 'NAME START_S END_S', got {line!r}")
        name = parts[0]
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError:
            raise AlignmentError(f"line {lineno}: bad number in {line!r}") from None
        kind = "gesture" if name in GESTURE_NAMES else "phoneme"
        try:
            tok = GeneralizedToken(kind, name, start, end)
        except ValueError as exc:
            raise AlignmentError(f"line {lineno}: {exc}") from exc
        if tokens and tok.start_s < tokens[-1].end_s - _TIME_EPS:
            raise AlignmentError(
                f"line {lineno}: non-monotonic times ({tok.name} starts at {tok.start_s} "
                f"before previous end {tokens[-1].end_s})"
            )
        tokens.append(tok)
    return TokenSequence(tuple(tokens))


def export_alignment(seq: TokenSequence) -> str:
    """Inverse of ingest_alignment; float repr round-trips exactly."""
    return "".join(f"{t.name} {t.start_s!r} {t.end_s!r}\n" for t in seq)


def load_lexicon(path: str) -> dict[str, tuple[str, ...]]:
    """CMU-dictionary-style lines ``WORD P1 P2 ...``; ';;;' comments."""
    lex: dict[str, tuple[str, ...]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith(";;;"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise SchemaError("lexicon", f"entry with no phonemes: {line!r}")
            lex[parts[0].upper()] = tuple(parts[1:])
    return lex


def default_lexicon() -> dict[str, tuple[str, ...]]:
    from importlib import resources

    text = resources.files("phonosynth.data").joinpath("lexicon.dict").read_text("utf-8")
    lex: dict[str, tuple[str, ...]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";;;"):
            continue
        parts = line.split()
        lex[parts[0].upper()] = tuple(parts[1:])
    return lex


def g2p_fallback(
    words: str,
    lexicon: Mapping[str, Sequence[str]],
    rate: float = 12.0,
) -> TokenSequence:
    """Uniform-duration phonemes at ``rate`` phonemes/second, word order kept.

    A stand-in timing source for when no external alignment is available.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    tokens: list[GeneralizedToken] = []
    clock = 0.0
    dur = 1.0 / rate
    for raw in words.split():
        word = raw.strip(".,!?;:\"'()").upper()
        if not word:
            continue
        if word not in lexicon:
            suggestions = difflib.get_close_matches(word, list(lexicon), n=3)
            raise OutOfVocabularyError(word, suggestions)
        for name in lexicon[word]:
            tokens.append(GeneralizedToken.phoneme(name, clock, clock + dur))
            clock += dur
    return TokenSequence(tuple(tokens))
