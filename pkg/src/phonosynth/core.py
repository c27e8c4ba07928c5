"""Domain types shared by the whole engine.

Tokens are phonemes or mouth gestures with absolute timings in seconds.
Expression tracks are fixed-fps sequences of 64-dim expression parameter
frames stored as float32 arrays. The viseme table groups phonemes into
visually equivalent classes and is loaded from a TSV data file so the
grouping stays configuration, not code.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterator, Mapping, Sequence

import numpy as np

EXPRESSION_DIM = 64
GEOMETRY_DIM = 80
REFLECTANCE_DIM = 80
POSE_DIM = 3
ILLUMINATION_DIM = 27

DEFAULT_FPS = 30.0
DEFAULT_GESTURE_DURATION_S = 0.5

PHONEME = "phoneme"
GESTURE = "gesture"

GESTURE_NAMES = (
    "rest",
    "closed_smile",
    "teeth_smile",
    "big_smile",
    "sad",
    "scream",
    "mouth_left",
    "mouth_right",
)

# Tolerance for float jitter when validating adjacent token boundaries.
_TIME_EPS = 1e-9

_STRESS_RE = re.compile(r"[0-2]$")
_DIRECTIVE_RE = re.compile(r"^\[([a-z_]+)(?::(\d+(?:\.\d+)?|\.\d+)s)?\]$")


class PhonosynthError(Exception):
    """Base class for engine errors."""


class UnknownTokenError(PhonosynthError):
    """A token name is absent from the viseme table / gesture vocabulary."""


class InvalidEditError(PhonosynthError):
    """An edit script cannot be parsed or resolved to tokens."""


class OutOfVocabularyError(PhonosynthError):
    """A word has no lexicon entry. Carries nearby suggestions."""

    def __init__(self, word: str, suggestions: Sequence[str] = ()):
        self.word = word
        self.suggestions = tuple(suggestions)
        hint = f" (did you mean: {', '.join(self.suggestions)}?)" if self.suggestions else ""
        super().__init__(f"word not in lexicon: {word!r}{hint}")


def strip_stress(name: str) -> str:
    """Drop a trailing ARPAbet stress digit: ``AH0`` -> ``AH``."""
    return _STRESS_RE.sub("", name)


@dataclass(frozen=True)
class GeneralizedToken:
    """A phoneme or mouth-gesture directive with its time interval."""

    kind: str
    name: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.kind not in (PHONEME, GESTURE):
            raise ValueError(f"bad token kind {self.kind!r}")
        if self.kind == GESTURE and self.name not in GESTURE_NAMES:
            raise ValueError(f"unknown gesture {self.name!r}; expected one of {GESTURE_NAMES}")
        if not self.name:
            raise ValueError("empty token name")
        if self.start_s < 0:
            raise ValueError(f"negative start time {self.start_s} for {self.name}")
        if not self.end_s > self.start_s:
            raise ValueError(
                f"token {self.name} has non-positive duration [{self.start_s}, {self.end_s}]"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @staticmethod
    def phoneme(name: str, start_s: float, end_s: float) -> "GeneralizedToken":
        return GeneralizedToken(PHONEME, name, start_s, end_s)

    @staticmethod
    def gesture(name: str, start_s: float, end_s: float) -> "GeneralizedToken":
        return GeneralizedToken(GESTURE, name, start_s, end_s)


@dataclass(frozen=True)
class TokenSequence:
    """Ordered, non-overlapping tokens. Gaps (silence) are allowed."""

    tokens: tuple[GeneralizedToken, ...] = ()

    def __post_init__(self):
        toks = tuple(self.tokens)
        object.__setattr__(self, "tokens", toks)
        for prev, cur in zip(toks, toks[1:]):
            if cur.start_s < prev.end_s - _TIME_EPS:
                raise ValueError(
                    f"tokens overlap: {prev.name}[{prev.start_s},{prev.end_s}] then "
                    f"{cur.name}[{cur.start_s},{cur.end_s}]"
                )

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[GeneralizedToken]:
        return iter(self.tokens)

    def __getitem__(self, i) -> GeneralizedToken:
        return self.tokens[i]

    @property
    def start_s(self) -> float:
        return self.tokens[0].start_s if self.tokens else 0.0

    @property
    def end_s(self) -> float:
        return self.tokens[-1].end_s if self.tokens else 0.0


class VisemeTable:
    """Total map from token names to dense viseme class ids.

    Phoneme classes come from a TSV file; each gesture name gets its own
    singleton class numbered after the largest phoneme class.
    """

    def __init__(self, phoneme_classes: Mapping[str, int]):
        if not phoneme_classes:
            raise ValueError("empty viseme table")
        ids = set(phoneme_classes.values())
        if ids != set(range(max(ids) + 1)):
            raise ValueError("viseme class ids must be dense from 0")
        closure = {phoneme_classes.get(p) for p in ("M", "B", "P")}
        if len(closure) != 1 or None in closure:
            raise ValueError("M, B and P must share one viseme class")
        self._phonemes = dict(phoneme_classes)
        base = max(ids) + 1
        self._gestures = {name: base + i for i, name in enumerate(GESTURE_NAMES)}

    @classmethod
    def from_tsv(cls, text: str) -> "VisemeTable":
        mapping: dict[str, int] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"visemes.tsv line {lineno}: expected PHONEME<TAB>CLASS_ID")
            mapping[parts[0]] = int(parts[1])
        return cls(mapping)

    @classmethod
    def from_file(cls, path) -> "VisemeTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_tsv(fh.read())

    @classmethod
    def default(cls) -> "VisemeTable":
        return _default_table()

    @property
    def n_phoneme_classes(self) -> int:
        return max(self._phonemes.values()) + 1

    @property
    def n_classes(self) -> int:
        return self.n_phoneme_classes + len(self._gestures)

    @property
    def closure_class(self) -> int:
        return self._phonemes["M"]

    @property
    def phoneme_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._phonemes))

    def phoneme_class(self, name: str) -> int:
        base = strip_stress(name)
        try:
            return self._phonemes[base]
        except KeyError:
            raise UnknownTokenError(f"phoneme {name!r} not in viseme table") from None

    def class_of(self, token: GeneralizedToken | str, kind: str | None = None) -> int:
        """Viseme class of a token (or a bare name, assumed phoneme unless
        it is a gesture name)."""
        if isinstance(token, GeneralizedToken):
            name, kind = token.name, token.kind
        else:
            name = token
            if kind is None:
                kind = GESTURE if name in self._gestures else PHONEME
        if kind == GESTURE:
            try:
                return self._gestures[name]
            except KeyError:
                raise UnknownTokenError(f"unknown gesture {name!r}") from None
        return self.phoneme_class(name)


def viseme_of(name: GeneralizedToken | str, table: VisemeTable) -> int:
    """Viseme class id for a token or token name."""
    return table.class_of(name)


@lru_cache(maxsize=1)
def _default_table() -> VisemeTable:
    text = resources.files("phonosynth.data").joinpath("visemes.tsv").read_text("utf-8")
    return VisemeTable.from_tsv(text)


def _as_readonly_f32(values, shape_tail: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise ValueError(f"{what}: expected shape (n, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite values")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ExpressionTrack:
    """Fixed-fps sequence of 64-dim expression frames (float32).

    Frame ``i`` covers time ``[i/fps, (i+1)/fps)``; its value is the sample
    at ``i/fps``.
    """

    fps: float
    values: np.ndarray

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        arr = _as_readonly_f32(self.values, (EXPRESSION_DIM,), "expression track")
        object.__setattr__(self, "values", arr)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def frame(self, i: int) -> np.ndarray:
        return self.values[i]

    def sample(self, t_s: float) -> np.ndarray:
        """Linearly interpolate the track at time ``t_s`` (clamped)."""
        return sample_channels(self.values, self.fps, t_s)


def sample_channels(values: np.ndarray, fps: float, t_s) -> np.ndarray:
    """Linear interpolation of per-frame channel data at time(s) ``t_s``.

    ``values`` is (n, d); frame i is the sample at i/fps. Times are clamped
    to the track span. Scalar ``t_s`` gives (d,), an array gives (len, d).
    """
    n = values.shape[0]
    if n == 0:
        raise ValueError("cannot sample an empty track")
    x = np.atleast_1d(np.asarray(t_s, dtype=np.float64)) * fps
    x = np.clip(x, 0.0, n - 1)
    i0 = np.floor(x).astype(np.intp)
    i0 = np.minimum(i0, n - 2) if n > 1 else np.zeros_like(i0)
    frac = (x - i0)[:, None]
    lo = values[i0].astype(np.float64)
    hi = values[np.minimum(i0 + 1, n - 1)].astype(np.float64)
    out = lo * (1.0 - frac) + hi * frac
    if np.isscalar(t_s) or np.asarray(t_s).ndim == 0:
        return out[0]
    return out


@dataclass(frozen=True)
class FullFaceFrame:
    """One frame of the complete 254-parameter face model."""

    geometry: np.ndarray
    reflectance: np.ndarray
    pose: np.ndarray
    illumination: np.ndarray
    expression: np.ndarray

    def __post_init__(self):
        for attr, dim in (
            ("geometry", GEOMETRY_DIM),
            ("reflectance", REFLECTANCE_DIM),
            ("pose", POSE_DIM),
            ("illumination", ILLUMINATION_DIM),
            ("expression", EXPRESSION_DIM),
        ):
            arr = np.asarray(getattr(self, attr), dtype=np.float32)
            if arr.shape != (dim,):
                raise ValueError(f"{attr}: expected shape ({dim},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)


@dataclass(frozen=True)
class EditScript:
    """An edit's raw text plus the resolved token sequence with timings."""

    text: str
    tokens: TokenSequence


def _split_items(text: str) -> list[str]:
    items = []
    for raw in text.split():
        if raw.startswith("["):
            items.append(raw)
        else:
            word = raw.strip(".,!?;:\"'()").upper()
            if word:
                items.append(word)
    return items


def _word_phonemes(word: str, lexicon: Mapping[str, Sequence[str]]) -> tuple[str, ...]:
    try:
        return tuple(lexicon[word])
    except KeyError:
        import difflib

        suggestions = difflib.get_close_matches(word, list(lexicon), n=3)
        raise OutOfVocabularyError(word, suggestions) from None


def parse_edit_script(
    text: str,
    timing: Sequence[tuple[str, float]] | None = None,
    lexicon: Mapping[str, Sequence[str]] | None = None,
    rate: float = 12.0,
) -> EditScript:
    """Resolve an edit's text into a timed token sequence.

    ``text`` holds words interleaved with gesture directives like
    ``[smile]`` or ``[smile:1.5s]``. Word phonemes and durations come from
    ``timing`` (ordered (name, duration_s) pairs for the words' phonemes,
    e.g. from an external alignment) when given; otherwise from ``lexicon``
    with uniform durations at ``rate`` phonemes/second. When both are given
    the lexicon apportions the timing entries to words; without a lexicon,
    a timing list can only be anchored if no directive splits the words.

    Gestures default to 0.5 s unless the directive carries a duration.
    """
    items = _split_items(text)
    if not items:
        raise InvalidEditError("empty edit")

    # Resolve each item to a list of (kind, name, duration) triples.
    resolved: list[tuple[str, str, float]] = []
    word_slots: list[tuple[int, str]] = []  # (index into resolved, word)
    for item in items:
        if item.startswith("["):
            m = _DIRECTIVE_RE.match(item)
            if not m:
                raise InvalidEditError(f"unparseable directive {item!r}")
            name, dur = m.group(1), m.group(2)
            duration = float(dur) if dur is not None else DEFAULT_GESTURE_DURATION_S
            if duration <= 0:
                raise InvalidEditError(f"directive {item!r} has non-positive duration")
            resolved.append((GESTURE, name, duration))
        else:
            word_slots.append((len(resolved), item))
            resolved.append(("word", item, 0.0))

    if word_slots:
        per_word: list[list[tuple[str, float]]]
        if timing is not None:
            entries = [(str(n), float(d)) for n, d in timing]
            if lexicon is not None:
                per_word = []
                pos = 0
                for _, word in word_slots:
                    names = _word_phonemes(word, lexicon)
                    chunk = entries[pos : pos + len(names)]
                    if len(chunk) != len(names):
                        raise InvalidEditError(
                            f"timing list too short for word {word!r} "
                            f"(needs {len(names)} phonemes, {len(entries) - pos} left)"
                        )
                    per_word.append(chunk)
                    pos += len(names)
                if pos != len(entries):
                    raise InvalidEditError(f"{len(entries) - pos} unused timing entries")
            else:
                slots = [i for i, _ in word_slots]
                if slots != list(range(slots[0], slots[0] + len(slots))):
                    raise InvalidEditError(
                        "timing without a lexicon cannot anchor a directive between words"
                    )
                per_word = [[] for _ in word_slots]
                per_word[0] = entries
        else:
            if lexicon is None:
                raise InvalidEditError("words present but neither timing nor lexicon given")
            if rate <= 0:
                raise ValueError("rate must be positive")
            per_word = [
                [(name, 1.0 / rate) for name in _word_phonemes(word, lexicon)]
                for _, word in word_slots
            ]
        for (slot, _), phones in zip(word_slots, per_word):
            resolved[slot] = ("word-resolved", phones, 0.0)  # type: ignore[assignment]

    tokens: list[GeneralizedToken] = []
    clock = 0.0
    for kind, payload, duration in resolved:
        if kind == GESTURE:
            tokens.append(GeneralizedToken.gesture(payload, clock, clock + duration))
            clock += duration
        else:
            for name, dur in payload:  # type: ignore[union-attr]
                if dur <= 0:
                    raise InvalidEditError(f"non-positive duration for phoneme {name!r}")
                tokens.append(GeneralizedToken.phoneme(name, clock, clock + dur))
                clock += dur
    if not tokens:
        raise InvalidEditError("edit resolved to no tokens")
    try:
        return EditScript(text=text, tokens=TokenSequence(tuple(tokens)))
    except ValueError as exc:
        raise InvalidEditError(str(exc)) from exc


def token_to_json(tok: GeneralizedToken) -> dict:
    return {"kind": tok.kind, "name": tok.name, "start_s": tok.start_s, "end_s": tok.end_s}


def token_from_json(obj: Mapping) -> GeneralizedToken:
    return GeneralizedToken(obj["kind"], obj["name"], float(obj["start_s"]), float(obj["end_s"]))


def edit_script_to_json(script: EditScript) -> str:
    doc = {
        "format": "phonosynth-edit/1",
        "text": script.text,
        "tokens": [token_to_json(t) for t in script.tokens],
    }
    return json.dumps(doc, sort_keys=True)


def edit_script_from_json(text: str) -> EditScript:
    doc = json.loads(text)
    if doc.get("format") != "phonosynth-edit/1":
        raise InvalidEditError(f"unknown edit format {doc.get('format')!r}")
    toks = TokenSequence(tuple(token_from_json(t) for t in doc["tokens"]))
    return EditScript(text=doc["text"], tokens=toks)
