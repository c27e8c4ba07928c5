"""Synthetic fixture generator.

Builds deterministic repositories and target clips with known ground
truth: per-viseme prototype vectors low-pass filtered into a track, style
variants that scale deviation from rest, and targets related to the source
content by a recorded affine map. Every draw comes from a seeded stream,
so identical specs produce byte-identical artifacts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    EXPRESSION_DIM,
    GESTURE_NAMES,
    ILLUMINATION_DIM,
    POSE_DIM,
    ExpressionTrack,
    GeneralizedToken,
    TokenSequence,
    VisemeTable,
)
from .repo_io import PREVIEW_ROWS, RepositoryBundle, TargetClip

_GESTURE_DURATIONS = (0.4, 0.7, 1.0, 1.3)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    rate_tokens_per_s: float = 12.0
    duration_s: float = 60.0
    target_duration_s: float = 150.0
    fps: float = 30.0
    coarticulation: float = 0.85  # single-pole smoothing constant in [0, 1)
    noise_sigma: float = 0.01
    style_gain: float = 1.0  # scales deviation from the all-zero rest pose
    style_label: str = "neutral"
    duration_jitter: float = 0.0  # token durations vary by +- this fraction
    gesture_every_s: float = 6.0
    prototype_scale: float = 0.4
    affine_scale: float = 0.1  # spectral radius of the A - I part

    def __post_init__(self):
        if self.duration_s <= 0 or self.target_duration_s <= 0:
            raise ValueError("durations must be positive")
        if self.rate_tokens_per_s <= 0:
            raise ValueError("rate_tokens_per_s must be positive")
        if not 0.0 <= self.coarticulation < 1.0:
            raise ValueError("coarticulation must lie in [0, 1)")
        if not 0.0 <= self.duration_jitter <= 0.9:
            raise ValueError("duration_jitter must lie in [0, 0.9]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def prototypes(self, table: VisemeTable) -> np.ndarray:
        """(n_classes, 64) per-viseme-class mouth-shape prototypes. The
        rest pose is all zeros; prototypes are deviations from it."""
        rng = np.random.default_rng([self.seed, 1])
        return rng.normal(0.0, self.prototype_scale, (table.n_classes, EXPRESSION_DIM))

    def affine(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Ground-truth target map (A, b) plus A's condition number; A is a
        bounded perturbation of the identity, so it stays well-conditioned."""
        rng = np.random.default_rng([self.seed, 2])
        r = rng.normal(0.0, 1.0, (EXPRESSION_DIM, EXPRESSION_DIM))
        r *= self.affine_scale / np.linalg.norm(r, 2)
        a = np.eye(EXPRESSION_DIM) + r
        b = rng.normal(0.0, 0.05, EXPRESSION_DIM)
        return a, b, float(np.linalg.cond(a))


def _token_run(
    rng: np.random.Generator,
    names: Sequence[str],
    n: int,
    nominal_s: float,
    jitter: float,
) -> list[GeneralizedToken]:
    """Contiguous phoneme tokens with jittered durations starting at 0."""
    picks = rng.choice(np.array(names), size=n)
    if jitter > 0:
        durs = nominal_s * (1.0 + jitter * rng.uniform(-1.0, 1.0, n))
    else:
        durs = np.full(n, nominal_s)
    tokens = []
    clock = 0.0
    for name, d in zip(picks, durs):
        tokens.append(GeneralizedToken.phoneme(str(name), clock, clock + float(d)))
        clock += float(d)
    return tokens


def _staircase(
    tokens: Sequence[GeneralizedToken],
    gestures: Sequence[GeneralizedToken],
    prototypes: np.ndarray,
    table: VisemeTable,
    gain: float,
    fps: float,
    n_frames: int,
) -> np.ndarray:
    """Frame-wise prototype targets: the covering phoneme's class prototype
    plus any active gesture's prototype, scaled by the style gain."""
    x = np.zeros((n_frames, EXPRESSION_DIM))
    for tok in tokens:
        f0 = max(0, int(round(tok.start_s * fps)))
        f1 = min(n_frames, int(round(tok.end_s * fps)))
        if f1 > f0:
            x[f0:f1] += prototypes[table.class_of(tok)]
    for g in gestures:
        f0 = max(0, int(round(g.start_s * fps)))
        f1 = min(n_frames, int(round(g.end_s * fps)))
        if f1 > f0:
            x[f0:f1] += prototypes[table.class_of(g)]
    return gain * x


def _smooth(x: np.ndarray, alpha: float) -> np.ndarray:
    """Single-pole low-pass: y[i] = alpha*y[i-1] + (1-alpha)*x[i]."""
    y = np.empty_like(x)
    if x.shape[0] == 0:
        return y
    y[0] = x[0]
    for i in range(1, x.shape[0]):
        y[i] = alpha * y[i - 1] + (1.0 - alpha) * x[i]
    return y


def gen_repository(spec: SynthSpec, table: VisemeTable | None = None) -> RepositoryBundle:
    table = table or VisemeTable.default()
    prototypes = spec.prototypes(table)
    nominal = 1.0 / spec.rate_tokens_per_s
    n_tokens = int(round(spec.duration_s * spec.rate_tokens_per_s))
    rng_tok = np.random.default_rng([spec.seed, 0])
    tokens = _token_run(rng_tok, table.phoneme_names, n_tokens, nominal, spec.duration_jitter)

    speech_end = tokens[-1].end_s
    gestures: list[GeneralizedToken] = []
    k = 0
    t = spec.gesture_every_s
    while t + max(_GESTURE_DURATIONS) < speech_end:
        name = GESTURE_NAMES[k % len(GESTURE_NAMES)]
        dur = _GESTURE_DURATIONS[(k + k // len(GESTURE_NAMES)) % len(_GESTURE_DURATIONS)]
        gestures.append(GeneralizedToken.gesture(name, t, t + dur))
        k += 1
        t += spec.gesture_every_s

    duration = speech_end + nominal
    n_frames = int(round(duration * spec.fps))
    x = _staircase(tokens, gestures, prototypes, table, spec.style_gain, spec.fps, n_frames)
    y = _smooth(x, spec.coarticulation)
    if spec.noise_sigma > 0:
        y = y + np.random.default_rng([spec.seed, 3]).normal(0.0, spec.noise_sigma, y.shape)

    # Designate closed-mouth exemplars: onsets of a spread of closure-class
    # tokens, written back exactly as the scaled closure prototype.
    closure_tokens = [i for i, tok in enumerate(tokens) if table.class_of(tok) == table.closure_class]
    exemplar_frames: list[int] = []
    if closure_tokens:
        stride = max(1, len(closure_tokens) // 8)
        closure_value = spec.style_gain * prototypes[table.closure_class]
        for i in closure_tokens[::stride][:8]:
            f = int(round(tokens[i].start_s * spec.fps))
            if 0 <= f < n_frames:
                y[f] = closure_value
                exemplar_frames.append(f)

    basis = np.random.default_rng([spec.seed, 5]).normal(0.0, 0.15, (PREVIEW_ROWS, EXPRESSION_DIM))
    return RepositoryBundle(
        style=spec.style_label,
        tokens=TokenSequence(tokens),
        track=ExpressionTrack(fps=spec.fps, values=y.astype(np.float32)),
        closed_mouth_frames=tuple(exemplar_frames),
        gestures=tuple(gestures),
        preview_basis=basis.astype(np.float32),
    )


def style_variant(spec: SynthSpec, label: str, gain: float) -> SynthSpec:
    """Same world, different articulation energy: only the gain and label
    change, so tokens and timing stay identical."""
    return replace(spec, style_label=label, style_gain=gain)


def _speech_content(
    spec: SynthSpec,
    names: Sequence[str],
    table: VisemeTable,
    prototypes: np.ndarray,
) -> tuple[list[GeneralizedToken], np.ndarray, int]:
    """Clean target-side speech: jittered token run plus its smoothed
    frame-wise prototype track at unit gain."""
    nominal = 1.0 / spec.rate_tokens_per_s
    n_tokens = int(round(spec.target_duration_s * spec.rate_tokens_per_s))
    rng_tok = np.random.default_rng([spec.seed, 11])
    tokens = _token_run(rng_tok, names, n_tokens, nominal, spec.duration_jitter)
    duration = tokens[-1].end_s + nominal
    n_frames = int(round(duration * spec.fps))
    x = _staircase(tokens, (), prototypes, table, 1.0, spec.fps, n_frames)
    s = _smooth(x, spec.coarticulation)
    return tokens, s, n_frames


def affine_task(
    spec: SynthSpec, table: VisemeTable | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Aligned regression fixture: per-frame source values and their images
    under the ground-truth map plus noise, so a retargeting model trained on
    (source, target) windows can be scored against a known answer. Uses the
    same streams as gen_target, so the source side equals the target clip's
    underlying clean content."""
    table = table or VisemeTable.default()
    prototypes = spec.prototypes(table)
    a, b, _ = spec.affine()
    _, s, _ = _speech_content(spec, table.phoneme_names, table, prototypes)
    t = s @ a.T + b
    if spec.noise_sigma > 0:
        t = t + np.random.default_rng([spec.seed, 12]).normal(0.0, spec.noise_sigma, t.shape)
    return s, t


def gen_target(
    spec: SynthSpec,
    repo: RepositoryBundle,
    coverage: float = 1.0,
    table: VisemeTable | None = None,
) -> TargetClip:
    """Target clip whose expression frames are A*(regenerated source
    content) + b + noise, speaking phonemes from a ``coverage`` fraction of
    the repository's viseme classes."""
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must lie in (0, 1]")
    table = table or VisemeTable.default()
    prototypes = spec.prototypes(table)
    a, b, _ = spec.affine()

    repo_classes = sorted({table.class_of(t) for t in repo.tokens})
    n_keep = max(1, math.ceil(coverage * len(repo_classes)))
    rng_cov = np.random.default_rng([spec.seed, 10])
    kept = set(rng_cov.permutation(np.array(repo_classes, dtype=np.int64))[:n_keep].tolist())
    names = [n for n in table.phoneme_names if table.phoneme_class(n) in kept]
    if not names:
        raise ValueError("coverage subset left no phonemes to speak")

    tokens, s, n_frames = _speech_content(spec, names, table, prototypes)
    t_vals = s @ a.T + b
    if spec.noise_sigma > 0:
        t_vals = t_vals + np.random.default_rng([spec.seed, 12]).normal(
            0.0, spec.noise_sigma, t_vals.shape
        )

    ft = np.arange(n_frames) / spec.fps
    pose = np.stack(
        [
            0.05 * np.sin(2 * np.pi * 0.10 * ft),
            0.04 * np.cos(2 * np.pi * 0.07 * ft),
            0.03 * np.sin(2 * np.pi * 0.13 * ft + 1.0),
        ],
        axis=1,
    )
    d = np.arange(ILLUMINATION_DIM)
    illum = 0.5 + 0.1 * np.sin(2 * np.pi * (0.05 + 0.01 * d)[None, :] * ft[:, None] + d[None, :])
    rng_id = np.random.default_rng([spec.seed, 13])
    geometry = rng_id.normal(0.0, 0.3, 80)
    reflectance = rng_id.normal(0.0, 0.3, 80)

    assert pose.shape == (n_frames, POSE_DIM)
    return TargetClip(
        tokens=TokenSequence(tokens),
        track=ExpressionTrack(fps=spec.fps, values=t_vals.astype(np.float32)),
        pose=pose.astype(np.float32),
        illumination=illum.astype(np.float32),
        geometry=geometry.astype(np.float32),
        reflectance=reflectance.astype(np.float32),
    )
