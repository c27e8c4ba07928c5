"""Expression retargeting.

Self-supervised correspondence mining between the repository and a target
clip, and a small recurrent network that maps source expression parameters
to the target actor as residuals. The recurrence feeds the previous H
outputs back as inputs; training unrolls windows of length T and
backpropagates through the feedback paths. Everything runs on numpy in
float64; no framework involved.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ExpressionTrack, PhonosynthError, VisemeTable
from .repo_io import RepositoryBundle, TargetClip
from .search import CostConfig, match_cost, search_tokens

PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
CHECKPOINT_MAGIC = b"PHRT1\n"


# ---------------------------------------------------------------------------
# correspondences


@dataclass(frozen=True)
class CorrespondencePair:
    """Frame-aligned (source, target) windows plus their provenance."""

    source: np.ndarray  # (n, dim) float64, repository frames
    target: np.ndarray  # (n, dim) float64, target frames retimed to source
    repo_range: tuple[int, int]  # inclusive token indices, merged sequence
    target_range: tuple[int, int]
    rank: str  # "A" (best) or "B" (second best)
    cost: float = 0.0

    def __post_init__(self):
        if self.source.shape != self.target.shape:
            raise ValueError("source/target windows must have equal shapes")
        if self.rank not in ("A", "B"):
            raise ValueError(f"rank must be 'A' or 'B', got {self.rank!r}")


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: tuple[CorrespondencePair, ...]
    gaps: tuple[int, ...]  # repo token indices no match covered

    @property
    def covered_tokens(self) -> set:
        covered = set()
        for p in self.pairs:
            covered.update(range(p.repo_range[0], p.repo_range[1] + 1))
        return covered


def build_correspondences(
    repo: RepositoryBundle,
    target: TargetClip,
    table: VisemeTable,
    cfg: CostConfig,
) -> CorrespondenceSet:
    """Greedy maximal-run matching of the repository against the target.

    Scanning from the repository start, each step takes the longest run
    whose viseme-class sequence occurs in the target, keeps up to the two
    lowest-cost occurrences, then continues one token before the run's end
    so consecutive runs share a transition token. Target frames are
    linearly retimed onto the repository token intervals.
    """
    repo_tokens = search_tokens(repo)
    tgt_tokens = tuple(target.tokens)
    if not repo_tokens or not tgt_tokens:
        raise ValueError("both repository and target token sequences must be non-empty")
    repo_cls = [table.class_of(t) for t in repo_tokens]
    tgt_cls = [table.class_of(t) for t in tgt_tokens]
    by_class: dict[int, list[int]] = {}
    for j, c in enumerate(tgt_cls):
        by_class.setdefault(c, []).append(j)

    n, m = len(repo_tokens), len(tgt_tokens)
    pairs: list[CorrespondencePair] = []
    gaps: list[int] = []
    i = 0
    while i < n:
        starts = by_class.get(repo_cls[i], [])
        if not starts:
            gaps.append(i)
            i += 1
            continue
        # Grow k while at least one target occurrence keeps matching.
        alive = starts
        k = 1
        while i + k < n:
            nxt = [j for j in alive if j + k < m and tgt_cls[j + k] == repo_cls[i + k]]
            if not nxt:
                break
            alive = nxt
            k += 1
        run = [repo_tokens[i + o] for o in range(k)]
        scored = sorted(
            (match_cost(run, [tgt_tokens[j + o] for o in range(k)], cfg, table), j)
            for j in alive
        )
        for rank, (cost, j) in zip(("A", "B"), scored[:2]):
            src, tgt = _aligned_frames(repo, repo_tokens, target, i, j, k)
            if src.shape[0] == 0:
                continue
            pairs.append(
                CorrespondencePair(
                    source=src,
                    target=tgt,
                    repo_range=(i, i + k - 1),
                    target_range=(j, j + k - 1),
                    rank=rank,
                    cost=float(cost),
                )
            )
        i = i + k - 1 if k >= 2 else i + 1
    if not pairs:
        raise PhonosynthError("target shares no viseme content with the repository")
    return CorrespondenceSet(pairs=tuple(pairs), gaps=tuple(gaps))


def _aligned_frames(
    repo: RepositoryBundle,
    repo_tokens: Sequence,
    target: TargetClip,
    i: int,
    j: int,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Repository frames over tokens [i, i+k) paired with target values
    sampled at the linearly corresponding times of tokens [j, j+k)."""
    from .core import sample_channels

    tgt_tokens = tuple(target.tokens)
    fps = repo.track.fps
    f0 = int(round(repo_tokens[i].start_s * fps))
    f1 = int(round(repo_tokens[i + k - 1].end_s * fps))
    f1 = min(f1, repo.track.n_frames)
    f0 = max(f0, 0)
    if f1 <= f0:
        return np.empty((0, repo.track.values.shape[1])), np.empty((0, repo.track.values.shape[1]))
    src = repo.track.values[f0:f1].astype(np.float64)
    times = np.empty(f1 - f0, dtype=np.float64)
    o = 0
    for f in range(f0, f1):
        t = f / fps
        while o + 1 < k and t >= repo_tokens[i + o].end_s:
            o += 1
        rt = repo_tokens[i + o]
        u = (t - rt.start_s) / rt.duration_s
        u = min(1.0, max(0.0, u))
        tt = tgt_tokens[j + o]
        times[f - f0] = tt.start_s + u * tt.duration_s
    tgt = sample_channels(target.track.values, target.track.fps, times)
    return src, tgt


# ---------------------------------------------------------------------------
# model


@dataclass
class RetargetModel:
    """Residual recurrent unit: three relu layers and a linear residual
    head; the previous H inputs and H outputs are concatenated with the
    current input (zero-padded at the window start)."""

    dim: int
    hidden: int
    window: int  # unroll length during training
    feedback: int  # number of previous steps fed back (H)
    lambda_accel: float
    dropout: tuple[float, float, float]
    seed: int
    weights: dict = field(repr=False, default=None)

    @property
    def in_dim(self) -> int:
        return self.dim * (1 + 2 * self.feedback)

    @staticmethod
    def create(
        dim: int = 64,
        hidden: int = 1024,
        window: int = 7,
        feedback: int = 2,
        lambda_accel: float = 10.0,
        dropout: tuple[float, float, float] = (0.25, 0.50, 0.25),
        seed: int = 0,
    ) -> "RetargetModel":
        model = RetargetModel(
            dim=dim,
            hidden=hidden,
            window=window,
            feedback=feedback,
            lambda_accel=lambda_accel,
            dropout=dropout,
            seed=seed,
        )
        rng = np.random.default_rng(seed)
        in_dim = model.in_dim
        # He initialization for the relu layers; the residual head starts at
        # zero so the untrained model is exactly the identity map.
        model.weights = {
            "W1": rng.normal(0.0, math.sqrt(2.0 / in_dim), (in_dim, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, math.sqrt(2.0 / hidden), (hidden, hidden)),
            "b2": np.zeros(hidden),
            "W3": rng.normal(0.0, math.sqrt(2.0 / hidden), (hidden, hidden)),
            "b3": np.zeros(hidden),
            "W4": np.zeros((hidden, dim)),
            "b4": np.zeros(dim),
        }
        return model

    def forward(
        self,
        s: np.ndarray,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
        cache: dict | None = None,
    ) -> np.ndarray:
        """Run the recurrence over windows ``s`` of shape (B, T, dim) or
        (T, dim); returns predictions of the same shape. In train mode,
        inverted dropout masks are drawn from ``rng`` in step order."""
        squeeze = s.ndim == 2
        if squeeze:
            s = s[None]
        B, T, D = s.shape
        if D != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {D}")
        if train_mode and rng is None:
            raise ValueError("train mode requires an rng for dropout")
        w = self.weights
        H = self.feedback
        zeros = np.zeros((B, D))
        ys: list[np.ndarray] = []
        steps: list[dict] = []
        for i in range(T):
            blocks = [s[:, i]]
            blocks += [s[:, i - h] if i - h >= 0 else zeros for h in range(1, H + 1)]
            blocks += [ys[i - h] if i - h >= 0 else zeros for h in range(1, H + 1)]
            x = np.concatenate(blocks, axis=1)
            a1 = x @ w["W1"] + w["b1"]
            h1 = np.maximum(a1, 0.0)
            d1 = self._drop(h1, 0, train_mode, rng)
            a2 = d1[0] @ w["W2"] + w["b2"]
            h2 = np.maximum(a2, 0.0)
            d2 = self._drop(h2, 1, train_mode, rng)
            a3 = d2[0] @ w["W3"] + w["b3"]
            h3 = np.maximum(a3, 0.0)
            d3 = self._drop(h3, 2, train_mode, rng)
            r = d3[0] @ w["W4"] + w["b4"]
            y = s[:, i] + r
            ys.append(y)
            if cache is not None:
                steps.append(
                    {
                        "x": x,
                        "p1": a1 > 0, "m1": d1[1], "d1": d1[0],
                        "p2": a2 > 0, "m2": d2[1], "d2": d2[0],
                        "p3": a3 > 0, "m3": d3[1], "d3": d3[0],
                    }
                )
        y_all = np.stack(ys, axis=1)
        if cache is not None:
            cache["steps"] = steps
        return y_all[0] if squeeze else y_all

    def _drop(self, h, layer, train_mode, rng):
        p = self.dropout[layer]
        if not train_mode or p <= 0.0:
            return h, None
        keep = 1.0 - p
        mask = (rng.random(h.shape) < keep) / keep
        return h * mask, mask

    def infer(self, track: ExpressionTrack, chunk: int = 256) -> ExpressionTrack:
        """Slide length-T windows over the track in eval mode and average,
        per frame, the predictions of every window covering it."""
        values = track.values.astype(np.float64)
        N = values.shape[0]
        T = self.window
        if N <= T:
            out = self.forward(values)
            return ExpressionTrack(fps=track.fps, values=out.astype(np.float32))
        n_win = N - T + 1
        acc = np.zeros_like(values)
        cnt = np.zeros(N)
        for lo in range(0, n_win, chunk):
            hi = min(lo + chunk, n_win)
            starts = np.arange(lo, hi)
            wins = np.stack([values[s : s + T] for s in starts])
            outs = self.forward(wins)
            for o in range(T):
                acc[starts + o] += outs[:, o]
                cnt[starts + o] += 1.0
        return ExpressionTrack(fps=track.fps, values=(acc / cnt[:, None]).astype(np.float32))


def window_loss(y: np.ndarray, t: np.ndarray, lambda_accel: float) -> float:
    """Mean over the window of the L1 data term plus the weighted Euclidean
    norm of the output acceleration (zero at the window edges)."""
    if y.shape != t.shape:
        raise ValueError("prediction/target shape mismatch")
    squeeze = y.ndim == 2
    if squeeze:
        y, t = y[None], t[None]
    B, T, _ = y.shape
    data = np.abs(y - t).sum(axis=2).sum(axis=1)
    reg = np.zeros(B)
    if T >= 3:
        acc = y[:, 2:] - 2.0 * y[:, 1:-1] + y[:, :-2]
        reg = np.linalg.norm(acc, axis=2).sum(axis=1)
    per = (data + lambda_accel * reg) / T
    return float(per.mean())


def _loss_grad_y(y: np.ndarray, t: np.ndarray, lambda_accel: float) -> np.ndarray:
    """d(batch-mean window loss)/dy, shape (B, T, dim)."""
    B, T, _ = y.shape
    g = np.sign(y - t) / T
    if T >= 3:
        acc = y[:, 2:] - 2.0 * y[:, 1:-1] + y[:, :-2]
        norms = np.linalg.norm(acc, axis=2, keepdims=True)
        u = np.divide(acc, norms, out=np.zeros_like(acc), where=norms > 0)
        coef = lambda_accel / T
        g[:, 2:] += coef * u
        g[:, 1:-1] -= 2.0 * coef * u
        g[:, :-2] += coef * u
    return g / B


def loss_and_gradients(
    model: RetargetModel,
    s: np.ndarray,
    t: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Batch loss and analytic gradients through the unrolled recurrence,
    including the output-feedback paths."""
    if s.ndim == 2:
        s, t = s[None], t[None]
    cache: dict = {}
    y = model.forward(s, train_mode=train_mode, rng=rng, cache=cache)
    loss = window_loss(y, t, model.lambda_accel)
    g_y = _loss_grad_y(y, t, model.lambda_accel)

    w = model.weights
    B, T, D = s.shape
    H = model.feedback
    grads = {k: np.zeros_like(v) for k, v in w.items()}
    pend = np.zeros((B, T, D))
    for i in reversed(range(T)):
        st = cache["steps"][i]
        gy = g_y[:, i] + pend[:, i]
        gr = gy  # y_i = s_i + r_i
        grads["W4"] += st["d3"].T @ gr
        grads["b4"] += gr.sum(axis=0)
        gd3 = gr @ w["W4"].T
        if st["m3"] is not None:
            gd3 = gd3 * st["m3"]
        ga3 = gd3 * st["p3"]
        grads["W3"] += st["d2"].T @ ga3
        grads["b3"] += ga3.sum(axis=0)
        gd2 = ga3 @ w["W3"].T
        if st["m2"] is not None:
            gd2 = gd2 * st["m2"]
        ga2 = gd2 * st["p2"]
        grads["W2"] += st["d1"].T @ ga2
        grads["b2"] += ga2.sum(axis=0)
        gd1 = ga2 @ w["W2"].T
        if st["m1"] is not None:
            gd1 = gd1 * st["m1"]
        ga1 = gd1 * st["p1"]
        grads["W1"] += st["x"].T @ ga1
        grads["b1"] += ga1.sum(axis=0)
        gx = ga1 @ w["W1"].T
        base = D * (1 + H)
        for h in range(1, H + 1):
            if i - h >= 0:
                pend[:, i - h] += gx[:, base + D * (h - 1) : base + D * h]
    return loss, grads


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    decay_factor: float = 0.5
    decay_period: int = 30  # epochs between decay steps
    clip_norm: float = 5.0
    batch_size: int = 100
    max_epochs: int = 100
    lambda_accel: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in (
            "learning_rate", "decay_factor", "decay_period",
            "clip_norm", "batch_size", "max_epochs",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_accel < 0:
            raise ValueError("lambda_accel must be >= 0")


def windows_from_pairs(
    pairs: Sequence[CorrespondencePair], window: int
) -> tuple[np.ndarray, np.ndarray]:
    """All length-``window`` slides over every pair, stacked into
    (N, window, dim) source/target arrays."""
    srcs, tgts = [], []
    for p in pairs:
        n = p.source.shape[0]
        for lo in range(0, n - window + 1):
            srcs.append(p.source[lo : lo + window])
            tgts.append(p.target[lo : lo + window])
    if not srcs:
        raise ValueError(f"no training window of length {window} fits any pair")
    return np.stack(srcs), np.stack(tgts)


def clip_gradients(grads: dict, clip_norm: float) -> float:
    """Scale all gradients so the global norm is at most ``clip_norm``;
    returns the pre-clip norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > clip_norm and total > 0.0:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale
    return total


def train(
    model: RetargetModel,
    s_windows: np.ndarray,
    t_windows: np.ndarray,
    cfg: TrainConfig,
) -> list[float]:
    """Adam with global-norm clipping over shuffled minibatches; returns the
    per-epoch mean training loss. Deterministic for a fixed cfg.seed."""
    if s_windows.shape != t_windows.shape:
        raise ValueError("source/target window arrays must have equal shapes")
    N = s_windows.shape[0]
    if N < 1:
        raise ValueError("need at least one training window")
    model.lambda_accel = cfg.lambda_accel  # the checkpoint records what was trained
    rng = np.random.default_rng(cfg.seed)
    w = model.weights
    m = {k: np.zeros_like(v) for k, v in w.items()}
    v = {k: np.zeros_like(val) for k, val in w.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history: list[float] = []
    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate * cfg.decay_factor ** (epoch // cfg.decay_period)
        order = rng.permutation(N)
        total, seen = 0.0, 0
        for lo in range(0, N, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, grads = loss_and_gradients(
                model, s_windows[idx], t_windows[idx], train_mode=True, rng=rng
            )
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {lo // cfg.batch_size}"
                )
            clip_gradients(grads, cfg.clip_norm)
            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            for k in PARAM_ORDER:
                m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k] ** 2
                w[k] -= lr * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + eps)
            total += loss * len(idx)
            seen += len(idx)
        history.append(total / seen)
    return history


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: RetargetModel, path) -> None:
    header = {
        "dim": model.dim,
        "hidden": model.hidden,
        "window": model.window,
        "feedback": model.feedback,
        "lambda_accel": model.lambda_accel,
        "dropout": list(model.dropout),
        "seed": model.seed,
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for k in PARAM_ORDER:
            f.write(np.ascontiguousarray(model.weights[k], dtype="<f4").tobytes())


def load_model(path) -> RetargetModel:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise PhonosynthError(f"not a model checkpoint: {path}")
        header = json.loads(f.readline().decode("utf-8"))
        model = RetargetModel(
            dim=int(header["dim"]),
            hidden=int(header["hidden"]),
            window=int(header["window"]),
            feedback=int(header["feedback"]),
            lambda_accel=float(header["lambda_accel"]),
            dropout=tuple(float(p) for p in header["dropout"]),
            seed=int(header["seed"]),
        )
        in_dim = model.in_dim
        shapes = {
            "W1": (in_dim, model.hidden), "b1": (model.hidden,),
            "W2": (model.hidden, model.hidden), "b2": (model.hidden,),
            "W3": (model.hidden, model.hidden), "b3": (model.hidden,),
            "W4": (model.hidden, model.dim), "b4": (model.dim,),
        }
        weights = {}
        for k in PARAM_ORDER:
            shape = shapes[k]
            count = int(np.prod(shape))
            raw = f.read(count * 4)
            if len(raw) != count * 4:
                raise PhonosynthError(f"truncated checkpoint: {path}")
            weights[k] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
        model.weights = weights
    return model


def model_checksum(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
