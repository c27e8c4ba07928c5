"""Command-line entry points.

Verbs: datagen (build synthetic fixtures), train (fit the retargeting
model), search / stitch / synth (run pipeline stages on a workspace or
bundle), serve (HTTP API). All verbs are thin wrappers over the library;
no engine logic lives here.
"""
from __future__ import annotations

import argparse
import base64
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_configs, load_toml
from .core import VisemeTable, parse_edit_script
from .datagen import SynthSpec, gen_repository, gen_target, style_variant
from .pipeline import (
    SessionStore,
    Workspace,
    default_edit_interval,
    expand_to_full,
    partition_to_json,
    synthesize,
)
from .repo_io import default_lexicon, load_bundle, save_bundle, save_target
from .retarget import (
    RetargetModel,
    build_correspondences,
    model_checksum,
    save_model,
    train,
    windows_from_pairs,
)
from .search import build_index, optimal_partition
from .stitch import stitch

DEFAULT_STYLES = {"energetic": 1.6, "mumble": 0.5}


def _spec_from_toml(path: str | None) -> tuple[SynthSpec, dict[str, float]]:
    if path is None:
        return SynthSpec(), dict(DEFAULT_STYLES)
    doc = load_toml(path)
    fields = {f.name for f in dataclasses.fields(SynthSpec)}
    synth = {k: v for k, v in doc.get("synth", {}).items() if k in fields}
    styles = {str(k): float(v) for k, v in doc.get("styles", {}).items()}
    return SynthSpec(**synth), styles or dict(DEFAULT_STYLES)


def cmd_datagen(args) -> int:
    spec, styles = _spec_from_toml(args.spec)
    out = Path(args.out)
    (out / "bundles").mkdir(parents=True, exist_ok=True)
    table = VisemeTable.default()

    bundle = gen_repository(spec, table)
    save_bundle(bundle, out / "bundles" / f"{spec.style_label}.json")
    print(f"wrote style {spec.style_label!r}: {len(bundle.tokens)} tokens, "
          f"{bundle.track.n_frames} frames")
    for label, gain in styles.items():
        variant = gen_repository(style_variant(spec, label, gain), table)
        save_bundle(variant, out / "bundles" / f"{label}.json")
        print(f"wrote style {label!r} (gain {gain})")

    target = gen_target(spec, bundle, coverage=args.coverage, table=table)
    save_target(target, out / "target.json")
    print(f"wrote target: {len(target.tokens)} tokens, {target.track.n_frames} frames")

    a, b, cond = spec.affine()
    meta = {
        "spec": dataclasses.asdict(spec),
        "styles": styles,
        "coverage": args.coverage,
        "affine_condition": cond,
    }
    (out / "datagen.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_train(args) -> int:
    ws = Path(args.workspace)
    repo = load_bundle(args.repo or ws / "bundles" / "neutral.json")
    from .repo_io import load_target

    target = load_target(args.target or ws / "target.json")
    table = VisemeTable.default()
    configs = load_configs(args.config)
    tc = configs.train
    if args.epochs is not None:
        tc = dataclasses.replace(tc, max_epochs=args.epochs)
    if args.seed is not None:
        tc = dataclasses.replace(tc, seed=args.seed)

    corr = build_correspondences(repo, target, table, configs.cost)
    print(f"correspondences: {len(corr.pairs)} pairs, {len(corr.gaps)} gaps")
    model = RetargetModel.create(
        hidden=args.hidden, lambda_accel=tc.lambda_accel, seed=tc.seed
    )
    s, t = windows_from_pairs(corr.pairs, model.window)
    print(f"training on {s.shape[0]} windows of length {model.window}")
    history = train(model, s, t, tc)
    out = Path(args.out or ws / "model.rtm")
    save_model(model, out)
    log = {"epochs": len(history), "loss": history, "checksum": model_checksum(out)}
    out.with_suffix(".log.json").write_text(json.dumps(log, indent=1) + "\n")
    print(f"final epoch loss {history[-1]:.6f}; wrote {out}")
    return 0


def _load_edit(args, lexicon):
    return parse_edit_script(args.edit, lexicon=lexicon)


def cmd_search(args) -> int:
    repo = load_bundle(args.repo)
    table = VisemeTable.default()
    configs = load_configs(args.config)
    index = build_index(repo, table)
    edit = _load_edit(args, default_lexicon())
    partition = optimal_partition(edit.tokens, repo, index, configs.cost)
    doc = partition_to_json(partition)
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"total cost {partition.total_cost:.4f} over {len(partition.segments)} segments")
    for i, seg in enumerate(partition.segments):
        names = " ".join(t.name for t in edit.tokens[seg.core_start : seg.core_end + 1])
        print(
            f"  [{i}] tokens {seg.core_start}..{seg.core_end} ({names}) -> "
            f"repo {seg.repo_start}..{seg.repo_end} "
            f"match {seg.match_cost:.4f} len {seg.length_cost:.4f}"
        )
    return 0


def cmd_stitch(args) -> int:
    repo = load_bundle(args.repo)
    table = VisemeTable.default()
    configs = load_configs(args.config)
    index = build_index(repo, table)
    edit = _load_edit(args, default_lexicon())
    partition = optimal_partition(edit.tokens, repo, index, configs.cost)
    track, trace = stitch(partition, repo, edit.tokens, configs.stitch, table)
    if args.out:
        track.values.astype("<f4").tofile(args.out)
        print(f"wrote {track.n_frames} frames ({track.fps} fps) to {args.out}")
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace.to_json(), indent=1, sort_keys=True) + "\n")
        print(f"wrote trace to {args.trace}")
    return 0


def cmd_synth(args) -> int:
    ws = Workspace(args.workspace)
    style = args.style or "neutral"
    repo = ws.bundle(style)
    result = synthesize(
        args.edit,
        repo,
        ws.index(style),
        ws.table,
        ws.configs.cost,
        ws.configs.stitch,
        model=ws.model(),
        lexicon=ws.lexicon,
    )
    final = result.retargeted or result.stitched
    doc = {
        "edit_text": args.edit,
        "style": style,
        "fps": final.fps,
        "n_frames": final.n_frames,
        "track": base64.b64encode(final.values.astype("<f4").tobytes()).decode("ascii"),
        "trace": result.trace.to_json(),
        "provenance": partition_to_json(result.partition),
        "retargeted": result.retargeted is not None,
    }
    target = ws.target()
    if target is not None and result.retargeted is not None:
        t0, t1 = default_edit_interval(target, final.duration_s)
        frames = expand_to_full(target, final, t0, t1)
        doc["full_frames"] = len(frames)
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.workspace), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phonosynth", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("datagen", help="generate synthetic fixture data")
    d.add_argument("--spec", help="TOML spec ([synth] fields, [styles] gains)")
    d.add_argument("--out", required=True, help="workspace directory to write")
    d.add_argument("--coverage", type=float, default=1.0)
    d.set_defaults(func=cmd_datagen)

    t = sub.add_parser("train", help="train the retargeting model")
    t.add_argument("--workspace", required=True)
    t.add_argument("--repo", help="repository bundle (default: workspace neutral)")
    t.add_argument("--target", help="target clip (default: workspace target.json)")
    t.add_argument("--out", help="checkpoint path (default: workspace model.rtm)")
    t.add_argument("--config", help="TOML config overriding defaults")
    t.add_argument("--hidden", type=int, default=1024)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("search", help="run the phoneme search for an edit")
    s.add_argument("--repo", required=True)
    s.add_argument("--edit", required=True, help="edit text, e.g. 'hi there [smile]'")
    s.add_argument("--config")
    s.add_argument("--json", help="write the partition as JSON")
    s.set_defaults(func=cmd_search)

    st = sub.add_parser("stitch", help="search and stitch an edit to a track")
    st.add_argument("--repo", required=True)
    st.add_argument("--edit", required=True)
    st.add_argument("--config")
    st.add_argument("--out", help="raw little-endian float32 frames")
    st.add_argument("--trace", help="write the stitch trace as JSON")
    st.set_defaults(func=cmd_stitch)

    sy = sub.add_parser("synth", help="full pipeline against a workspace")
    sy.add_argument("--workspace", required=True)
    sy.add_argument("--edit", required=True)
    sy.add_argument("--style")
    sy.add_argument("--out", help="result JSON (default: stdout)")
    sy.set_defaults(func=cmd_synth)

    sv = sub.add_parser("serve", help="serve the HTTP API for a workspace")
    sv.add_argument("--workspace", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8787)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
