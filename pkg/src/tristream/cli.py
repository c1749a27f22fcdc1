"""Command-line entry point.

Exit codes: 0 success, 1 bad input, 2 malformed file, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .codec import (
    ExtractParams, SIDECAR, bench_backend, extract_tristream, field_to_sidecar, estimate_motion,
    parse_sidecar, read_trs, route_backend, serialize_sidecar, write_trs,
)
from .codec.backends import BackendChoice, NATIVE, RGB_PROXY, default_threads, normalize_codec
from .errors import FormatError, InputError
from .frames import SceneObject, SceneSpec, gen_synthetic, load_raw, save_ppm
from .hierarchy import decompose, token_budget

REPORT_SCHEMA_VERSION = 1
DENSE_FRAMES = 32


@dataclass(frozen=True)
class PipelineConfig:
    """Defaults are the flagship operating point: 8 anchors, 64 motion tokens each, gated fusion."""

    n_anchors: int = 8
    motion_tokens: int = 64
    tokens_per_frame: int = 1396
    block_size: int = 16
    search_range: int = 8
    subpel_scale: int | None = None  # 4 for sidecar / proxy, 2 for the mpeg4 profile
    fusion: str = "gated"
    d: int = 64
    d_v: int = 0
    anchor_rule: str = "center"
    convention: str = "bracket"
    mv_agg: str = "mean"

    def resolved_subpel(self, codec: str) -> int:
        if self.subpel_scale is not None:
            return self.subpel_scale
        return 2 if normalize_codec(codec) == "mpeg4" else 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


def _pair(text, kind=float):
    try:
        a, b = (kind(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


def synthetic_clip(frames=16, width=128, height=128, velocity=(2.0, 1.0), size=32, noise=0, seed=0,
                   channels=1):
    """One textured square moving across a dark background, path centred in the frame."""
    vx, vy = velocity
    x0 = int((width - size - (frames - 1) * vx) // 2)
    y0 = int((height - size - (frames - 1) * vy) // 2)
    obj = SceneObject("rect", size, (vx, vy), 200, (x0, y0), texture=24)
    return gen_synthetic(SceneSpec([obj], background=40, noise_amplitude=noise, seed=seed, channels=channels),
                         frames, width, height)


def _add_source(p):
    g = p.add_argument_group("input")
    g.add_argument("--input", help="headerless raw frames file")
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--channels", type=int, default=1)
    g.add_argument("--fps", type=float, default=30.0)
    g.add_argument("--synthetic", action="store_true", help="generate a moving-square clip instead")
    g.add_argument("--frames", type=int, default=16)
    g.add_argument("--velocity", default="2,1", help="synthetic object velocity dx,dy in pixels/frame")
    g.add_argument("--noise", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)


def _add_pipeline(p):
    g = p.add_argument_group("pipeline")
    g.add_argument("--codec", default="unknown")
    g.add_argument("--native-available", action="store_true")
    g.add_argument("--sidecar", help="exported motion-vector CSV")
    g.add_argument("--n-anchors", type=int, default=PipelineConfig.n_anchors)
    g.add_argument("--anchor-rule", choices=("center", "endpoint"), default=PipelineConfig.anchor_rule)
    g.add_argument("--convention", choices=("bracket", "between"), default=PipelineConfig.convention)
    g.add_argument("--block-size", type=int, default=PipelineConfig.block_size)
    g.add_argument("--search-range", type=int, default=PipelineConfig.search_range)
    g.add_argument("--subpel-scale", type=int, choices=(1, 2, 4))
    g.add_argument("--mv-agg", choices=("mean", "last", "max-mag"), default=PipelineConfig.mv_agg)
    g.add_argument("--threads", type=int, default=default_threads())


def _load_sequence(args):
    if args.synthetic == bool(args.input):
        raise InputError("give exactly one of --input or --synthetic")
    if args.synthetic:
        return synthetic_clip(args.frames, args.width, args.height, _pair(args.velocity), noise=args.noise,
                              seed=args.seed, channels=args.channels)
    return load_raw(args.input, args.width, args.height, args.channels, args.fps)


def _pipeline(args):
    cfg = PipelineConfig(n_anchors=args.n_anchors, block_size=args.block_size, search_range=args.search_range,
                         subpel_scale=args.subpel_scale, anchor_rule=args.anchor_rule,
                         convention=args.convention, mv_agg=args.mv_agg)
    records = None
    if args.sidecar:
        records = tuple(parse_sidecar(Path(args.sidecar).read_text()))
    backend = route_backend(args.codec, args.native_available, records is not None)
    params = ExtractParams(block_size=cfg.block_size, search_range=cfg.search_range,
                           subpel_scale=cfg.resolved_subpel(args.codec), mv_agg=cfg.mv_agg,
                           sidecar_records=records if backend.kind == SIDECAR else None,
                           threads=max(1, args.threads))
    return cfg, backend, params


def _interval_stats(iv):
    v = iv.mv.pixels().reshape(-1, 2)
    mag = np.hypot(v[:, 0], v[:, 1])
    moving = mag > 0
    mean_moving = v[moving].mean(axis=0).tolist() if moving.any() else [0.0, 0.0]
    mode = [0.0, 0.0]
    if moving.any():
        vals, counts = np.unique(v[moving], axis=0, return_counts=True)
        mode = vals[counts.argmax()].tolist()
    return {
        "k": iv.k, "start": iv.start, "stop": iv.stop,
        "mv_mean": v.mean(axis=0).tolist(),
        "mv_mean_moving": mean_moving,
        "mv_mode": mode,
        "mv_mag_mean": float(mag.mean()),
        "mv_mag_max": float(mag.max()),
        "moving_fraction": float(moving.mean()),
        "mv_energy": float((mag ** 2).sum()),
        "res_energy": iv.res.energy(),
    }


def cmd_extract(args):
    seq = _load_sequence(args)
    cfg, backend, params = _pipeline(args)
    decomp = decompose(len(seq), cfg.n_anchors, cfg.anchor_rule, cfg.convention)
    intervals = extract_tristream(seq, decomp, backend, params)
    write_trs(args.out, intervals)
    if args.write_sidecar:
        recs = []
        for f in range(2, len(seq) + 1):
            fld = estimate_motion(seq.frame(f - 1), seq.frame(f), params.block_size, params.search_range,
                                  params.subpel_scale)
            recs.extend(field_to_sidecar(fld, f))
        Path(args.write_sidecar).write_text(serialize_sidecar(recs))
    _emit({
        "backend": backend.kind,
        "reason": backend.reason,
        "T": len(seq),
        "K": len(intervals),
        "anchors": list(decomp.anchors),
        "block_size": intervals[0].mv.block_size,
        "subpel_scale": intervals[0].mv.subpel_scale,
        "intervals": [_interval_stats(iv) for iv in intervals],
        "out": str(args.out),
    }, args.summary)
    return 0


def cmd_visualize(args):
    from .plotting import render_mv, render_residual
    _, intervals = read_trs(args.trs)
    if not 0 <= args.interval < len(intervals):
        raise InputError(f"interval {args.interval} outside [0, {len(intervals)})")
    iv = intervals[args.interval]
    if args.stream == "ifr":
        img = iv.ifr
    elif args.stream == "mv":
        img = render_mv(iv.mv, args.max_magnitude)
    else:
        img = render_residual(iv.res)
    save_ppm(img, args.out)
    return 0


def _budget(n_anchors, tokens_per_frame, n_intervals, motion_tokens, text_overhead):
    return token_budget(n_anchors, tokens_per_frame, n_intervals, motion_tokens, text_overhead).as_dict()


def cmd_budget(args):
    n_int = args.n_anchors if args.n_intervals is None else args.n_intervals
    _emit(_budget(args.n_anchors, args.tokens_per_frame, n_int, args.motion_tokens, args.text_overhead), args.out)
    return 0


def _seed_override(seed):
    env = os.environ.get("TRISTREAM_SEED")
    if seed is not None:
        return seed
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"TRISTREAM_SEED must be an integer, got {env!r}") from None
    return None


def cmd_align(args):
    from .adapter import gate_rows_csv, gate_rows_json
    from .training import (
        DatasetSpec, TrainConfig, between_class_separation, fit_stage1, gate_rows, make_motion_dataset,
        mean_cosine, smoothed,
    )
    text = Path(args.config).read_text() if args.config else ""
    cfg = TrainConfig.from_text(text, steps=args.steps, loss=args.loss, seed=_seed_override(args.seed))
    data = make_motion_dataset(DatasetSpec(n_intervals=args.n_intervals, seed=args.data_seed))
    model, hist = fit_stage1(cfg, data)
    if args.history:
        Path(args.history).write_text(hist.to_csv())
    rows = gate_rows(model, data) if cfg.fusion == "gated" else []
    if args.gates and rows:
        Path(args.gates).write_text(gate_rows_json(rows) + "\n")
    if args.gates_csv and rows:
        Path(args.gates_csv).write_text(gate_rows_csv(rows))
    if args.figure:
        from .plotting import plot_training_curve
        plot_training_curve(hist, args.figure)
    sm = smoothed(hist.loss)
    _emit({
        "config": asdict(cfg),
        "n_intervals": len(data),
        "initial_loss": hist.loss[0],
        "final_loss": hist.loss[-1],
        "final_mean_cosine": mean_cosine(model, data),
        "tau": model.tau,
        "separation_deg": between_class_separation(model.embed(data), data.labels),
        "smoothed_loss_decreasing": bool(len(sm) > 1 and np.all(np.diff(sm) < 0)),
        "gates": [r.as_dict() for r in rows],
    })
    return 0


def _spans(text):
    out = []
    for part in text.split(","):
        try:
            a, n = part.split(":")
            out.append((int(a), int(n)))
        except ValueError:
            raise InputError(f"span {part!r} must look like start:len") from None
    return out


def cmd_inject_demo(args):
    from .inject import EmbeddingSeq, build_layout, mark_placeholders, provenance_table, scatter_inject
    rng = np.random.default_rng(_seed_override(args.seed) or 0)
    layout = build_layout(args.strategy, _spans(args.spans), args.intervals, args.motion_tokens, args.seq_len)
    seq = mark_placeholders(EmbeddingSeq(rng.normal(size=(args.seq_len, args.dim))), layout)
    out = scatter_inject(seq, layout, rng.normal(size=(len(layout), args.dim)))
    lines = ["row\tsource\tfrozen"]
    lines += [f"{i}\t{src}\t{int(fz)}" for i, src, fz in provenance_table(out)]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_bench(args):
    seq = _load_sequence(args)
    cfg, backend, params = _pipeline(args)
    decomp = decompose(len(seq), cfg.n_anchors, cfg.anchor_rule, cfg.convention)
    if args.all_backends:
        recs = []
        for f in range(2, len(seq) + 1):
            recs.extend(field_to_sidecar(estimate_motion(seq.frame(f - 1), seq.frame(f), params.block_size,
                                                         params.search_range, params.subpel_scale), f))
        runs = [
            (BackendChoice(NATIVE, "forced: mpeg4 fixed-GOP emulation"), params),
            (BackendChoice(SIDECAR, "forced: pre-exported side data"), replace(params, sidecar_records=tuple(recs))),
            (BackendChoice(RGB_PROXY, "forced: decoded-frame proxy"), params),
        ]
    else:
        runs = [(backend, params)]
    reports = [bench_backend(seq, b, p, repeats=args.repeats, decomp=decomp).as_dict() for b, p in runs]
    _emit(reports if args.all_backends else reports[0], args.out)
    return 0


def cmd_stats(args):
    from .stats import accuracy, wilson_interval
    lo, hi = wilson_interval(args.correct, args.total, args.conf)
    _emit({"acc": accuracy(args.correct, args.total), "lo": round(100 * lo, 2), "hi": round(100 * hi, 2)})
    return 0


def _history_summary(path):
    from .alignment import TrainHistory
    h = TrainHistory.from_csv(Path(path).read_text())
    if not len(h):
        raise FormatError(f"{path}: history has no rows")
    return h, {"steps": len(h), "initial_loss": h.loss[0], "final_loss": h.loss[-1],
               "final_mean_cosine": h.mean_cosine[-1], "final_tau": h.tau[-1]}


def _json_file(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}", line=e.lineno,
                          column=e.colno) from None


def cmd_report(args):
    given = {"history": args.history, "gates": args.gates, "latency": args.latency, "trs": args.trs}
    missing = [f"--{k} {v}" for k, v in given.items() if v and not Path(v).is_file()]
    if missing:
        raise InputError("missing artifact files: " + ", ".join(missing))
    budget = _budget(args.n_anchors, args.tokens_per_frame, args.n_anchors, args.motion_tokens, args.text_overhead)
    dense = _budget(DENSE_FRAMES, args.tokens_per_frame, 0, 0, args.text_overhead)["total"]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "budget": budget,
        "efficiency": {"dense_frames": DENSE_FRAMES, "dense_tokens": dense,
                       "reduction": dense / budget["total"] if budget["total"] else None},
        "gate_report": None,
        "latency": None,
        "train_history": None,
        "trs": None,
        "figures": [],
    }
    hist = None
    if args.history:
        hist, report["train_history"] = _history_summary(args.history)
    if args.gates:
        report["gate_report"] = _json_file(args.gates)
    if args.latency:
        lat = _json_file(args.latency)
        report["latency"] = lat if isinstance(lat, list) else [lat]
    if args.trs:
        head, intervals = read_trs(args.trs)
        report["trs"] = {**asdict(head), "intervals": [_interval_stats(iv) for iv in intervals]}

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not args.no_figures:
        from . import plotting
        figs = [plotting.plot_budget(budget, out_dir / "budget.png", dense)]
        if hist is not None:
            figs.append(plotting.plot_training_curve(hist, out_dir / "training_curve.png"))
        if report["gate_report"]:
            figs.append(plotting.plot_gate_weights(report["gate_report"], out_dir / "gate_weights.png"))
        if report["latency"]:
            figs.append(plotting.plot_latency(report["latency"], out_dir / "latency.png"))
        report["figures"] = [str(f) for f in figs]
    _emit(report, out_dir / "report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tristream", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tristream {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("extract", help="tri-stream extraction to a .trs container")
    _add_source(e)
    _add_pipeline(e)
    e.add_argument("--out", required=True)
    e.add_argument("--summary", help="also write the JSON summary here")
    e.add_argument("--write-sidecar", help="export per-frame motion as sidecar CSV")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("visualize", help="render one stream of one interval as PPM/PGM")
    v.add_argument("--trs", required=True)
    v.add_argument("--interval", type=int, default=0)
    v.add_argument("--stream", choices=("ifr", "mv", "res"), required=True)
    v.add_argument("--max-magnitude", type=float, help="mv magnitude mapped to full colour (pixels)")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_visualize)

    b = sub.add_parser("budget", help="context-token accounting")
    b.add_argument("--n-anchors", type=int, default=PipelineConfig.n_anchors)
    b.add_argument("--tokens-per-frame", type=int, default=PipelineConfig.tokens_per_frame)
    b.add_argument("--n-intervals", type=int, help="defaults to --n-anchors")
    b.add_argument("--motion-tokens", type=int, default=PipelineConfig.motion_tokens)
    b.add_argument("--text-overhead", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_budget)

    a = sub.add_parser("align", help="desk-scale alignment training on the synthetic motion set")
    a.add_argument("--config", help="key=value trainer config file")
    a.add_argument("--steps", type=int)
    a.add_argument("--loss", choices=("infonce", "mse", "hybrid"))
    a.add_argument("--seed", type=int)
    a.add_argument("--n-intervals", type=int, default=256)
    a.add_argument("--data-seed", type=int, default=0)
    a.add_argument("--history", help="per-step CSV output")
    a.add_argument("--gates", help="per-class gate report JSON output")
    a.add_argument("--gates-csv", help="per-class gate report CSV output")
    a.add_argument("--figure", help="training-curve PNG output")
    a.set_defaults(func=cmd_align)

    i = sub.add_parser("inject-demo", help="print the provenance map of one injection")
    i.add_argument("--strategy", choices=("prefix", "per_anchor", "suffix"), default="per_anchor")
    i.add_argument("--spans", default="0:3,7:3", help="anchor token spans start:len,...")
    i.add_argument("--intervals", type=int, default=2)
    i.add_argument("--motion-tokens", type=int, default=2)
    i.add_argument("--seq-len", type=int, default=14)
    i.add_argument("--dim", type=int, default=4)
    i.add_argument("--seed", type=int)
    i.set_defaults(func=cmd_inject_demo)

    n = sub.add_parser("bench", help="extraction latency per video second")
    _add_source(n)
    _add_pipeline(n)
    n.add_argument("--repeats", type=int, default=3)
    n.add_argument("--all-backends", action="store_true")
    n.add_argument("--out")
    n.set_defaults(func=cmd_bench)

    s = sub.add_parser("stats", help="binomial statistics")
    ss = s.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    w = ss.add_parser("wilson", help="accuracy with Wilson interval, in percent")
    w.add_argument("correct", type=int)
    w.add_argument("total", type=int)
    w.add_argument("--conf", "--confidence", dest="conf", type=float, default=0.95)
    w.set_defaults(func=cmd_stats)

    r = sub.add_parser("report", help="consolidated JSON report with figures")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--history")
    r.add_argument("--gates")
    r.add_argument("--latency")
    r.add_argument("--trs")
    r.add_argument("--n-anchors", type=int, default=PipelineConfig.n_anchors)
    r.add_argument("--motion-tokens", type=int, default=PipelineConfig.motion_tokens)
    r.add_argument("--tokens-per-frame", type=int, default=PipelineConfig.tokens_per_frame)
    r.add_argument("--text-overhead", type=int, default=0)
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - last-resort mapping to the internal-error code
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
