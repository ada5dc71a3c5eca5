"""Command line entry points.

Subcommands: quantize (archive + report), sweep (lambda grid CSV), hist
(weight histograms before/after compensation), eval (metric report), size
(byte accounting). Exit codes: 0 success, 1 usage error, 2 data or format
error. All output is deterministic for a fixed config and seed.
"""

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .archive import load_archive, save_archive
from .compensation import apply_compensation, solve_coefficients
from .errors import ArchiveError, MpcqError, PairingError
from .graph import check_channels, parse_graph
from .metrics import compare_models, gaussian_probes
from .pipeline import (RunConfig, build_layer_pair, materialize_weights,
                       quantize_model)
from .plan import discover_pairs, size_report
from .quantizers import dequantize


class _UsageError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _emit(comments: list[str], rows: list[list], out: str | None) -> None:
    """Print a report to stdout and optionally mirror it to a file."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def _config(args) -> RunConfig:
    try:
        return RunConfig(model=args.model, graph=args.graph,
                         out=getattr(args, "out", None),
                         low_bits=args.low_bits, high_bits=args.high_bits,
                         lambda1=args.lambda1, lambda2=args.lambda2,
                         seed=args.seed, probes=getattr(args, "probes", 64),
                         jobs=args.jobs)
    except ValueError as e:
        raise _UsageError(str(e)) from e


def _load_model(cfg: RunConfig):
    weights = load_archive(cfg.model)
    g = parse_graph(Path(cfg.graph).read_text())
    check_channels(g, weights)
    return g, weights


def _parse_range(text: str | None, fallback: float) -> list[float]:
    if text is None:
        return [fallback]
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise _UsageError(f"range must be start:stop:step, got {text!r}")
    a, b, step = (float(v) for v in parts)
    if step <= 0 or b < a:
        raise _UsageError(f"range {text!r} is empty or has non-positive step")
    n = int(round((b - a) / step)) + 1
    return [a + i * step for i in range(n) if a + i * step <= b + 1e-9]


def _load_probes(cfg: RunConfig, args, g):
    """Probe batch and optional labels for eval/sweep."""
    labels = None
    if args.data:
        data = load_archive(args.data)
        if "images" not in data:
            raise ArchiveError(f"data archive {args.data!r} has no 'images' tensor")
        x = data["images"]
        labels = data.get("labels")
    else:
        x = gaussian_probes(g.input_shape, cfg.probes, cfg.seed)
    if args.labels:
        label_archive = load_archive(args.labels)
        if "labels" not in label_archive:
            raise ArchiveError(f"label archive {args.labels!r} has no 'labels' tensor")
        labels = label_archive["labels"]
    return x, labels


def cmd_quantize(args) -> int:
    cfg = _config(args)
    g, weights = _load_model(cfg)
    plan = discover_pairs(g, weights, cfg.low_bits, cfg.high_bits)
    tensors, records = quantize_model(g, weights, cfg, plan=plan)
    save_archive(tensors, cfg.out)
    rows = [["entry", "low", "high", "low_bits", "high_bits", "gamma_sq",
             "theta_sq", "objective_before", "objective_after"]]
    for r in records:
        rows.append(["pair", r.low, r.high, r.low_bits, r.high_bits,
                     r.gamma_sq, r.theta_sq, r.objective_before,
                     r.objective_after])
    for nid, bits in sorted(plan.exempt.items()):
        rows.append(["exempt", nid, "", bits, "", "", "", "", ""])
    _emit([], rows, cfg.out + ".report.csv")
    return 0


def cmd_size(args) -> int:
    cfg = _config(args)
    g, weights = _load_model(cfg)
    plan = discover_pairs(g, weights, cfg.low_bits, cfg.high_bits)
    rep = size_report(g, plan, weights)
    fp32 = 4.0 * sum(l.params for l in rep.layers) + rep.other_bytes
    comments = [
        f"total_bytes={_fmt(rep.total_bytes)}",
        f"megabytes={_fmt(rep.megabytes)}",
        f"mebibytes={_fmt(rep.mebibytes)}",
        f"other_bytes={_fmt(rep.other_bytes)}",
        f"fp32_total_bytes={_fmt(fp32)}",
        f"fp32_megabytes={_fmt(fp32 / 1e6)}",
        f"fp32_mebibytes={_fmt(fp32 / float(1 << 20))}",
    ]
    rows = [["layer", "role", "bits", "params", "code_bytes", "overhead_bytes"]]
    for l in rep.layers:
        rows.append([l.node, l.role, l.bits, l.params, l.code_bytes,
                     l.overhead_bytes])
    _emit(comments, rows, getattr(args, "out", None))
    return 0


def _eval_reports(cfg: RunConfig, g, weights, x, labels):
    naive_t, _ = quantize_model(g, weights, cfg, compensate=False)
    comp_t, _ = quantize_model(g, weights, cfg, compensate=True)
    naive = compare_models(g, weights, materialize_weights(g, naive_t), x,
                           labels, jobs=cfg.jobs, seed=cfg.seed)
    comp = compare_models(g, weights, materialize_weights(g, comp_t), x,
                          labels, jobs=cfg.jobs, seed=cfg.seed)
    return naive, comp


def cmd_eval(args) -> int:
    cfg = _config(args)
    g, weights = _load_model(cfg)
    x, labels = _load_probes(cfg, args, g)
    naive, comp = _eval_reports(cfg, g, weights, x, labels)
    comments = []
    for name, rep in (("naive", naive), ("compensated", comp)):
        line = f"{name}: probes={rep.probe_count} final_mse={_fmt(rep.final_mse)}"
        if rep.top1 is not None:
            line += f" top1={_fmt(rep.top1)}"
        comments.append(line)
    rows = [["block", "metric", "layer", "value"]]
    order = [n.id for n in g.topological_order()]
    for name, rep in (("naive", naive), ("compensated", comp)):
        for nid in order:
            rows.append([name, "layer_mse", nid, rep.per_layer_mse[nid]])
        rows.append([name, "final_mse", g.output, rep.final_mse])
        if rep.top1 is not None:
            rows.append([name, "top1", "", rep.top1])
    _emit(comments, rows, getattr(args, "out", None))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    g, weights = _load_model(cfg)
    x, labels = _load_probes(cfg, args, g)
    l1s = _parse_range(args.lambda1_range, cfg.lambda1)
    l2s = _parse_range(args.lambda2_range, cfg.lambda2)
    rows = [["lambda1", "lambda2", "recon_mse", "top1"]]
    for l1 in l1s:
        for l2 in l2s:
            cell = replace(cfg, lambda1=l1, lambda2=l2)
            tensors, _ = quantize_model(g, weights, cell, compensate=True)
            rep = compare_models(g, weights, materialize_weights(g, tensors),
                                 x, labels, jobs=cfg.jobs, seed=cfg.seed)
            rows.append([l1, l2, rep.final_mse, rep.top1])
    _emit([], rows, getattr(args, "out", None))
    return 0


def cmd_hist(args) -> int:
    cfg = _config(args)
    if args.bins < 1:
        raise _UsageError(f"--bins must be >= 1, got {args.bins}")
    g, weights = _load_model(cfg)
    plan = discover_pairs(g, weights, cfg.low_bits, cfg.high_bits)
    assignment = next((p for p in plan.pairs if p.high == args.layer), None)
    if assignment is None:
        raise PairingError(
            f"layer {args.layer!r} is not the high-bit member of any pair")
    pair = build_layer_pair(g, weights, assignment.low, assignment.high,
                            assignment.low_bits, assignment.high_bits)
    result = solve_coefficients(pair, cfg.lambda1, cfg.lambda2)
    plain = pair.high_dequant.ravel()
    comp = dequantize(apply_compensation(pair, result.c)).ravel()
    edges = np.histogram_bin_edges(np.concatenate([plain, comp]), bins=args.bins)
    plain_counts, _ = np.histogram(plain, edges)
    comp_counts, _ = np.histogram(comp, edges)
    comments = [
        f"layer={args.layer}",
        f"mean_plain={_fmt(float(plain.mean()))}",
        f"mean_compensated={_fmt(float(comp.mean()))}",
        f"abs_mean_plain={_fmt(abs(float(plain.mean())))}",
        f"abs_mean_compensated={_fmt(abs(float(comp.mean())))}",
    ]
    rows = [["bin_lo", "bin_hi", "plain", "compensated"]]
    for i in range(len(plain_counts)):
        rows.append([float(edges[i]), float(edges[i + 1]),
                     int(plain_counts[i]), int(comp_counts[i])])
    _emit(comments, rows, getattr(args, "out", None))
    return 0


def _add_common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--model", required=True, help="tensor archive path")
    p.add_argument("--graph", required=True, help="graph document path")
    p.add_argument("--out", required=out_required, default=None,
                   help="output path" + ("" if out_required else " (default: stdout only)"))
    p.add_argument("--low-bits", type=int, default=2, dest="low_bits")
    p.add_argument("--high-bits", type=int, default=6, dest="high_bits")
    p.add_argument("--lambda1", type=float, default=0.5)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: cpu count)")


def _add_probe_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=None,
                   help="archive with an 'images' tensor (and optional 'labels')")
    p.add_argument("--labels", default=None,
                   help="archive with a 'labels' tensor")
    p.add_argument("--probes", type=int, default=64,
                   help="synthetic probe count when no --data is given")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpcq",
        description="Data-free mixed-precision weight quantization with "
                    "per-channel compensation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a model archive")
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("sweep", help="grid-sweep the regularization weights")
    _add_common(p)
    _add_probe_flags(p)
    p.add_argument("--lambda1-range", default=None, dest="lambda1_range",
                   help="start:stop:step (inclusive)")
    p.add_argument("--lambda2-range", default=None, dest="lambda2_range",
                   help="start:stop:step (inclusive)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hist", help="weight histogram before/after compensation")
    _add_common(p)
    p.add_argument("--layer", required=True,
                   help="node id of a pair's high-bit layer")
    p.add_argument("--bins", type=int, default=64)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("eval", help="compare quantized models against float")
    _add_common(p)
    _add_probe_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("size", help="byte accounting for the planned model")
    _add_common(p)
    p.set_defaults(func=cmd_size)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if not e.code else 1
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (MpcqError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
