"""Command line entry point.

    zoo-export export --model resnet18 --out-model r18.mpct --out-graph r18.txt

Exit codes follow the quantizer CLI: 0 success, 1 usage, 2 anything wrong
with the requested model or the data on disk.
"""

import argparse
import sys

from .export import ExportError, export_model
from .models import SUPPORTED_MODELS, UnsupportedModelError
from .trace import UnsupportedLayerError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zoo-export",
        description="export zoo models to the mpcq archive/graph formats")
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("export", help="export one model family")
    p.add_argument("--model", required=True,
                   help="family name: " + ", ".join(SUPPORTED_MODELS))
    p.add_argument("--out-model", required=True, dest="out_model",
                   help="tensor archive to write")
    p.add_argument("--out-graph", required=True, dest="out_graph",
                   help="graph document to write")
    p.add_argument("--out-data", default=None, dest="out_data",
                   help="optional evaluation-batch archive to write")
    p.add_argument("--num-samples", type=int, default=64, dest="num_samples",
                   help="evaluation images to export (default 64)")
    p.add_argument("--data-dir", default=None, dest="data_dir",
                   help="local dataset root for --out-data")
    p.add_argument("--seed", type=int, default=0,
                   help="weight init seed when not --pretrained")
    p.add_argument("--pretrained", action="store_true",
                   help="fetch zoo weights instead of seeded init")
    p.add_argument("--state", default=None, dest="state_path",
                   help="load a local checkpoint (state dict) before export")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help (0) and usage errors (2)
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        manifest = export_model(
            args.model, args.out_model, args.out_graph,
            out_data=args.out_data, num_samples=args.num_samples,
            data_dir=args.data_dir, seed=args.seed,
            pretrained=args.pretrained, state_path=args.state_path)
    except (UnsupportedModelError, UnsupportedLayerError, ExportError,
            ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"model={manifest.model}")
    print("input={} {} {}".format(*manifest.input_shape))
    print(f"nodes={len(manifest.node_ids)}")
    print(f"params={manifest.param_count}")
    print(f"sha256={manifest.archive_sha256}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
