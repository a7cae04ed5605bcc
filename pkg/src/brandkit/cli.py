"""Command-line interface.

Subcommands: ingest, qc, build-index, add, search, eval, synth.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Every config-file key has a flag of the same name; flags win.
"""

from __future__ import annotations

import argparse
import sys

from .dataset import format_stats_report
from .errors import BrandkitError, DataFormatError
from .evaluation import format_eval_report
from .geometry import Box
from .pipeline import (
    PipelineConfig,
    cmd_add,
    cmd_build_index,
    cmd_eval,
    cmd_ingest,
    cmd_qc,
    cmd_search,
    cmd_synth,
    load_config_file,
)

USAGE_EXIT = 1
DATA_EXIT = 2
INTERNAL_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve that
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


_CONFIG_FLAGS: list[tuple[str, type]] = [
    ("annotations", str),
    ("images_dir", str),
    ("taxonomy", str),
    ("index", str),
    ("labels", str),
    ("results", str),
    ("report", str),
    ("out_dir", str),
    ("nlist", int),
    ("nprobe", int),
    ("m", int),
    ("ksub", int),
    ("seed", int),
    ("patch_size", int),
    ("grid_cells", int),
    ("orient_bins", int),
    ("confidence_threshold", float),
    ("negative_threshold", float),
    ("topk", int),
    ("num_brands", int),
    ("instances_per_brand", int),
    ("image_size", int),
    ("mean_scale_percent", float),
    ("num_empty_images", int),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    for name, typ in _CONFIG_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    parser.add_argument("--allow-partial", dest="allow_partial",
                        action="store_true", default=None)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        name: getattr(args, name)
        for name, _ in _CONFIG_FLAGS + [("allow_partial", bool)]
        if getattr(args, name, None) is not None
    }
    return PipelineConfig.from_sources(file_values, overrides)


def _parse_box(text: str) -> Box:
    parts = text.split(",")
    if len(parts) != 4:
        raise DataFormatError(f"--box wants x,y,w,h, got {text!r}")
    x, y, w, h = (float(p) for p in parts)
    if w <= 0 or h <= 0:
        raise DataFormatError("--box needs positive width and height")
    return Box(x, y, x + w, y + h)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="brandkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ingest", "load + validate annotations, print dataset statistics"),
        ("qc", "three-annotator consensus per image"),
        ("build-index", "embed gallery crops and build the retrieval index"),
        ("add", "add new exemplars to an existing index without retraining"),
        ("search", "embed a query crop and predict its labels"),
        ("eval", "COCO-style mAP of a results file against ground truth"),
        ("synth", "generate a deterministic synthetic dataset"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        if name == "qc":
            p.add_argument("annotator_files", nargs=3, metavar="ANNOTATIONS")
        if name == "search":
            p.add_argument("--image", required=True, help="query image (PGM/PPM)")
            p.add_argument("--box", required=True, help="crop as x,y,w,h")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    if args.command == "ingest":
        stats, result = cmd_ingest(config)
        sys.stdout.write(format_stats_report(stats))
        if result.errors:
            for err in result.errors:
                print(f"rejected line {err.line_no}: {err.message}", file=sys.stderr)
        return 0
    if args.command == "qc":
        consensus = cmd_qc(config, args.annotator_files)
        for image_id, (chosen, score) in consensus.items():
            print(f"{image_id} annotator={chosen} score={score:.6f}")
        return 0
    if args.command == "build-index":
        summary = cmd_build_index(config)
        print(f"indexed={summary['count']} distortion={summary['distortion']:.6f} "
              f"index={summary['index']}")
        return 0
    if args.command == "add":
        summary = cmd_add(config)
        print(f"added={summary['added']} count={summary['count']} "
              f"retrained={summary['train_count_after'] - summary['train_count_before']}")
        return 0
    if args.command == "search":
        result = cmd_search(config, args.image, _parse_box(args.box))
        if result.truncated:
            print("warning: k larger than index count; result truncated", file=sys.stderr)
        for vec_id, dist in result.neighbors:
            print(f"neighbor id={vec_id} distance={dist:.6f}")
        print(f"predicted logo={result.logo_id} brand={result.brand_id} "
              f"type={result.type_id}")
        return 0
    if args.command == "eval":
        report = cmd_eval(config)
        sys.stdout.write(format_eval_report(report))
        return 0
    if args.command == "synth":
        summary = cmd_synth(config)
        print(f"images={summary.num_images} instances={summary.num_instances} "
              f"out_dir={summary.out_dir}")
        return 0
    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (BrandkitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
