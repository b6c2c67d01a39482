"""One-shot conversion tool.

Usage:
  bwfconvert convert --src checkpoint.npz --format npz --out weights.bwf
  bwfconvert convert --src vgg16.pth --format torch --out weights.bwf \
      --channel-order rgb [--mapping names.json]
  bwfconvert random --seed 7 --out random.bwf
"""

from __future__ import annotations

import argparse
import sys

from .convert import (
    SOURCE_FORMATS,
    ConversionError,
    ConversionManifest,
    convert,
    generate_random,
    load_mapping_file,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConversionError(message)


def cmd_convert(args) -> int:
    mapping = load_mapping_file(args.mapping) if args.mapping else None
    manifest = ConversionManifest(
        source_format=args.format,
        source_path=args.src,
        channel_order=args.channel_order,
        mapping=mapping,
    )
    count = convert(manifest, args.out)
    print(f"wrote {count} tensors to {args.out}")
    return 0


def cmd_random(args) -> int:
    count = generate_random(args.seed, args.out)
    print(f"wrote {count} random tensors to {args.out} (seed={args.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bwfconvert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a pretrained checkpoint")
    p.add_argument("--src", required=True, help="source checkpoint path")
    p.add_argument("--format", required=True, choices=SOURCE_FORMATS)
    p.add_argument("--out", required=True, help="BWF1 file to write")
    p.add_argument("--channel-order", default="unspecified", dest="channel_order",
                   help="channel convention note recorded in the provenance")
    p.add_argument("--mapping", help="JSON object of source key -> canonical name")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("random", help="generate seeded random test weights")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_random)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
