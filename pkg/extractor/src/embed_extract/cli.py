"""CLI: extract penultimate-layer features of a pretrained model to EMB1."""

import argparse
import json
import sys

from .extract import ExtractJob, extract
from .models import REGISTRY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-extract", description=__doc__)
    parser.add_argument("--model", required=True, choices=sorted(REGISTRY))
    parser.add_argument("--images", required=True, help="class-per-subfolder image tree")
    parser.add_argument("--out", required=True, help="EMB1 output path")
    parser.add_argument("--passes", type=int, default=1)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--augment", action="store_true",
                        help="random flip/crop per pass instead of center crop")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    job = ExtractJob(
        model=args.model, images=args.images, out=args.out,
        batch_size=args.batch_size, device=args.device,
        passes=args.passes, augment=args.augment, seed=args.seed,
    )
    try:
        manifest = extract(job)
    except (ValueError, KeyError, RuntimeError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(json.dumps({
        "model": manifest["model"], "width": manifest["width"],
        "images": len(manifest["ids"]), "skipped": len(manifest["skipped"]),
        "files": manifest["files"],
    }))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
