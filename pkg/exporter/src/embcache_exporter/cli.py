"""Command-line entry point for the embedding exporter."""

import argparse
import sys

from .exporter import DEFAULT_MODEL, EmptyKeysFileError, ModelLoadFailureError, export_embeddings


def main() -> None:
    parser = argparse.ArgumentParser(
        prog="embcache-export",
        description="Embed a key list with a pretrained transformer into EMBCACHE v1.",
    )
    parser.add_argument("--keys", required=True, help="text file, one raw key per line")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="model identifier or local model directory")
    parser.add_argument("--out", required=True, help="output EMBCACHE path")
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args()

    try:
        manifest = export_embeddings(args.keys, args.model, args.out, batch_size=args.batch_size)
    except (EmptyKeysFileError, ModelLoadFailureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    print(
        f"wrote {manifest.key_count} keys (dim {manifest.dim}, {manifest.pooling}) "
        f"from {manifest.model_id} to {args.out}",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()
