#!/usr/bin/env python3
"""Run the full pipeline on a generated fixture tree: sync the weather cache,
run the leave-one-disease-out evaluation, and show the resulting metrics."""

import argparse
import sys
from pathlib import Path

from outbreaknet.cli import load_config, run
from outbreaknet.ingest import parse_disease_table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixtures", type=Path, required=True,
                        help="directory produced by make_synthetic_fixtures.py")
    parser.add_argument("--hold-out", default="influenza")
    args = parser.parse_args()

    config_path = args.fixtures / "run.cfg"
    config = load_config(config_path)
    with open(config.disease_file, encoding="utf-8") as fh:
        records, _ = parse_disease_table(fh)
    start = min(r.period_start for r in records)
    end = max(r.period_end for r in records)

    code = run(["weather-sync", "--config", str(config_path),
                "--start", start.isoformat(), "--end", end.isoformat()])
    if code != 0:
        sys.exit(code)
    code = run(["evaluate", "--config", str(config_path), "--hold-out", args.hold_out])
    if code != 0:
        sys.exit(code)

    out_dir = Path(config.output_dir)
    print((out_dir / "metrics.tsv").read_text(), end="")
    print(f"full outputs under {out_dir}")


if __name__ == "__main__":
    main()
