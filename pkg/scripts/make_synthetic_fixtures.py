#!/usr/bin/env python3
"""Generate the synthetic fixture tree (disease CSV, symptom/demographics
records, raw weather source files, run config) used by the examples and the
end-to-end tests."""

import argparse
from pathlib import Path

from outbreaknet.synth import SyntheticSpec, generate_dataset, write_fixtures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True, help="fixture output directory")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--months", type=int, default=60)
    parser.add_argument("--obs-per-day", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=400, help="epochs written into the config")
    args = parser.parse_args()

    spec = SyntheticSpec(seed=args.seed, months=args.months, obs_per_day=args.obs_per_day)
    dataset = generate_dataset(spec)
    config_path = write_fixtures(dataset, args.out, epochs=args.epochs)
    print(f"fixtures under {args.out}")
    print(f"config: {config_path}")
    first = dataset.records[0].period_start
    last = dataset.records[-1].period_end
    print(f"disease rows: {len(dataset.records)} covering {first} .. {last}")


if __name__ == "__main__":
    main()
