#!/usr/bin/env python3
"""Run the shared-battery benchmark end to end and print a short report.

Equivalent to:

    ccgames run --config configs/microgrid_paper.json --out-dir runs/paper
    ccgames check-constraints --config ... --strategies runs/paper/strategies.csv
    ccgames plot-data --config ... --trace runs/paper/trace.csv --out-dir runs/paper/plots

Use --reduced for the small instance (5 households, 12 steps) that the test
suite exercises.
"""

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from ccgames.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reduced", action="store_true",
                        help="run the 5-household reduced instance")
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    name = "microgrid_reduced" if args.reduced else "microgrid_paper"
    config = str(ROOT / "configs" / f"{name}.json")
    out_dir = args.out_dir or str(ROOT / "runs" / name)
    seed_args = ["--seed", str(args.seed)] if args.seed is not None else []

    code = cli_main(["run", "--config", config, "--out-dir", out_dir, *seed_args])
    if code not in (0, 2):
        return code
    check = cli_main(["check-constraints", "--config", config,
                      "--strategies", f"{out_dir}/strategies.csv", *seed_args])
    plot = cli_main(["plot-data", "--config", config,
                     "--trace", f"{out_dir}/trace.csv",
                     "--strategies", f"{out_dir}/strategies.csv",
                     "--out-dir", f"{out_dir}/plots", *seed_args])
    return max(check, plot)


if __name__ == "__main__":
    sys.exit(main())
