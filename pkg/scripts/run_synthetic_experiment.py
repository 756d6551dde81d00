#!/usr/bin/env python3
"""End-to-end demo on the planted-cluster corpus.

Generates the corpus, then drives the CLI through prepare, train, eval,
and the intermediate feature protocols. Useful as a smoke test of the whole
pipeline and as a template for experiments on real data.
"""

import argparse
import subprocess
import sys
from pathlib import Path

SCRIPTS = Path(__file__).parent


def run(argv):
    print(f"$ {' '.join(argv)}", flush=True)
    result = subprocess.run(argv)
    if result.returncode != 0:
        sys.exit(result.returncode)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="data/synthetic")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--with-grid", action="store_true",
                        help="also run the weight sweep from the [grid] section")
    args = parser.parse_args()

    run([sys.executable, str(SCRIPTS / "make_synthetic.py"),
         "--out", args.workdir, "--seed", str(args.seed)])
    config = str(Path(args.workdir) / "run.ini")
    run(["alignrec", "prepare", "--config", config])
    run(["alignrec", "train", "--config", config])
    checkpoint = str(Path(args.workdir) / "out" / "checkpoint_best.ackp")
    run(["alignrec", "eval", "--config", config, "--checkpoint", checkpoint])
    run(["alignrec", "intermediate", "--config", config])
    run(["alignrec", "recommend", "--config", config,
         "--checkpoint", checkpoint, "--user", "u000", "--k", "5"])
    if args.with_grid:
        run(["alignrec", "grid", "--config", config])


if __name__ == "__main__":
    main()
