"""Run every shipped config through the CLI (build, verify, run or sweep) into one directory."""

import argparse
import sys
from pathlib import Path

from gplb.harness.cli import main as cli
from gplb.harness.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--only", nargs="*", default=None, help="config stems to run")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    worst = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        if args.only and path.stem not in args.only:
            continue
        cfg = load_config(path)
        out = args.out / path.stem
        steps = ["build-class"]
        if cfg.verify is not None:
            steps.append("verify-lemmas")
        else:
            steps.append("sweep" if cfg.sweep is not None else "run")
        for step in steps:
            print(f"== {path.stem}: {step}", flush=True)
            code = cli([step, "--config", str(path), "--out", str(out),
                        "--workers", str(args.workers)])
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
