"""Run the acceptance suite and print its per-criterion summary lines."""

import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("-k", default=None, help="pytest -k expression, e.g. 'criterion_7'")
    p.add_argument("--log", type=Path, default=None, help="also write the full output here")
    args = p.parse_args()
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-v"]
    if args.k:
        cmd += ["-k", args.k]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    if args.log:
        args.log.write_text(proc.stdout + proc.stderr)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith("criterion ")]
    print("\n".join(lines) if lines else proc.stdout)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
