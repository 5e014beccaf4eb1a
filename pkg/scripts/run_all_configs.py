"""Run every shipped recipe in configs/ and print where the artifacts went.

    python3 scripts/run_all_configs.py [--out DIR] [--workers N] [--plot]
"""

import argparse
import json
import sys
from pathlib import Path

from nlpemem import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="nlpemem_runs/all")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--plot", action="store_true")
    args = p.parse_args()
    failed = 0
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        cmd = json.loads(cfg.read_text())["command"]
        argv = [cmd, "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem), "--force",
                "--workers", str(args.workers)] + (["--plot"] if args.plot else [])
        print(f"== {cfg.name}", flush=True)
        failed += cli.main(argv) != 0
        print()
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
