"""Run every bundled application and write its tables and bundle.

Output goes to ``<out>/<app>/`` with ``table.csv``, ``bundle.json`` and,
depending on the application, ``pareto.csv`` or ``paths.csv``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from mvgattack.bench import AppConfig, run_application, write_result
from mvgattack.cli import CONFIG_DIR


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("apps", nargs="*", default=["zhvi", "loan", "lgssm"])
    ap.add_argument("--seed", type=int, default=None, help="override the configs' seed")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args(argv)
    for app in args.apps:
        path = CONFIG_DIR / f"{app}.json"
        d = json.loads(path.read_text(encoding="utf-8"))
        if args.seed is not None:
            d["seed"] = args.seed
        t0 = time.perf_counter()
        result = run_application(AppConfig.from_dict(d, base_dir=path.parent))
        written = write_result(result, args.out / app)
        print(f"{app}: {time.perf_counter() - t0:.1f} s -> {', '.join(p.name for p in written)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
