"""Command line entry point: ``chirrup-bench --config sweep.yaml --out results.csv``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .bench import RUN_KINDS, ExperimentSpec, run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chirrup-bench", description="Seeded CHIRRUP / OST experiment runner.")
    ap.add_argument("--config", help="YAML or JSON file with ExperimentSpec fields")
    ap.add_argument("--out", help="CSV output path (overrides the config)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
    ap.add_argument("--mode", choices=RUN_KINDS, default="chirrup", help="what to run")
    ap.add_argument("--resume", action="store_true", help="skip tasks already checkpointed in --out")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = {}
        if args.config:
            import yaml

            with open(args.config) as fh:
                data = yaml.safe_load(fh) or {}
        for key in ("out", "seed", "threads"):
            if getattr(args, key) is not None:
                data[key] = getattr(args, key)
        spec = ExperimentSpec.from_dict(data)
    except (OSError, ValueError, TypeError) as exc:
        print(f"chirrup-bench: invalid spec: {exc}", file=sys.stderr)
        return 2
    rows = run(spec, args.mode, spec.out, resume=args.resume)
    print(f"wrote {len(rows)} rows to {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
