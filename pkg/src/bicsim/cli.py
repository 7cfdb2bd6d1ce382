"""Command-line entry point: ``bicsim <experiment> [--config FILE] [--preset NAME] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, run
from .lattice import PRESETS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bicsim", description=__doc__)
    p.add_argument("experiment", nargs="?", help="experiment name (see --list)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="model preset overriding the config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--list", action="store_true", help="list experiments and presets")
    return p


def list_text() -> str:
    lines = ["experiments:"]
    lines += [f"  {name:16s} {e.summary} (default preset: {e.preset})" for name, e in EXPERIMENTS.items()]
    lines.append("presets:")
    for name, spec in PRESETS.items():
        d = spec.to_dict()
        lines.append(f"  {name:16s} M={d['M']} N={d['N']} J={d['J']:g} U0={d['U0']:g} "
                     f"delta={d['delta']:g} phi={d['phi']:.4g} {d['boundary']}")
    return "\n".join(lines)


def _fail(kind: str, message: str, experiment: str | None) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "experiment": experiment}) + "\n")
    return 2 if kind == "config" else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print(list_text())
        return 0
    try:
        data = {}
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        if args.experiment:
            data["experiment"] = args.experiment
        for key in ("preset", "out", "threads"):
            if getattr(args, key) is not None:
                data[key] = getattr(args, key)
        cfg = ExperimentConfig.from_dict(data)
        cfg.model()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail("config", str(exc), data.get("experiment") if isinstance(data, dict) else None)
    try:
        manifest = run(cfg)
    except Exception as exc:  # surfaced as machine-readable error
        return _fail(type(exc).__name__, str(exc), cfg.experiment)
    print(json.dumps({"experiment": manifest.experiment, "out": cfg.out,
                      "files": manifest.files, "content_hash": manifest.content_hash}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
