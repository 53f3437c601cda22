"""Command-line front end: ``endospin run <config>`` and ``endospin presets list``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .scenarios import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, ScenarioFailure, run_scenario
from .species import presets


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="endospin",
                                     description="Spin simulations of endohedral fullerene qubits.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None,
                     help="output directory (default: out/<config name>)")
    run.add_argument("--threads", type=_positive_int, default=1)
    run.add_argument("--svg", action="store_true", help="also render SVG quick-looks")
    pre = sub.add_parser("presets", help="species presets")
    pre.add_argument("action", choices=["list"])
    return parser


def _list_presets() -> None:
    print(f"{'name':<10} {'S':>4} {'I':>4} {'g':>8} {'gI':>10} {'a/MHz':>10}")
    for name, sp in presets().items():
        print(f"{name:<10} {sp.S:>4g} {sp.I:>4g} {sp.g:>8.5g} {sp.gI:>10.6g} {sp.a:>10.5f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        _list_presets()
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = args.out if args.out is not None else Path("out") / args.config.stem
    try:
        report = run_scenario(cfg, out, threads=args.threads, svg=args.svg)
    except ScenarioFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{cfg.kind}: wrote {len(report.outputs)} files to {out} in {report.wall_ms:.0f} ms")
    for key, value in report.scalars.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            print(f"  {key} = {value:.6g}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
