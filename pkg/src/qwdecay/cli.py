"""Command line entry point ``qwdecay``."""

from __future__ import annotations

import argparse
import logging
import sys

from qwdecay.config import ConfigError, load_config
from qwdecay.pipeline import ExitCode, run_bounds, run_certify, run_spectrum

logger = logging.getLogger("qwdecay")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qwdecay",
        description="Discrete spectrum and eigenfunction decay certificates for defect quantum walks.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="walk configuration (YAML or JSON)")
    common.add_argument("--L", type=int, default=None, help="override the box side length (odd, >= 3)")
    common.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    common.add_argument("--refine", type=int, default=None, help="momentum-grid refinement per axis")
    common.add_argument("--delta-fraction", type=float, default=None,
                        help="decay rate used, as a fraction of the admissible supremum")

    sub.add_parser("validate", parents=[common], help="check a configuration and echo assumption values")
    for name, text in (
        ("spectrum", "write spectrum.csv and arcs.csv"),
        ("certify", "detect discrete eigenvalues and write decay certificates"),
        ("bounds", "sweep the commutator bounds and write bounds.csv"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("-o", "--output", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(
            args.config, L=args.L, seed=args.seed, grid_refinement=args.refine,
            delta_fraction=args.delta_fraction,
        )
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return int(ExitCode.INVALID)

    if args.command == "validate":
        print(f"d = {cfg.d}, L = {cfg.L}, Hilbert dimension = {cfg.box.dim}")
        for line in cfg.coin_report.lines():
            print(line)
        for failure in cfg.coin_report.failures:
            print(f"warning (not enforced): {failure}")
        for label, params in cfg.points():
            members = [l + 1 for l in params.D_l_memberships()]
            usable = sorted(set(members) & {l + 1 for l in cfg.coin_report.valid_l})
            print(f"{label}: p = {params.p.tolist()}, q = {params.q.tolist()}, in D_l for l in {members}, "
                  f"usable l: {usable}")
        print("configuration valid")
        return int(ExitCode.OK)

    run = {"spectrum": run_spectrum, "certify": run_certify, "bounds": run_bounds}[args.command]
    code = run(cfg, args.output)
    logger.info("%s finished with exit code %d", args.command, int(code))
    return int(code)


if __name__ == "__main__":
    sys.exit(main())
