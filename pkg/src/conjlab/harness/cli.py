"""Command line entry point ``conjlab``.

Exit codes: 0 success, 1 hard error, 2 condition failure (conditions unmet
but the run completed).
"""

from __future__ import annotations

import argparse
import logging
import sys

from pydantic import ValidationError

from .config import apply_overrides, load_config
from .report import emit
from .run import COMMANDS, run

log = logging.getLogger("conjlab")

HELP = {
    "check": "certify growth, estimate nonlinearity bounds and evaluate the smallness conditions",
    "conjugate": "check, then construct H and G",
    "verify": "construct and verify conjugation, round trip, near-identity and Lipschitz claims",
    "spectrum": "Lyapunov spectrum, gap parameter and adapted-norm sandwich check",
    "localize": "cut-off radius table and local linearization",
    "report": "run every stage enabled by the mode flags",
}


def build_parser():
    p = argparse.ArgumentParser(prog="conjlab", description="Linearize semilinear difference equations.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="master seed (overrides seed)")
        sp.add_argument("--samples", type=int, help="verification sample count (overrides sampling.n_samples)")
        sp.add_argument("--tol", type=float, help="solver tolerance (overrides tolerances.solver)")
        sp.add_argument("--no-csv", action="store_true", help="skip CSV output")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args.seed, args.samples, args.tol, args.out)
    except (OSError, ValidationError, ValueError) as exc:
        print(f"conjlab: invalid configuration: {exc}", file=sys.stderr)
        return 1
    report = run(cfg, args.command)
    formats = ("json",) if args.no_csv or not cfg.output.csv else ("json", "csv")
    try:
        paths = emit(report, cfg.output.dir, formats)
    except OSError as exc:
        print(f"conjlab: cannot write report: {exc}", file=sys.stderr)
        return 1
    for name, v in sorted(report.verdicts.items()):
        mark = "PASS" if v["passed"] else "FAIL"
        log.info("%s %s value=%.3g threshold=%.3g", mark, name, v["value"], v["threshold"])
    for f in report.failures:
        print(f"conjlab: {f['kind']}: {f['type']}: {f['message']}", file=sys.stderr)
    print(f"{report.status} ({report.exit_code}): {paths[0]}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
