"""Command line driver.

``ineqlab run --suite NAME [--config PATH] --out DIR --seed SEED [--samples MULT]``
runs a suite and writes ``report.json``, ``summary.csv`` and
``metadata.json`` to ``DIR``. The exit status is 0 iff every check passes.

``ineqlab describe --suite NAME`` lists the checks of a suite.
"""

from __future__ import annotations

import argparse
import datetime
import os
import platform
import sys
import time

from . import __version__
from .config import load_config
from .errors import ConfigParse, UnknownSuite
from .report import ReportWriter
from .suites import SUITES, describe, run_suite

__all__ = ["main", "build_parser"]

EXIT_FAIL = 1
EXIT_USAGE = 2


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _multiplier(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("sample multiplier must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ineqlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ineqlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a verification suite")
    run.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)}")
    run.add_argument("--config", default=None, help="key = value file (default: shipped)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=_seed, default=0, help="unsigned 64-bit seed")
    run.add_argument("--samples", type=_multiplier, default=1.0,
                     help="multiplier applied to every sample count")

    desc = sub.add_parser("describe", help="list the checks of a suite")
    desc.add_argument("--suite", required=True)
    return ap


def _run(args) -> int:
    cfg = load_config(args.config).scaled(args.samples)
    try:
        writer = ReportWriter(args.out)
    except OSError as exc:
        print(f"ineqlab: cannot use output directory {args.out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.perf_counter()

    def sink(rec):
        writer.add(rec)
        flag = "pass" if rec.passed else "FAIL"
        print(f"{flag}  {rec.check_id}  margin={rec.margin:.3e}  budget={rec.budget:.3e}",
              flush=True)

    ok = run_suite(args.suite, cfg, args.seed, sink)
    writer.write_metadata(
        started=started,
        wall_time=time.perf_counter() - t0,
        suite=args.suite,
        seed=args.seed,
        sample_multiplier=args.samples,
        config_hash=cfg.digest(),
        config=cfg.canonical(),
        threads=os.environ.get("INEQLAB_THREADS", "1"),
        python=platform.python_version(),
        version=__version__,
    )
    n_fail = sum(not r.passed for r in writer.records)
    print(f"{len(writer.records) - n_fail}/{len(writer.records)} checks passed; "
          f"reports in {writer.dir}")
    return 0 if ok else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "describe":
            sys.stdout.write(describe(args.suite))
            return 0
        return _run(args)
    except UnknownSuite as exc:
        print(f"ineqlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigParse as exc:
        print(f"ineqlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
