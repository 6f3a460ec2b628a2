import argparse
import logging
import sys
from typing import List, Optional

from .config import check_env, get_settings
from .errors import BdotsError
from .modules.curves import CURVES
from .modules.harness import MATRICES
from .service import cmd_fit, cmd_matrix, cmd_padjust, cmd_sim, cmd_test

logger = logging.getLogger("bdots")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# --- Sub-command handlers ---

def _run_fit(args, settings) -> str:
    fit_file = cmd_fit(args.input, curve=args.curve, ar1=args.ar1, max_iter=args.max_iter, tol=args.tol,
                       out=args.out)
    converged = sum(f.converged for f in fit_file.fits)
    return f"{converged}/{len(fit_file.fits)} fitted subjects converged, {len(fit_file.warnings)} warning(s) -> {args.out}"


def _run_test(args, settings) -> str:
    report = cmd_test(args.fits, method=args.method, paired=args.paired, alpha=args.alpha, B=args.B, P=args.P,
                      seed=args.seed, out=args.out, redraw_observed=args.redraw_observed,
                      covariance=args.covariance)
    spans = ", ".join(f"[{i.start:g}, {i.end:g}]" for i in report.intervals) or "none"
    return f"{report.method}: threshold {report.threshold:.4f}; significant intervals: {spans}"


def _run_sim(args, settings) -> str:
    workers = args.workers or settings.threads
    reports = cmd_sim(args.scenario, out_dir=args.out, workers=workers)
    parts = []
    for r in reports:
        name = r.scenario.name or r.scenario.kind
        rates = ", ".join(f"{m} fwer={mr.fwer:.3f}" for m, mr in r.methods.items())
        parts.append(f"{name}: {rates}")
    return "\n".join(parts)


def _run_padjust(args, settings) -> str:
    counts = cmd_padjust(args.input, rho=args.rho, alpha=args.alpha, out=args.out)
    return f"{counts['significant']}/{counts['n']} p-values significant at FWER {args.alpha:g} -> {args.out}"


def _run_matrix(args, settings) -> str:
    cells = cmd_matrix(args.which, args.out, full=args.full)
    return f"wrote {len(cells)} scenario(s) to {args.out}"


def _run_check_env(args, settings) -> str:
    return "\n".join(check_env())


# --- Parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdots",
        description="Detect time windows where two groups' fitted curves differ "
                    "(homogeneous / heterogeneous bootstrap, permutation test) and run the simulation studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a curve to every subject of a long-format CSV")
    p.add_argument("input", help="CSV with columns subject,group,time,value[,pair_id]")
    p.add_argument("--curve", default="logistic4", choices=sorted(CURVES))
    p.add_argument("--ar1", action=argparse.BooleanOptionalAction, default=True,
                   help="model AR(1) errors (default: on)")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default="fits.json")
    p.set_defaults(handler=_run_fit)

    p = sub.add_parser("test", help="run one detection method on a fit file")
    p.add_argument("fits", help="fits.json written by 'bdots fit'")
    p.add_argument("--method", default="hetboot", choices=["homboot", "hetboot", "perm"])
    p.add_argument("--paired", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--B", type=int, default=1000, help="bootstrap iterations")
    p.add_argument("--P", type=int, default=1000, help="permutations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--redraw-observed", action="store_true",
                   help="permutation test: redraw parameters for the observed statistic too")
    p.add_argument("--covariance", default="diagonal", choices=["diagonal", "full"])
    p.add_argument("--out", default="report.json")
    p.set_defaults(handler=_run_test)

    p = sub.add_parser("sim", help="run simulation scenarios")
    p.add_argument("scenario", help="scenario JSON: one scenario or {\"scenarios\": [...]}")
    p.add_argument("--out", default="sim_out")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: BDOTS_THREADS)")
    p.set_defaults(handler=_run_sim)

    p = sub.add_parser("padjust", help="adjust p-values for AR(1)-correlated tests")
    p.add_argument("input", help="one column of p-values, optional header")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="padjust.csv")
    p.set_defaults(handler=_run_padjust)

    p = sub.add_parser("matrix", help="write the scenario files of a simulation matrix")
    p.add_argument("which", choices=sorted(MATRICES))
    p.add_argument("--out", default="scenarios")
    p.add_argument("--full", action="store_true", help="1000 replicates on the 401-point grid")
    p.set_defaults(handler=_run_matrix)

    p = sub.add_parser("check-env", help="show where settings are read from")
    p.set_defaults(handler=_run_check_env)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except BdotsError as e:
        print(f"bdots: error: {e.detail}", file=sys.stderr)
        return e.exit_code
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)

    try:
        summary = args.handler(args, settings)
    except BdotsError as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"bdots: error: {e.detail}", file=sys.stderr)
        return e.exit_code
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
