"""Command-line entry points.

``ufslab run --experiment <id>`` executes one experiment suite and exits
0 only if every in-suite check passes; ``ufslab hscore --features <dump>``
scores a feature dump.  See the package README for the config-file format.
"""

from __future__ import annotations

import argparse
import sys

from .errors import UfslabError
from .harness import EXPERIMENTS, load_config, run_experiment
from .hscore import hscore_report, load_feature_dump


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ufslab",
        description="dependence-matrix feature experiments and H-scores")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment suite")
    run.add_argument("--experiment", choices=EXPERIMENTS, default=None)
    run.add_argument("--config", default=None,
                     help="key=value config file; flags override it")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--eps", type=float, default=None,
                     help="dependence radius of the generated joint")
    run.add_argument("--samples", type=int, default=None,
                     help="training sample count")

    hs = sub.add_parser("hscore", help="score a feature dump")
    hs.add_argument("--features", required=True,
                    help="csv (header, label last) or .npy dump")
    hs.add_argument("--n-params", type=float, default=None,
                    help="model parameter count for the AIC correction")
    hs.add_argument("--out", default=None,
                    help="write the JSON report here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, {
                "experiment": args.experiment,
                "seed": args.seed,
                "out_dir": args.out,
                "eps": args.eps,
                "n_samples": args.samples,
            })
            summary = run_experiment(cfg)
            for check in summary["checks"]:
                state = "PASS" if check["pass"] else "FAIL"
                print(f"[{state}] {check['id']}: value={check['value']:.3e} "
                      f"tol={check['tolerance']:.3e}")
            print(f"summary: {cfg.out_dir}/{cfg.experiment}/summary.json")
            return 0 if summary["all_pass"] else 1

        if args.command == "hscore":
            s, labels = load_feature_dump(args.features)
            report = hscore_report(s, labels, n_params=args.n_params)
            text = report.to_json()
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            else:
                print(text)
            return 0
    except UfslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
