"""Command-line front end.

Subcommands: ``sizing``, ``equiv``, ``train``, ``sweep``, ``spectrum`` and
``dataset gen``. Every run writes line-delimited records plus CSV tables to
its output directory and, unless ``--no-figures`` is given, PNG figures next
to them. Exit codes: 0 on success, 1 on a suite failure or runtime error,
2 on usage errors. The only environment variable consulted is
``PERMKRON_OUT`` (default root for output directories).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from . import datasets, harness


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permkron",
        description="structured-sparse mixing layers: sizing, equivalence checks, "
                    "training runs, sweeps, and random-matrix spectra",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sizing", help="budget calculus: feasible pairs and width curve")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--channels", type=_int_list, default=[],
                   help="comma list of candidate channel counts")
    p.add_argument("--curve", action="store_true", help="emit the m(C) curve")
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("equiv", help="run the dense-oracle equivalence suites")
    p.add_argument("--suite", default="pk,mlp,monarch",
                   help="comma list out of pk, mlp, monarch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nonlinear-middle", action="store_true",
                   help="negative control: the monarch correspondence must break")
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("sweep", help="run a grid of training cells")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None,
                   help="cap on parallel cells (default: one per cell up to cpu count)")
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("spectrum", help="singular-value experiments")
    p.add_argument("--dense-square", type=int, default=None, metavar="M")
    p.add_argument("--rect-width", type=int, default=None, metavar="M")
    p.add_argument("--rect-gamma", type=int, default=4)
    p.add_argument("--a-sweep", type=_float_list, default=None, metavar="A0,A1,...")
    p.add_argument("--omega", type=float, default=1000.0)
    p.add_argument("--pk-dup", action="store_true")
    p.add_argument("--pk-n1", type=int, default=3)
    p.add_argument("--pk-dim", type=int, default=4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("dataset", help="dataset utilities")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    g = dsub.add_parser("gen", help="generate a synthetic dataset file")
    g.add_argument("--kind", choices=datasets.SYNTHETIC_KINDS, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--height", type=int, default=16)
    g.add_argument("--width", type=int, default=16)
    g.add_argument("--format", choices=("text", "binary"), default="text")
    g.add_argument("--out", required=True, help="output file path")
    return parser


def _cmd_sizing(args) -> int:
    fp = cfgmod.fingerprint({"kind": "sizing", "sizing.omega": args.omega,
                             "sizing.gamma": args.gamma,
                             "sizing.channels": args.channels,
                             "sizing.curve": args.curve})
    out = harness.resolve_out_dir(args.out, "sizing", fp)
    summary = harness.run_sizing(args.omega, args.gamma, args.channels, args.curve,
                                 out, make_figures=not args.no_figures)
    c_star, s_star, m_max = summary["optimum"]
    print(f"optimum: C* = S* = {c_star:.3f}, max width m = {m_max:.3f}")
    print(f"{summary['pairs']} feasible pairs written to {summary['out_dir']}")
    return 0


def _cmd_equiv(args) -> int:
    which = tuple(s.strip() for s in args.suite.split(",") if s.strip())
    unknown = set(which) - {"pk", "mlp", "monarch"}
    if unknown:
        print(f"unknown suite(s): {sorted(unknown)}", file=sys.stderr)
        return 2
    cfg = {"kind": "equiv", "equiv.suites": list(which), "equiv.seed": args.seed,
           "equiv.nonlinear_middle": args.nonlinear_middle}
    out = harness.resolve_out_dir(args.out, "equiv", cfgmod.fingerprint(cfg))
    summary = harness.run_equiv(which, args.seed, args.nonlinear_middle, out)
    for result in summary["results"]:
        status = "PASS" if result.passed else "FAIL"
        detail = ("break observed" if result.expected_failure and result.passed
                  else f"max deviation {result.max_deviation:.3e}")
        print(f"{result.name}: {status} ({result.cases} cases, {detail})")
    return 0 if summary["all_passed"] else 1


def _cmd_train(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = harness.resolve_out_dir(args.out, "train", cfgmod.fingerprint(cfg))
    summary = harness.run_train(cfg, out, make_figures=not args.no_figures)
    print(f"final test accuracy {summary['final_test_acc']:.4f} "
          f"(best {summary['best_test_acc']:.4f}) after {summary['epochs']} epochs")
    print(f"outputs in {summary['out_dir']}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = harness.resolve_out_dir(args.out, "sweep", cfgmod.fingerprint(cfg))
    summary = harness.run_sweep(cfg, out, workers=args.workers,
                                make_figures=not args.no_figures)
    print(f"{summary['cells']} cells, {summary['failures']} failed; "
          f"outputs in {summary['out_dir']}")
    return 1 if summary["failures"] else 0


def _cmd_spectrum(args) -> int:
    request = {
        "dense_square": args.dense_square,
        "rect_width": args.rect_width,
        "rect_gamma": args.rect_gamma if args.rect_width else None,
        "a_sweep": args.a_sweep,
        "omega": args.omega if args.a_sweep else None,
        "pk_dup": args.pk_dup or None,
        "pk_n1": args.pk_n1 if args.pk_dup else None,
        "pk_dim": args.pk_dim if args.pk_dup else None,
        "trials": args.trials,
        "seed": args.seed,
    }
    if not (args.dense_square or args.rect_width or args.a_sweep or args.pk_dup):
        print("spectrum: choose at least one of --dense-square, --rect-width, "
              "--a-sweep, --pk-dup", file=sys.stderr)
        return 2
    cfg = {"kind": "spectrum"}
    cfg.update({f"spectrum.{k}": v for k, v in request.items() if v is not None})
    out = harness.resolve_out_dir(args.out, "spectrum", cfgmod.fingerprint(cfg))
    summary = harness.run_spectrum(request, out, make_figures=not args.no_figures)
    for key in ("mean_largest", "rect_mean_largest", "monotone_sets", "pk_dup_deviation"):
        if key in summary:
            print(f"{key}: {summary[key]}")
    print(f"outputs in {summary['out_dir']}")
    return 0


def _cmd_dataset(args) -> int:
    data = datasets.synthetic_task(args.kind, args.seed, args.n, args.height, args.width)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "binary":
        datasets.write_binary(out, data)
    else:
        datasets.write_delimited(out, data)
    print(f"wrote {args.n} samples ({data.num_classes} classes) to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "sizing": _cmd_sizing,
        "equiv": _cmd_equiv,
        "train": _cmd_train,
        "sweep": _cmd_sweep,
        "spectrum": _cmd_spectrum,
        "dataset": _cmd_dataset,
    }
    try:
        return handlers[args.command](args)
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
