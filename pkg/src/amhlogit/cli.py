"""Command line entry point: ``amhlogit {fit,predict,assoc,simulate}``.

Exit codes: 0 success, 1 the optimiser did not converge, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .data import DataError, ModelSpec, ingest_csv
from .estimation import FitResult, ParamVector, fit
from .report import assoc_report, dumps, fit_report, predict_report, render

EXIT_OK, EXIT_NONCONVERGED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _names(text: str | None) -> tuple:
    if not text:
        return ()
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _add_data_args(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--data", required=required, help="UTF-8 CSV with a header row")
    p.add_argument("--k", type=int, help="number of ordinal levels K (y coded 1..K)")
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-covs", help="comma-separated covariates for the binary margin")
    p.add_argument("--y-covs", help="comma-separated covariates for the ordinal margin")
    p.add_argument("--omega-covs", help="comma-separated factors for the association")
    p.add_argument("--weight", help="column of frequency weights")
    p.add_argument("--random-effects", action="store_true")
    p.add_argument("--subject", help="subject identifier column")
    p.add_argument("--gh-order", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report (or CSV for simulate) here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amhlogit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="maximum likelihood fit")
    _add_data_args(p)
    p.add_argument("--shared", action="store_true", help="one random intercept shared by both margins")
    p.add_argument("--plain-gh", action="store_true", help="non-adaptive quadrature nodes")

    p = sub.add_parser("predict", help="expected cell counts and chi-square")
    _add_data_args(p)
    p.add_argument("--fit", required=True, help="JSON report written by 'fit'")

    p = sub.add_parser("assoc", help="odds ratios and latent cross-moment")
    _add_data_args(p, required=False)
    p.add_argument("--fit", required=True, help="JSON report written by 'fit'")
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--sigma-y", type=float, default=1.0)

    p = sub.add_parser("simulate", help="draw a dataset from given parameters")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--tau", required=True, help="comma-separated increasing thresholds; write --tau=-1,0.5 when the first is negative")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent", action="store_true", help="append the latent pair xstar, ystar")
    p.add_argument("--out")
    return parser


def _spec(args) -> ModelSpec:
    if args.k is None:
        raise InputError("--k is required")
    try:
        return ModelSpec(
            k_levels=args.k,
            x_column=args.x_col,
            y_column=args.y_col,
            z1_columns=_names(args.x_covs),
            z2_columns=_names(args.y_covs),
            z_omega_columns=_names(args.omega_covs),
            weight_column=args.weight,
            random_effects=args.random_effects,
            subject_column=args.subject,
            gh_order=args.gh_order,
            shared=getattr(args, "shared", False),
            seed=args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_fit(path) -> FitResult:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return FitResult.from_dict(doc["fit"] if "fit" in doc else doc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read fit report {path}: {exc}") from None


def _emit(doc: dict, args, stdout) -> None:
    if args.out:
        Path(args.out).write_text(dumps(doc), encoding="utf-8")
    stdout.write(render(doc))


def cmd_fit(args, stdout) -> int:
    spec = _spec(args)
    data = ingest_csv(args.data, spec)
    if spec.random_effects:
        from .mixed import RandomEffectSpec, fit_mixed

        result = fit_mixed(data, spec, RandomEffectSpec(order=spec.gh_order, shared=spec.shared),
                           adaptive=not args.plain_gh)
    else:
        result = fit(data, spec)
    _emit(fit_report(result, data, seed=spec.seed), args, stdout)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_predict(args, stdout) -> int:
    result = _load_fit(args.fit)
    if args.k is None:
        args.k = result.k_levels
    data = ingest_csv(args.data, _spec(args))
    try:
        doc = predict_report(result, data, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _emit(doc, args, stdout)
    return EXIT_OK


def cmd_assoc(args, stdout) -> int:
    result = _load_fit(args.fit)
    data = None
    if args.data:
        if args.k is None:
            args.k = result.k_levels
        data = ingest_csv(args.data, _spec(args))
    if args.sigma_x <= 0 or args.sigma_y <= 0:
        raise InputError("--sigma-x and --sigma-y must be positive")
    _emit(assoc_report(result, data, args.sigma_x, args.sigma_y, seed=args.seed), args, stdout)
    return EXIT_OK


def cmd_simulate(args, stdout) -> int:
    from .simulate import simulate_dataset

    tau = np.asarray(_floats(args.tau))
    if args.k is not None and args.k != tau.size + 1:
        raise InputError(f"--k {args.k} needs {args.k - 1} thresholds, got {tau.size}")
    if not 0.0 <= args.omega < 1.0:
        raise InputError("the sampler needs omega in [0, 1)")
    if args.n < 1:
        raise InputError("--n must be positive")
    try:
        params = ParamVector(theta=args.theta, tau=tau, zeta=[np.arctanh(args.omega)])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    data, latent = simulate_dataset(params, n=args.n, seed=args.seed, latent=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.latent:
        w.writerow(["x", "y", "xstar", "ystar"])
        for x, y, (xs, ys) in zip(data.x, data.y, latent):
            w.writerow([int(x), int(y), repr(float(xs)), repr(float(ys))])
    else:
        w.writerow(["x", "y"])
        w.writerows(zip(data.x.tolist(), data.y.tolist()))
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "assoc": cmd_assoc, "simulate": cmd_simulate}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, stdout)
    except (InputError, DataError) as exc:
        stderr.write(f"amhlogit: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
