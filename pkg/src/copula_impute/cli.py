"""Command-line interface: ``simulate``, ``fit``, ``impute`` and ``evaluate``.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .data import ColumnSchema, DataError, MixedDataMatrix, read_csv, read_csv_raw, read_schema, write_csv
from .em import EmConfig, NumericalError, default_threads, fit
from .evaluate import format_report, holdout_experiment, score, write_report
from .imputer import impute, impute_multiple
from .marginals import MarginalError
from .model_io import MARGINALS_FILE, SIGMA_FILE, load_model, read_matrix, save_model, write_matrix

log = logging.getLogger("copula_impute")


class UsageError(Exception):
    pass


def _em_flags(parser):
    g = parser.add_argument_group("EM options")
    g.add_argument("--tol", type=float, default=0.01, help="relative Frobenius change to stop at (default 0.01)")
    g.add_argument("--max-iter", type=int, default=50)
    g.add_argument("--ridge", type=float, default=1e-8)
    g.add_argument("--update-mode", choices=("gauss-seidel", "jacobi"), default="gauss-seidel")
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads for the E-step (default $COPULA_IMPUTE_THREADS or 1)")


def _schema_flags(parser):
    parser.add_argument("--schema", type=Path, help="file of 'column=<name> kind=<continuous|ordinal>' lines")
    parser.add_argument("--threshold", type=int, default=20,
                        help="integer columns with at most this many distinct values are ordinal")


def _config(args) -> EmConfig:
    return EmConfig(
        tol=args.tol, max_iter=args.max_iter, ridge=args.ridge, update_mode=args.update_mode,
        threads=args.threads if args.threads is not None else default_threads(),
    )


def _schema(args) -> ColumnSchema:
    if args.schema is not None:
        return read_schema(args.schema, args.threshold)
    return ColumnSchema(threshold=args.threshold)


def _existing(path: Path) -> Path:
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    return path


def _model_paths(args):
    if args.model_dir is not None:
        return args.model_dir / SIGMA_FILE, args.model_dir / MARGINALS_FILE
    if args.sigma is not None and args.marginals is not None:
        return args.sigma, args.marginals
    if args.sigma is not None or args.marginals is not None:
        raise UsageError("--sigma and --marginals must be given together")
    return None


def _load_input_for_model(path, model_paths):
    """Read ``path`` encoded against a saved model's kinds and label tables."""
    model, names, kinds, labels = load_model(_existing(model_paths[0]), _existing(model_paths[1]))
    header, raw = read_csv_raw(_existing(path))
    if header != names:
        raise DataError(f"{path}: columns {header} do not match the model's {names}")
    data = MixedDataMatrix.from_raw(raw, None, kinds, header, labels)
    return data, model


def cmd_simulate(args):
    fams = synthetic.default_families(args.p, args.levels)
    sigma = synthetic.random_correlation(args.p, args.seed)
    spec = synthetic.SyntheticSpec(args.n, fams, args.missing, args.seed)
    complete, _, cutoffs = synthetic.generate(sigma, spec)
    masked = synthetic.mask_mcar(complete, args.missing, args.seed + 1)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(complete, out / "complete.csv")
    write_csv(masked, out / "masked.csv")
    write_matrix(sigma, complete.column_names, out / "sigma_true.csv")
    with open(out / "cutoffs_true.csv", "w", encoding="utf-8") as fh:
        fh.write("column,cutoffs\n")
        for name, cuts in zip(complete.column_names, cutoffs):
            fh.write(f"{name},{' '.join(repr(float(c)) for c in cuts)}\n")
    print(f"wrote {out}/complete.csv, masked.csv, sigma_true.csv, cutoffs_true.csv")


def cmd_fit(args):
    data = read_csv(_existing(args.input), _schema(args))
    model = fit(data, _config(args))
    sig_path, marg_path = save_model(model, data.column_names, data.labels, args.out_dir)
    state = "converged" if model.converged else "stopped at max-iter"
    print(f"{state} after {model.iterations} iterations; wrote {sig_path} and {marg_path}")


def cmd_impute(args):
    config = _config(args)
    paths = _model_paths(args)
    if paths is None:
        data = read_csv(_existing(args.input), _schema(args))
        model = fit(data, config)
    else:
        data, model = _load_input_for_model(args.input, paths)
    result = impute(data, model, config)
    write_csv(result.completed, args.output)
    print(f"wrote {args.output}")
    if args.multiple > 1:
        multi = impute_multiple(data, model, args.multiple, args.seed, config=config)
        stem, suffix = args.output.with_suffix(""), args.output.suffix or ".csv"
        for d, draw in enumerate(multi.draws, 1):
            path = Path(f"{stem}_draw{d}{suffix}")
            write_csv(draw.completed, path)
        print(f"wrote {args.multiple} draws {stem}_draw*.csv")


def cmd_evaluate(args):
    config = _config(args)
    sigma_true = read_matrix(_existing(args.sigma_true))[1] if args.sigma_true else None
    if args.holdout is not None:
        data = read_csv(_existing(args.truth), _schema(args))
        reports = holdout_experiment(data, args.holdout, args.repeats, args.seed, config, sigma_true)
        if not any(r is not None for r in reports):
            raise NumericalError("every holdout repeat failed")
    else:
        if args.masked is None:
            raise UsageError("evaluate needs --masked (or --holdout RATIO)")
        masked = read_csv(_existing(args.masked), _schema(args))
        header, truth = read_csv_raw(_existing(args.truth))
        if header != list(masked.column_names) or truth.shape != masked.values.shape:
            raise DataError("truth and masked files differ in shape or columns")
        test = ~masked.mask & ~np.isnan(truth)
        paths = _model_paths(args)
        sigma_hat = None
        if args.imputed is not None:
            _, imputed = read_csv_raw(_existing(args.imputed))
        else:
            if paths is None:
                model = fit(masked, config)
            else:
                masked, model = _load_input_for_model(args.masked, paths)
            sigma_hat = model.sigma
            imputed = impute(masked, model, config).completed.decoded()
        if paths is not None and sigma_hat is None:
            sigma_hat = read_matrix(paths[0])[1]
        reports = [score(imputed, truth, test, masked, sigma_hat, sigma_true)]
    if args.output is not None:
        write_report(reports, args.output)
    print(format_report(reports))


def build_parser():
    parser = argparse.ArgumentParser(prog="copula-impute", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic mixed dataset with MCAR missingness")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=15)
    p.add_argument("--levels", type=int, default=5, help="levels of the ordinal columns")
    p.add_argument("--missing", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate marginals and copula correlation")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    _schema_flags(p)
    _em_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("impute", help="fill missing cells (fits first unless a model is given)")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--model-dir", type=Path, help="directory holding sigma.csv and marginals.json")
    p.add_argument("--sigma", type=Path)
    p.add_argument("--marginals", type=Path)
    p.add_argument("--multiple", type=int, default=1, help="also write this many sampled completions")
    p.add_argument("--seed", type=int, default=0)
    _schema_flags(p)
    _em_flags(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("evaluate", help="score imputations against held-out truth")
    p.add_argument("--truth", type=Path, required=True, help="complete CSV")
    p.add_argument("--masked", type=Path, help="CSV with the test cells blanked")
    p.add_argument("--imputed", type=Path, help="completed CSV to score (default: fit and impute)")
    p.add_argument("--model-dir", type=Path)
    p.add_argument("--sigma", type=Path)
    p.add_argument("--marginals", type=Path)
    p.add_argument("--sigma-true", type=Path, help="ground-truth correlation CSV")
    p.add_argument("--holdout", type=float, help="instead: mask this ratio of --truth repeatedly")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, help="per-repeat report CSV")
    _schema_flags(p)
    _em_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    if getattr(args, "multiple", 1) < 1:
        print("error: --multiple must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, DataError, MarginalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
