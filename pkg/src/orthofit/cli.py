import argparse
import logging

from orthofit.adapters.datasets import resolve
from orthofit.core.errors import InputError, OrthofitError
from orthofit.core.models import (
    MODEL_SPECS,
    FitConfig,
    ModelSpec,
    OptimizerConfig,
    RunConfig,
)
from orthofit.core.services import run_compare, run_decompose, run_fit, run_kurtosis

logger = logging.getLogger(__name__)


def _configure_logging(level: int) -> None:
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _parse_models(value: str) -> list[ModelSpec]:
    try:
        return [ModelSpec.from_key(key) for key in value.split(",") if key.strip()]
    except InputError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _parse_columns(value: str) -> list[str]:
    columns = [c.strip() for c in value.split(",") if c.strip()]
    if not columns:
        raise argparse.ArgumentTypeError("Expected a comma-separated list of column names.")
    return columns


def _add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        type=str,
        choices=("json", "table"),
        default="json",
        help="Output format: versioned JSON or markdown tables.",
    )
    parser.add_argument(
        "--out",
        type=str,
        help="Write the output to this file instead of standard output.",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Show detailed progress logs.",
    )


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--data",
        type=str,
        required=True,
        help="CSV file path, or the name of a bundled dataset ('microtus', 'swiss_soldiers').",
    )
    parser.add_argument(
        "--vars",
        type=_parse_columns,
        help="Comma-separated variable columns. Defaults to the bundled dataset's variables.",
    )
    parser.add_argument(
        "--group",
        type=str,
        help="Group label column. Defaults to the bundled dataset's group column.",
    )
    parser.add_argument(
        "--log",
        action="store_true",
        help="Analyze the variables on the natural-log scale (implied for bundled datasets).",
    )


def _add_fit_arguments(parser: argparse.ArgumentParser, default_models: str) -> None:
    parser.add_argument(
        "--models",
        type=_parse_models,
        default=default_models,
        help=f"Comma-separated models among: {', '.join(s.key for s in MODEL_SPECS)}.",
    )
    parser.add_argument(
        "--max-iter",
        type=int,
        default=5000,
        help="Nelder-Mead iteration budget per round.",
    )
    parser.add_argument(
        "--bfgs-max-iter",
        type=int,
        default=500,
        help="BFGS polishing iteration budget per round.",
    )
    parser.add_argument(
        "--f-tol",
        type=float,
        default=1e-10,
        help="Objective tolerance for Nelder-Mead convergence and restarts.",
    )
    parser.add_argument(
        "--g-tol",
        type=float,
        default=1e-5,
        help="Gradient infinity-norm tolerance for BFGS convergence.",
    )
    parser.add_argument(
        "--restarts",
        type=int,
        default=1,
        help="Relaunches from the incumbent while it keeps improving. Must be greater than or equal to 0.",
    )
    parser.add_argument(
        "--no-polish",
        action="store_true",
        help="Skip the BFGS polish after Nelder-Mead.",
    )
    parser.add_argument(
        "--fg-check",
        action="store_true",
        help="Cross-check the N-CPC eigenvectors against the Flury-Gautschi algorithm.",
    )
    parser.add_argument(
        "--no-progress",
        action="store_true",
        help="Hide the progress bar over model fits.",
    )


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="orthofit",
        description="Common principal components for normal and leptokurtic-normal groups",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    # Decompose command
    decompose_parser = subparsers.add_parser(
        "decompose",
        help="PLR-decompose an orthogonal matrix read from a file.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    decompose_parser.set_defaults(func=_handle_decompose)
    decompose_parser.add_argument(
        "matrix",
        type=str,
        help="File with one matrix row per line, whitespace- or comma-separated.",
    )
    _add_output_arguments(decompose_parser)

    # Fit command
    fit_parser = subparsers.add_parser(
        "fit",
        help="Fit CPC-family models to grouped data.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    fit_parser.set_defaults(func=_handle_fit)
    _add_data_arguments(fit_parser)
    _add_fit_arguments(fit_parser, default_models="n-cpc")
    _add_output_arguments(fit_parser)

    # Compare command
    compare_parser = subparsers.add_parser(
        "compare",
        help="Fit all models and compare them by AIC, BIC and LR tests.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    compare_parser.set_defaults(func=_handle_compare)
    _add_data_arguments(compare_parser)
    _add_fit_arguments(compare_parser, default_models=",".join(s.key for s in MODEL_SPECS))
    _add_output_arguments(compare_parser)

    # Kurtosis command
    kurtosis_parser = subparsers.add_parser(
        "kurtosis",
        help="Per-group empirical excess kurtosis and Mardia test.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    kurtosis_parser.set_defaults(func=_handle_kurtosis)
    _add_data_arguments(kurtosis_parser)
    kurtosis_parser.add_argument(
        "--corrected",
        action="store_true",
        help="Use the small-sample expectation d(d+2)(n-1)/(n+1) in the Mardia statistic.",
    )
    _add_output_arguments(kurtosis_parser)

    args = parser.parse_args(argv)
    args.prog = parser.prog

    if args.command in ("fit", "compare"):
        if not args.models:
            parser.error("--models must name at least one model.")
        if args.restarts < 0:
            parser.error("--restarts must be greater than or equal to 0.")

    args.log_level = logging.DEBUG if args.verbose else logging.INFO

    return args


def _build_config(args: argparse.Namespace) -> RunConfig:
    path, bundled = resolve(args.data)
    variables = args.vars or (list(bundled.variables) if bundled else None)
    group_column = args.group or (bundled.group_column if bundled else None)
    if not variables:
        raise InputError("--vars is required for a CSV file.")
    if not group_column:
        raise InputError("--group is required for a CSV file.")
    if len(variables) < 2:
        raise InputError("At least two variables are required.")

    fit_config = FitConfig()
    models: list[ModelSpec] = []
    if args.command in ("fit", "compare"):
        fit_config = FitConfig(
            nelder_mead=OptimizerConfig.nelder_mead(
                max_iter=args.max_iter, f_tol=args.f_tol, restarts=args.restarts
            ),
            bfgs=None
            if args.no_polish
            else OptimizerConfig.bfgs(
                max_iter=args.bfgs_max_iter, f_tol=args.f_tol, g_tol=args.g_tol, restarts=args.restarts
            ),
            fg_check=bool(args.fg_check),
        )
        models = list(args.models)

    return RunConfig(
        input_path=path,
        group_column=group_column,
        variables=list(variables),
        log_transform=bool(args.log or (bundled is not None and bundled.log_transform)),
        models=models,
        fit=fit_config,
        output_format=str(args.format),
        output_path=args.out,
        corrected=bool(getattr(args, "corrected", False)),
        progress=not getattr(args, "no_progress", False),
    )


def _handle_decompose(args: argparse.Namespace) -> None:
    run_decompose(args.matrix, args.format, args.out)


def _handle_fit(args: argparse.Namespace) -> None:
    run_fit(_build_config(args))


def _handle_compare(args: argparse.Namespace) -> None:
    run_compare(_build_config(args))


def _handle_kurtosis(args: argparse.Namespace) -> None:
    run_kurtosis(_build_config(args))


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args.log_level)

    try:
        args.func(args)
        return 0
    except OrthofitError as e:
        if args.verbose:
            logger.exception("%s", e)
        else:
            logger.error("%s: error: %s", args.prog, e)
        return int(getattr(e, "exit_code", 1))
    except KeyboardInterrupt:
        if args.verbose:
            logger.error("%s: interrupted", args.prog)
        return 130
    except Exception:
        if args.verbose:
            logger.exception("Unhandled error")
        else:
            logger.error("%s: unexpected error; re-run with --verbose for traceback.", args.prog)
        return 1
