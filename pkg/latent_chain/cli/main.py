import argparse
import sys
from collections.abc import Sequence

from latent_chain.cli.commands import (
    EXIT_INPUT_ERROR,
    cmd_decode,
    cmd_fit,
    cmd_forecast,
    cmd_simulate,
)
from latent_chain.core.errors import LatentChainError
from latent_chain.utils import cerror, set_log_level


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        msg = f"expected a positive integer, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return number


def build_parser() -> argparse.ArgumentParser:
    """Builds the ``latent-chain`` argument parser."""
    parser = argparse.ArgumentParser(
        prog="latent-chain",
        description="Fit, simulate, decode and forecast latent Markov models.",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Log optimizer progress."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add(
        name: str, summary: str, data: bool, estimates: bool
    ) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=summary)
        sub.add_argument("--config", required=True, help="The TOML run configuration.")
        if data:
            sub.add_argument("--data", required=True, help="The CSV dataset.")
        if estimates:
            sub.add_argument(
                "--estimates", required=True, help="The fit.json of a previous fit."
            )
        sub.add_argument("--out", default=None, help="The output directory.")
        return sub

    fit = add("fit", "Fit a model by maximum likelihood.", True, False)
    fit.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        help="Worker threads (default: [optimizer] threads).",
    )
    fit.add_argument(
        "--per-id", action="store_true", help="Fit every sequence separately."
    )

    simulate = add("simulate", "Simulate a dataset.", False, False)
    simulate.add_argument("--seed", type=int, default=None, help="The root seed.")
    simulate.add_argument(
        "--threads", type=_positive_int, default=None, help="Worker threads."
    )

    add("decode", "Decode the most probable state sequence.", True, True)

    forecast = add("forecast", "Forecast the next observation.", True, True)
    forecast.add_argument(
        "--level", type=float, default=None, help="The lower quantile level."
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """
    Runs the command line.

    Returns:
        int:
            0 on success, 1 on input errors, 2 if a fit did not converge.

    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_log_level("INFO")
    try:
        if args.command == "fit":
            return cmd_fit(args.config, args.data, args.out, args.threads, args.per_id)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed, args.threads)
        if args.command == "decode":
            return cmd_decode(args.config, args.data, args.estimates, args.out)
        return cmd_forecast(
            args.config, args.data, args.estimates, args.out, args.level
        )
    except (LatentChainError, ValueError) as err:
        cerror(str(err))
        return EXIT_INPUT_ERROR
    except OSError as err:
        cerror(f"{err.filename}: {err.strerror}")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
