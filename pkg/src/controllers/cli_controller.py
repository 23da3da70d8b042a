import argparse
import logging
import sys
from functools import wraps
from typing import Dict, List, Optional

from pydantic import ValidationError

from src.app.startup import scenario_use_cases
from src.domain.models.common_models import OutputFormat, Verdict
from src.domain.models.scenario_models import RunOverrides
from src.utils.display_utils import render_table
from src.utils.exceptions import CMPPLabException, ScenarioError

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def handle_exceptions(func):
    """
    Wraps a command so that every lab error becomes an exit code: scenario and
    validation problems (and any other lab error) give 2 after a logged diagnostic.
    """
    @wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)

        except ScenarioError as e:
            logger.error(f"Scenario error in '{func.__name__}': {e.message}")
            print(f"error: {e.message}", file=sys.stderr)
            return EXIT_USAGE

        except ValidationError as e:
            logger.error(f"Invalid input in '{func.__name__}': {e}")
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE

        except CMPPLabException as e:
            logger.error(f"Lab error in '{func.__name__}': {e.message}", exc_info=True)
            print(f"error: {e.message}", file=sys.stderr)
            return EXIT_USAGE
    return wrapper


def _param(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {name.strip()!r} needs a number, got {value!r}")


def _overrides(args: argparse.Namespace) -> RunOverrides:
    params: Dict[str, float] = dict(args.param or [])
    return RunOverrides(
        seed=args.seed,
        paths=args.paths,
        horizon=args.horizon,
        output=getattr(args, "output", None),
        format=OutputFormat(args.format) if getattr(args, "format", None) else None,
        params=params,
        workers=getattr(args, "workers", None),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab_main.py", description="Measure-change laboratory for compound mixed Poisson processes.")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_scenario_flags(sub: argparse.ArgumentParser):
        sub.add_argument("scenario", help="builtin scenario name or path to a scenario file")
        sub.add_argument("--seed", type=int)
        sub.add_argument("--paths", type=int)
        sub.add_argument("--horizon", type=float)
        sub.add_argument("--param", type=_param, action="append", metavar="NAME=VALUE", help="override a scenario parameter")

    run = commands.add_parser("run", help="run every job of a scenario and write its report")
    add_scenario_flags(run)
    run.add_argument("--output", help="report destination ('-' for stdout)")
    run.add_argument("--format", choices=[f.value for f in OutputFormat])
    run.add_argument("--workers", type=int, help="worker processes for path generation")

    premium = commands.add_parser("premium", help="premium densities and conditions of a scenario")
    add_scenario_flags(premium)
    premium.add_argument("--theta", type=float, action="append", help="theta at which p(P_theta) and p(Q_theta) are compared (repeatable)")

    commands.add_parser("list", help="list the builtin scenarios")
    return parser


@handle_exceptions
def run_command(args: argparse.Namespace) -> int:
    result = scenario_use_cases.run_scenario(args.scenario, _overrides(args))
    if result.destination in (None, "-"):
        sys.stdout.write(result.text)
    else:
        print(f"report: {result.destination}")
    failing = [row for row in result.rows if row.gating and row.verdict is not Verdict.PASS]
    for row in failing:
        print(f"{row.verdict.value}: {row.job} / {row.quantity} {row.text}".rstrip())
    print(f"{len(result.rows)} rows, {len(failing)} not passing")
    return EXIT_PASS if result.passed else EXIT_FAIL


@handle_exceptions
def premium_command(args: argparse.Namespace) -> int:
    result = scenario_use_cases.premium_only(args.scenario, _overrides(args), thetas=args.theta)
    print(render_table(result.rows, ("quantity", "estimate", "oracle", "verdict", "text")))
    return EXIT_PASS if result.passed else EXIT_FAIL


@handle_exceptions
def list_command(args: argparse.Namespace) -> int:
    for name, description in scenario_use_cases.catalog.describe().items():
        print(f"{name:16} {description}")
    return EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS
    commands = {"run": run_command, "premium": premium_command, "list": list_command}
    return commands[args.command](args)
