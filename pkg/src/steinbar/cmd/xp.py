import json
import sys
from pathlib import Path
from typing import Callable

import fire
from loguru import logger
from pydantic import ValidationError

from steinbar.errors import SteinbarError
from steinbar.lib.xp import runner
from steinbar.lib.xp.config import ExperimentConfig, dump_experiment, load_experiment
from steinbar.utils.config import get_config

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

Runner = Callable[[ExperimentConfig, Path], bool]


def setup_logging(level: str | None = None):
    logger.remove()
    logger.add(sys.__stderr__, level=level or get_config("logging")["level"])


def _log_validation_error(err: ValidationError):
    for e in err.errors():
        location = ".".join(str(part) for part in e["loc"]) or "<root>"
        logger.error(f"config {location}: {e['msg']}")


def run_command(
    run: Runner,
    config: str,
    seed: int | None = None,
    events: int | None = None,
    burn_in: int | None = None,
    jobs: int | None = None,
    out_dir: str | None = None,
    print_config: bool = False,
) -> int:
    """
    Load the experiment document, apply the flags and run one subcommand.
    Returns:
        int: 0 when every enabled assertion passed, 1 when one failed, 2 for
            configuration and precondition errors.
    """
    overrides = {
        "run.seed": seed,
        "run.events": events,
        "run.burn_in": burn_in,
        "run.jobs": jobs,
    }
    try:
        experiment = load_experiment(config, overrides)
    except ValidationError as e:
        _log_validation_error(e)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"cannot read {config}: {e}")
        return EXIT_CONFIG
    if print_config:
        print(dump_experiment(experiment))
        return EXIT_PASS

    target = runner.resolve_out_dir(experiment, out_dir)
    logger.info(f"{run.__name__} {experiment.config_id}: writing to {target}")
    try:
        passed = run(experiment, target)
    except ValueError as e:
        # unstable models, ties, degenerate diffusions, too few sweep points
        logger.error(f"{experiment.config_id}: {e}")
        return EXIT_CONFIG
    except SteinbarError as e:
        logger.exception(f"{experiment.config_id}: {e}")
        return EXIT_FAIL
    return EXIT_PASS if passed else EXIT_FAIL


def _subcommand(run: Runner, doc: str):
    def command(
        config: str,
        seed: int | None = None,
        events: int | None = None,
        burn_in: int | None = None,
        jobs: int | None = None,
        out_dir: str | None = None,
        print_config: bool = False,
    ):
        sys.exit(
            run_command(run, config, seed, events, burn_in, jobs, out_dir, print_config)
        )

    command.__name__ = run.__name__.removeprefix("run_")
    command.__doc__ = doc
    return command


def plot(out_dir: str):
    """Rebuild the SVG figures from the CSV files in OUT_DIR."""
    sys.exit(EXIT_PASS if runner.run_plot(Path(out_dir)) else EXIT_FAIL)


def main():
    """Main entry point for the xp command-line interface"""
    setup_logging()
    fire.Fire(
        {
            "simulate": _subcommand(runner.run_simulate, "Raw accumulator report."),
            "identities": _subcommand(
                runner.run_identities, "Rate-conservation identities and Palm inversion."
            ),
            "bar": _subcommand(runner.run_bar, "Full and compensated BAR residuals."),
            "stein": _subcommand(runner.run_stein, "Stein solutions and their factors."),
            "bound": _subcommand(runner.run_bound, "Error bound for the exponential law."),
            "w1": _subcommand(runner.run_w1, "Empirical W1 against the error bound."),
            "sweep": _subcommand(runner.run_sweep, "Utilization sweep and decay fit."),
            "rbm": _subcommand(runner.run_rbm, "Tandem SRBM simulation and checks."),
            "plot": plot,
        }
    )


if __name__ == "__main__":
    main()
