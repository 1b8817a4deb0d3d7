"""Command-line entry point of the scene classifier.

Usage:
  python -m eam_classifier.main <command> [flags]

Commands: train, evaluate, ablate, gradcheck, gradcam, synthesize. Flags can
be written with dashes or underscores (`--no-conv-features`,
`--noconv_features`) and may also come from a `--config` key=value file;
explicit flags win over the file. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""
import sys

import pydantic
from absl import app, flags, logging

from eam_classifier import cleanup, run_config, tensor_core
from eam_classifier.commands import COMMANDS, usage_error
from eam_classifier.commands.base_command import EXIT_USAGE
from eam_classifier.event_logger import FileEventLogger, LoggingEventLogger

FLAGS = flags.FLAGS
run_config.define_flags(FLAGS)


def parse_flags(argv: list[str]) -> list[str]:
    """Parses dashed or underscored flags; returns the positional args."""
    try:
        return FLAGS(run_config.normalize_argv(argv, FLAGS))
    except flags.Error as e:
        sys.stderr.write(f"FATAL Flags parsing error: {e}\n")
        sys.stderr.write("Pass --helpfull to see help on flags.\n")
        sys.exit(EXIT_USAGE)


def main(argv):
    if len(argv) != 2 or argv[1] not in COMMANDS:
        raise usage_error(f"Expected one command out of "
                          f"{', '.join(COMMANDS)}, got {argv[1:]}")
    command_name = argv[1]

    try:
        config = run_config.RunConfig.from_flags(FLAGS)
    except (pydantic.ValidationError, run_config.ConfigFileError) as e:
        raise usage_error(str(e)) from e

    tensor_core.set_precision(config.precision)
    if config.out:
        event_logger = FileEventLogger(config.out)
    else:
        event_logger = LoggingEventLogger()

    termination_handler = cleanup.TerminationHandler(
        command=command_name, event_logger=event_logger)
    cleanup.setup_cleanup_handlers(termination_handler)

    logging.info("Running '%s' (precision %s)", command_name,
                 config.precision)
    command = COMMANDS[command_name](config, event_logger, termination_handler)
    return command.run()


if __name__ == "__main__":
    logging.set_verbosity(logging.INFO)
    app.run(main, flags_parser=parse_flags)
