"""This file provides an abstract class to implement the CLI commands.

A command receives the resolved `RunConfig`, does its work in `execute` and
records its output files in `self.outputs`. `run` wraps `execute` with the
run events and maps failures to exit codes.
"""
import json
import os
from abc import ABC, abstractmethod
from typing import Optional

import psutil
import pydantic
from absl import app, logging
from scene_common import events
from scene_common.events import RunTerminationReason

from eam_classifier import utils
from eam_classifier.cleanup import EXIT_FAILURE, TerminationHandler
from eam_classifier.configs import ModelConfig
from eam_classifier.event_logger import BaseEventLogger
from eam_classifier.run_config import RunConfig, parse_synthetic
from eam_classifier.training import datasets

EXIT_SUCCESS = 0
EXIT_USAGE = 2


def usage_error(message: str) -> app.UsageError:
    return app.UsageError(message, exitcode=EXIT_USAGE)


class BaseCommand(ABC):
    """Base class of the `main` subcommands.

    Concrete commands implement `execute`, which returns the exit code.
    Invalid user input is reported by raising `usage_error(...)`; any other
    exception is a runtime failure.
    """
    NAME = ""

    def __init__(self, config: RunConfig, event_logger: BaseEventLogger,
                 termination_handler: TerminationHandler):
        self.config = config
        self.event_logger = event_logger
        self.termination_handler = termination_handler
        self.outputs: list[str] = []

    @abstractmethod
    def execute(self) -> int:
        raise NotImplementedError

    def run(self) -> int:
        """Method used to run the command."""
        self.event_logger.log(
            events.RunStarted(command=self.NAME,
                              config=json.loads(
                                  self.config.json(by_alias=True))))
        try:
            exit_code, elapsed = utils.execution_time_with_result(
                self.execute)()
        except app.UsageError as e:
            self.termination_handler.log_termination(
                RunTerminationReason.USAGE, str(e))
            raise
        except Exception as e:  # noqa: BLE001
            logging.exception("Caught exception: %s", str(e))
            detail = utils.get_exception_root_cause_message(e)
            self.termination_handler.log_termination(
                RunTerminationReason.ERROR, detail, save_traceback=True)
            return EXIT_FAILURE

        logging.info("Command '%s' finished in %.1f s with exit code %d",
                     self.NAME, elapsed, exit_code)
        self.event_logger.log(
            events.RunFinished(command=self.NAME,
                               exit_code=exit_code,
                               outputs=self.outputs))
        return exit_code

    def output_path(self, filename: str) -> str:
        """Path of `filename` inside `--out`, recorded as a run output."""
        out_dir = self.require("out")
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, filename)
        self.outputs.append(path)
        return path

    def require(self, field: str, flag: Optional[str] = None):
        value = getattr(self.config, field)
        if value is None:
            raise usage_error(
                f"Command '{self.NAME}' requires --{flag or field}")
        return value

    def load_samples(self) -> list[datasets.SceneSample]:
        """Loads `--data` or generates `--synthetic`; exactly one is set."""
        synthetic, data = self.config.synthetic, self.config.data
        if (synthetic is None) == (data is None):
            raise usage_error("Give exactly one of --synthetic K,N,EXTENT and "
                              "--data DIR")
        if data is not None:
            samples = datasets.load_dataset(data)
        else:
            k, n, extent = parse_synthetic(synthetic)
            try:
                samples = datasets.synth_dataset(k, n, extent, self.config.seed)
            except ValueError as e:
                raise usage_error(f"--synthetic: {e}") from e

        height, width = samples[0].extent
        if height != width:
            raise datasets.DatasetError(
                data, f"images must be square, got {height}x{width}")
        return samples

    def model_config(self, num_classes: int, extent: int,
                     **overrides) -> ModelConfig:
        try:
            return self.config.model_config(num_classes, extent, **overrides)
        except pydantic.ValidationError as e:
            raise usage_error(f"Invalid model configuration: {e}") from e

    @property
    def jobs(self) -> int:
        cpus = psutil.cpu_count(logical=True) or 1
        if self.config.jobs > cpus:
            logging.warning("Capping --jobs %d to %d CPUs", self.config.jobs,
                            cpus)
        return min(self.config.jobs, cpus)

    def report(self, line: str) -> None:
        """Console output of a result line."""
        print(line, flush=True)
