"""Subcommands of `python -m eam_classifier.main`.

Each command is a `BaseCommand` subclass registered in `COMMANDS` under the
name typed on the command line.
"""
from .base_command import BaseCommand, usage_error  # noqa: I001
from .ablate import AblateCommand
from .evaluate import EvaluateCommand
from .gradcam import GradcamCommand
from .gradcheck import GradcheckCommand
from .synthesize import SynthesizeCommand
from .train import TrainCommand

COMMANDS: dict[str, type[BaseCommand]] = {
    command.NAME: command for command in (
        TrainCommand,
        EvaluateCommand,
        AblateCommand,
        GradcheckCommand,
        GradcamCommand,
        SynthesizeCommand,
    )
}
