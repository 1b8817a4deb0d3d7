"""Events issued by the command-line runs."""
import enum
from typing import Any, Optional

import scene_common.events.schemas as event_schemas


class RunTerminationReason(enum.Enum):
    INTERRUPTED = "interrupted"
    ERROR = "error"
    USAGE = "usage"


# Shared properties of run events.
class RunEvent(event_schemas.Event):
    command: str


class RunStarted(RunEvent):
    config: dict[str, Any]


class RunFinished(RunEvent):
    exit_code: int
    outputs: list[str] = []


class RunTerminated(RunEvent):
    reason: RunTerminationReason
    detail: Optional[str]
    traceback: Optional[str] = None


class CheckpointSaved(RunEvent):
    path: str
    num_tensors: int
