import abc
import json
import os
import threading

from absl import logging
from scene_common import events
from scene_common.events.schemas import Event
from typing_extensions import override

from eam_classifier import utils

EVENTS_FILENAME = "events.jsonl"


class BaseEventLogger(abc.ABC):

    @abc.abstractmethod
    def log(self, event):
        pass


class LoggingEventLogger(BaseEventLogger):
    """Writes events to the absl log only."""

    @override
    def log(self, event: Event):
        event.elapsed_time_s = (utils.now_utc() -
                                event.timestamp).total_seconds()
        logging.info("Event: %s", event)


class FileEventLogger(BaseEventLogger):
    """Appends one JSON object per event to `<out_dir>/events.jsonl`.

    Several training threads can share one logger.
    """

    def __init__(self, out_dir: str, filename: str = EVENTS_FILENAME):
        os.makedirs(out_dir, exist_ok=True)
        self.path = os.path.join(out_dir, filename)
        self._lock = threading.Lock()

    @override
    def log(self, event: Event):
        logging.info("Logging event: %s", event)
        line = json.dumps(events.to_dict(event))
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")

    def read(self) -> list[Event]:
        if not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [
                events.from_dict(json.loads(line))
                for line in f
                if line.strip()
            ]
