"""Functions to record the termination of a command run."""
import signal
import sys
import threading
import traceback
from typing import Optional

from absl import logging
from scene_common import events
from scene_common.events import RunTerminationReason

from eam_classifier.event_logger import BaseEventLogger

EXIT_FAILURE = 1


class TerminationHandler:

    def __init__(self, command: str, event_logger: BaseEventLogger):
        self.command = command
        self.event_logger = event_logger
        self._lock = threading.Lock()
        self._termination_logged = False

    @property
    def termination_logged(self) -> bool:
        with self._lock:
            return self._termination_logged

    def log_termination(self,
                        reason: RunTerminationReason,
                        detail: Optional[str] = None,
                        save_traceback: bool = False) -> bool:
        """Logs the termination of the run.

        Internal state ensures the event is only logged once, whichever of
        the signal handler and the command's error path gets here first.

        Returns:
            True if the termination event was logged, False if the log was
            skipped because it was already logged.
        """
        with self._lock:
            if self._termination_logged:
                logging.info("Termination already logged. Skipping...")
                return False

            self._termination_logged = True

        traceback_str = traceback.format_exc() if save_traceback else None
        self.event_logger.log(
            events.RunTerminated(command=self.command,
                                 reason=reason,
                                 detail=detail,
                                 traceback=traceback_str))
        logging.info("Logged termination of '%s': %s", self.command,
                     reason.value)
        return True


def get_signal_handler(termination_handler: TerminationHandler):

    def handler(signum, _):
        logging.info("Caught signal %s.", signal.Signals(signum).name)

        logged_termination = termination_handler.log_termination(
            RunTerminationReason.INTERRUPTED)
        if logged_termination:
            sys.exit(EXIT_FAILURE)

    return handler


def setup_cleanup_handlers(termination_handler: TerminationHandler):

    signal_handler = get_signal_handler(termination_handler)

    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
