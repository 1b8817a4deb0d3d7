"""Utility functions for working with threads."""
import threading


class ExceptionThread(threading.Thread):
    """Thread that keeps its target's result or exception.

    After joining, the parent thread reads `result`, or re-raises
    `exception` when it is not None.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.exception = None
        self.result = None

    def run(self):
        try:
            if self._target is not None:
                self.result = self._target(*self._args, **self._kwargs)
        except Exception as exception:  # noqa: BLE001
            self.exception = exception
        finally:
            del self._target, self._args, self._kwargs
