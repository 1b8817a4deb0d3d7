"""Schemas for the events."""
from .event import Event
from .runs import *  # noqa: F403
from .training import *  # noqa: F403
