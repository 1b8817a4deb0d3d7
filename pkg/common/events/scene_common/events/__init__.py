# noqa: D104
from .parse import from_dict, to_dict
from .schemas import *  # noqa: F403
